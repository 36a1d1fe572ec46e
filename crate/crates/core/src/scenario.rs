//! Declarative scenario documents: one JSON file binds topology, firewall
//! policy, process twins, PLC programs, the NPC population, and the campaign
//! into a reproducible run definition.
//!
//! Validation is total: [`ScenarioDoc::validate`] returns every problem it
//! can find (never a partial acceptance), so materialization cannot fail on
//! a validated document.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hosts::{NpcRole, OsFamily, SecretGrade, Service, Susceptibility};
use crate::net::{Cidr, RuleAction, SegmentId, Transport};
use crate::plc::ladder::LadderProgram;
use crate::telemetry::export::fnv1a64;

pub const DEFAULT_SCENARIO_JSON: &str = include_str!("../assets/default_scenario.json");
pub const KNOWN_PLANS: [&str; 1] = ["blackenergy-seven-phase"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario failed validation with {} issue(s):\n{}", .0.len(), .0.join("\n"))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunCfg {
    /// Absent seeds fall back to the runner's default chain
    /// (flag > document > environment > 42).
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_duration_s")]
    pub duration_s: u64,
    #[serde(default = "default_working_hours")]
    pub working_day_hours: u8,
    /// Multiplies every NPC action frequency (stress profile sets 10).
    #[serde(default = "default_one")]
    pub npc_frequency_multiplier: u32,
}

fn default_duration_s() -> u64 {
    3600
}
fn default_working_hours() -> u8 {
    8
}
fn default_one() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentDoc {
    pub id: SegmentId,
    pub cidr: String,
    #[serde(default)]
    pub vlans: Vec<String>,
    #[serde(default = "default_intra_latency")]
    pub intra_latency_us: u64,
}

fn default_intra_latency() -> u64 {
    974
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkDoc {
    pub a: SegmentId,
    pub b: SegmentId,
    pub latency_us: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleDoc {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub transport: Transport,
    #[serde(default)]
    pub dst_port: Option<u16>,
    pub action: RuleAction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirewallDoc {
    pub id: String,
    pub interfaces: Vec<Vec<SegmentId>>,
    pub rules: Vec<RuleDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub segments: Vec<SegmentDoc>,
    pub links: Vec<LinkDoc>,
    pub firewalls: Vec<FirewallDoc>,
    pub taps: Vec<SegmentId>,
    #[serde(default = "default_jitter")]
    pub jitter_frac: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_kbps: u64,
}

fn default_jitter() -> f64 {
    0.10
}
fn default_bandwidth() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HostDoc {
    pub id: String,
    pub segment: SegmentId,
    pub ip: Ipv4Addr,
    pub os: OsFamily,
    #[serde(default)]
    pub services: Vec<String>,
    #[serde(default)]
    pub domain: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CredentialDoc {
    pub principal: String,
    pub grade: SecretGrade,
    pub stored_on: Vec<String>,
    #[serde(default)]
    pub kerberoastable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlcDoc {
    pub id: String,
    pub host: String,
    pub twin: String,
    #[serde(default = "default_scan_ms")]
    pub scan_ms: u64,
    #[serde(default)]
    pub holding_init: BTreeMap<String, u16>,
    pub program: Vec<String>,
}

fn default_scan_ms() -> u64 {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwinDoc {
    pub id: String,
    pub host: String,
    pub scene: String,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    #[serde(default)]
    pub spawn_interval_ms: Option<u64>,
    #[serde(default)]
    pub cnc_cycle_ms: Option<u64>,
}

fn default_tick_ms() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HmiDoc {
    pub id: String,
    pub host: String,
    pub plc: String,
    #[serde(default = "default_hmi_poll")]
    pub poll_ms: u64,
    /// Issue the operator start command shortly after the run begins.
    #[serde(default = "default_true")]
    pub startup_command: bool,
}

fn default_hmi_poll() -> u64 {
    250
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistorianDoc {
    pub id: String,
    pub host: String,
    pub plc: String,
    #[serde(default = "default_historian_poll")]
    pub poll_ms: u64,
}

fn default_historian_poll() -> u64 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayDoc {
    pub plc: String,
    #[serde(default = "default_gateway_poll")]
    pub poll_ms: u64,
}

fn default_gateway_poll() -> u64 {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublishDoc {
    pub topic: String,
    pub interval_ms: u64,
    /// What the payload carries: weight_v | exit_counts | run_status.
    pub source: String,
    #[serde(default)]
    pub retain: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MqttClientDoc {
    pub id: String,
    pub host: String,
    #[serde(default = "default_keepalive")]
    pub keep_alive_s: u16,
    #[serde(default)]
    pub subscriptions: Vec<String>,
    #[serde(default)]
    pub publishes: Vec<PublishDoc>,
    #[serde(default)]
    pub gateway: Option<GatewayDoc>,
}

fn default_keepalive() -> u16 {
    60
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MqttDoc {
    pub broker_host: String,
    pub clients: Vec<MqttClientDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NpcDoc {
    pub name: String,
    pub role: NpcRole,
    pub host: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServicesDoc {
    pub mail_host: String,
    pub intranet_host: String,
    pub share_host: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignDoc {
    pub enabled: bool,
    pub plan: String,
    pub attacker_host: String,
    pub victim: String,
    pub lateral_host: String,
    pub jump_host: String,
    pub ot_plc: String,
    pub iiot_plc: String,
    pub mqtt_control_topic: String,
    pub threshold_register: u16,
    pub threshold_value: u16,
    pub hmi_credential: String,
    pub admin_credential: String,
    #[serde(default = "default_step_ms")]
    pub step_ms: u64,
    #[serde(default = "default_beacon_ms")]
    pub beacon_interval_ms: u64,
    #[serde(default = "default_impair_ms")]
    pub impair_window_ms: u64,
}

fn default_step_ms() -> u64 {
    2000
}
fn default_beacon_ms() -> u64 {
    60_000
}
fn default_impair_ms() -> u64 {
    600_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub schema_version: String,
    pub name: String,
    pub run: RunCfg,
    pub topology: TopologyDoc,
    pub hosts: Vec<HostDoc>,
    pub credentials: Vec<CredentialDoc>,
    pub plcs: Vec<PlcDoc>,
    pub twins: Vec<TwinDoc>,
    pub hmis: Vec<HmiDoc>,
    pub historians: Vec<HistorianDoc>,
    pub mqtt: MqttDoc,
    pub npcs: Vec<NpcDoc>,
    pub services: ServicesDoc,
    pub campaign: CampaignDoc,
}

impl ScenarioDoc {
    /// Loads and fully validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let bytes = std::fs::read(path)?;
        Self::from_json(&bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ScenarioError> {
        let doc: ScenarioDoc = serde_json::from_slice(bytes)?;
        let issues = doc.validate();
        if issues.is_empty() {
            Ok(doc)
        } else {
            Err(ScenarioError::Validation(issues))
        }
    }

    /// The bundled six-segment enterprise scenario.
    pub fn default_scenario() -> Self {
        Self::from_json(DEFAULT_SCENARIO_JSON.as_bytes())
            .expect("bundled scenario must validate")
    }

    pub fn to_json(&self) -> serde_json::Result<Vec<u8>> {
        serde_json::to_vec_pretty(self)
    }

    /// Stable content hash over the canonical serialization.
    pub fn content_hash(&self) -> u64 {
        fnv1a64(&serde_json::to_vec(self).expect("scenario serializes"))
    }

    /// Multiplies user and poll rates by ten, mirroring a stress soak.
    pub fn apply_stress_profile(&mut self) {
        self.run.npc_frequency_multiplier = self.run.npc_frequency_multiplier.saturating_mul(10);
        for plc in &mut self.plcs {
            plc.scan_ms = (plc.scan_ms / 10).max(5);
        }
        for twin in &mut self.twins {
            twin.tick_ms = (twin.tick_ms / 10).max(10);
        }
        for hmi in &mut self.hmis {
            hmi.poll_ms = (hmi.poll_ms / 10).max(25);
        }
        for historian in &mut self.historians {
            historian.poll_ms = (historian.poll_ms / 10).max(100);
        }
        for client in &mut self.mqtt.clients {
            if let Some(gw) = &mut client.gateway {
                gw.poll_ms = (gw.poll_ms / 10).max(50);
            }
            for publish in &mut client.publishes {
                publish.interval_ms = (publish.interval_ms / 10).max(50);
            }
        }
    }

    fn host(&self, id: &str) -> Option<&HostDoc> {
        self.hosts.iter().find(|h| h.id == id)
    }

    /// Every problem in the document, with a path-like prefix per issue.
    pub fn validate(&self) -> Vec<String> {
        let mut issues: Vec<String> = Vec::new();

        // --- topology ---
        let mut seg_cidrs: BTreeMap<SegmentId, Cidr> = BTreeMap::new();
        for (i, seg) in self.topology.segments.iter().enumerate() {
            let path = format!("topology.segments[{i}]");
            match Cidr::parse(&seg.cidr) {
                Ok(cidr) => {
                    for (other, other_cidr) in &seg_cidrs {
                        if other_cidr.overlaps(&cidr) {
                            issues.push(format!("{path}: prefix overlaps segment {other}"));
                        }
                    }
                    if seg_cidrs.insert(seg.id, cidr).is_some() {
                        issues.push(format!("{path}: segment {} defined twice", seg.id));
                    }
                    for vlan in &seg.vlans {
                        match Cidr::parse(vlan) {
                            Ok(v) => {
                                if !cidr.overlaps(&v) || v.prefix_len < cidr.prefix_len {
                                    issues.push(format!(
                                        "{path}: vlan {vlan} outside segment prefix"
                                    ));
                                }
                            }
                            Err(_) => issues.push(format!("{path}: bad vlan prefix '{vlan}'")),
                        }
                    }
                }
                Err(_) => issues.push(format!("{path}: bad cidr '{}'", seg.cidr)),
            }
            if seg.intra_latency_us == 0 {
                issues.push(format!("{path}: intra latency must be > 0"));
            }
        }
        for (i, link) in self.topology.links.iter().enumerate() {
            let path = format!("topology.links[{i}]");
            for seg in [link.a, link.b] {
                if !seg_cidrs.contains_key(&seg) {
                    issues.push(format!("{path}: unknown segment {seg}"));
                }
            }
            if link.latency_us == 0 {
                issues.push(format!("{path}: latency must be > 0"));
            }
        }
        let mut taps = BTreeSet::new();
        for tap in &self.topology.taps {
            if !seg_cidrs.contains_key(tap) {
                issues.push(format!("topology.taps: unknown segment {tap}"));
            }
            if !taps.insert(*tap) {
                issues.push(format!("topology.taps: duplicate tap on {tap}"));
            }
        }
        if !(0.0..1.0).contains(&self.topology.jitter_frac) {
            issues.push("topology.jitter_frac: must be in [0, 1)".into());
        }
        for (i, fw) in self.topology.firewalls.iter().enumerate() {
            let path = format!("topology.firewalls[{i}]");
            for group in &fw.interfaces {
                for seg in group {
                    if !seg_cidrs.contains_key(seg) {
                        issues.push(format!(
                            "{path}: interface references unknown segment {seg}"
                        ));
                    }
                }
            }
            for (j, rule) in fw.rules.iter().enumerate() {
                for (field, text) in [("src", &rule.src), ("dst", &rule.dst)] {
                    if Cidr::parse(text).is_err() {
                        issues.push(format!(
                            "{path}.rules[{j}]: bad {field} prefix '{text}'"
                        ));
                    }
                }
            }
        }

        // --- hosts ---
        let mut host_ids = BTreeSet::new();
        let mut ips = BTreeSet::new();
        for (i, host) in self.hosts.iter().enumerate() {
            let path = format!("hosts[{i}] ({})", host.id);
            if !host_ids.insert(host.id.clone()) {
                issues.push(format!("{path}: duplicate host id"));
            }
            if !ips.insert(host.ip) {
                issues.push(format!("{path}: duplicate address {}", host.ip));
            }
            match seg_cidrs.get(&host.segment) {
                Some(cidr) if !cidr.contains(host.ip) => {
                    issues.push(format!(
                        "{path}: {} outside segment {}",
                        host.ip, host.segment
                    ));
                }
                None => issues.push(format!("{path}: unknown segment {}", host.segment)),
                _ => {}
            }
            for service in &host.services {
                if Service::parse(service).is_none() {
                    issues.push(format!("{path}: unknown service '{service}'"));
                }
            }
        }
        fn check_host(
            issues: &mut Vec<String>,
            host_ids: &BTreeSet<String>,
            path: &str,
            id: &str,
        ) {
            if !host_ids.contains(id) {
                issues.push(format!("{path}: references undeclared host '{id}'"));
            }
        }
        let host_has_service = |id: &str, service: Service| {
            self.host(id)
                .map(|h| h.services.iter().any(|s| Service::parse(s) == Some(service)))
                .unwrap_or(false)
        };

        // --- credentials ---
        let mut principals = BTreeSet::new();
        for (i, cred) in self.credentials.iter().enumerate() {
            let path = format!("credentials[{i}] ({})", cred.principal);
            if !cred.principal.contains('@') {
                issues.push(format!("{path}: principal must be user@domain"));
            }
            if !principals.insert(cred.principal.clone()) {
                issues.push(format!("{path}: duplicate principal"));
            }
            for host in &cred.stored_on {
                check_host(&mut issues, &host_ids, &path, host);
            }
        }

        // --- industrial ---
        let twin_ids: BTreeSet<&str> = self.twins.iter().map(|t| t.id.as_str()).collect();
        let plc_ids: BTreeSet<&str> = self.plcs.iter().map(|p| p.id.as_str()).collect();
        for (i, plc) in self.plcs.iter().enumerate() {
            let path = format!("plcs[{i}] ({})", plc.id);
            check_host(&mut issues, &host_ids, &path, &plc.host);
            if !host_has_service(&plc.host, Service::Plc) {
                issues.push(format!("{path}: host lacks the plc service"));
            }
            if !twin_ids.contains(plc.twin.as_str()) {
                issues.push(format!("{path}: references undeclared twin '{}'", plc.twin));
            }
            if plc.scan_ms == 0 {
                issues.push(format!("{path}: scan period must be > 0"));
            }
            for key in plc.holding_init.keys() {
                match key.parse::<u16>() {
                    Ok(idx) if (idx as usize) < crate::plc::WORD_TABLE_SIZE => {}
                    _ => issues.push(format!("{path}: bad holding register index '{key}'")),
                }
            }
            if let Err(e) = LadderProgram::parse_rungs(&plc.program) {
                issues.push(format!("{path}: ladder program invalid: {e}"));
            }
        }
        for (i, twin) in self.twins.iter().enumerate() {
            let path = format!("twins[{i}] ({})", twin.id);
            check_host(&mut issues, &host_ids, &path, &twin.host);
            if !matches!(twin.scene.as_str(), "production" | "sorter") {
                issues.push(format!("{path}: unknown scene '{}'", twin.scene));
            }
            if twin.tick_ms == 0 {
                issues.push(format!("{path}: tick must be > 0"));
            }
        }
        for (i, hmi) in self.hmis.iter().enumerate() {
            let path = format!("hmis[{i}] ({})", hmi.id);
            check_host(&mut issues, &host_ids, &path, &hmi.host);
            if !plc_ids.contains(hmi.plc.as_str()) {
                issues.push(format!("{path}: references undeclared plc '{}'", hmi.plc));
            }
        }
        for (i, historian) in self.historians.iter().enumerate() {
            let path = format!("historians[{i}] ({})", historian.id);
            check_host(&mut issues, &host_ids, &path, &historian.host);
            if !plc_ids.contains(historian.plc.as_str()) {
                issues.push(format!(
                    "{path}: references undeclared plc '{}'",
                    historian.plc
                ));
            }
        }

        // --- mqtt ---
        check_host(&mut issues, &host_ids, "mqtt.broker_host", &self.mqtt.broker_host);
        if !host_has_service(&self.mqtt.broker_host, Service::MqttBroker) {
            issues.push("mqtt.broker_host: host lacks the mqtt_broker service".into());
        }
        let mut client_ids = BTreeSet::new();
        for (i, client) in self.mqtt.clients.iter().enumerate() {
            let path = format!("mqtt.clients[{i}] ({})", client.id);
            if !client_ids.insert(client.id.clone()) {
                issues.push(format!("{path}: duplicate client id"));
            }
            check_host(&mut issues, &host_ids, &path, &client.host);
            for filter in &client.subscriptions {
                if !simpleics_protocols::mqtt::valid_filter(filter) {
                    issues.push(format!("{path}: invalid filter '{filter}'"));
                }
            }
            for publish in &client.publishes {
                if !simpleics_protocols::mqtt::valid_topic(&publish.topic) {
                    issues.push(format!("{path}: invalid topic '{}'", publish.topic));
                }
                if publish.interval_ms == 0 {
                    issues.push(format!("{path}: publish interval must be > 0"));
                }
                if !matches!(
                    publish.source.as_str(),
                    "weight_v" | "exit_counts" | "run_status"
                ) {
                    issues.push(format!(
                        "{path}: unknown publish source '{}'",
                        publish.source
                    ));
                }
            }
            if let Some(gw) = &client.gateway {
                if !plc_ids.contains(gw.plc.as_str()) {
                    issues.push(format!(
                        "{path}: gateway references undeclared plc '{}'",
                        gw.plc
                    ));
                }
            }
        }

        // --- people ---
        let mut npc_names = BTreeSet::new();
        for (i, npc) in self.npcs.iter().enumerate() {
            let path = format!("npcs[{i}] ({})", npc.name);
            if !npc_names.insert(npc.name.clone()) {
                issues.push(format!("{path}: duplicate npc"));
            }
            check_host(&mut issues, &host_ids, &path, &npc.host);
        }
        for (field, id, service) in [
            ("services.mail_host", &self.services.mail_host, Service::Mail),
            ("services.intranet_host", &self.services.intranet_host, Service::Web),
            ("services.share_host", &self.services.share_host, Service::SmbShare),
        ] {
            check_host(&mut issues, &host_ids, field, id);
            if !host_has_service(id, service) {
                issues.push(format!("{field}: host lacks the required service"));
            }
        }

        // --- campaign ---
        let c = &self.campaign;
        if !KNOWN_PLANS.contains(&c.plan.as_str()) {
            issues.push(format!("campaign.plan: unknown plan '{}'", c.plan));
        }
        check_host(&mut issues, &host_ids, "campaign.attacker_host", &c.attacker_host);
        if let Some(host) = self.host(&c.attacker_host) {
            if host.segment != SegmentId::External {
                issues.push("campaign.attacker_host: must sit in EXTERNAL".into());
            }
        }
        check_host(&mut issues, &host_ids, "campaign.lateral_host", &c.lateral_host);
        check_host(&mut issues, &host_ids, "campaign.jump_host", &c.jump_host);
        if !plc_ids.contains(c.ot_plc.as_str()) {
            issues.push(format!("campaign.ot_plc: undeclared plc '{}'", c.ot_plc));
        }
        if !plc_ids.contains(c.iiot_plc.as_str()) {
            issues.push(format!("campaign.iiot_plc: undeclared plc '{}'", c.iiot_plc));
        }
        match self.npcs.iter().find(|n| n.name == c.victim) {
            Some(npc) => {
                if npc.role.susceptibility() != Susceptibility::ClicksPhish {
                    issues.push(format!(
                        "campaign.victim: npc '{}' is not phish-susceptible",
                        c.victim
                    ));
                }
            }
            None => issues.push(format!("campaign.victim: undeclared npc '{}'", c.victim)),
        }
        for (field, principal) in [
            ("campaign.hmi_credential", &c.hmi_credential),
            ("campaign.admin_credential", &c.admin_credential),
        ] {
            if !principals.contains(principal) {
                issues.push(format!("{field}: undeclared credential '{principal}'"));
            }
        }
        if !simpleics_protocols::mqtt::valid_topic(&c.mqtt_control_topic) {
            issues.push(format!(
                "campaign.mqtt_control_topic: invalid topic '{}'",
                c.mqtt_control_topic
            ));
        }
        if (c.threshold_register as usize) >= crate::plc::WORD_TABLE_SIZE {
            issues.push("campaign.threshold_register: outside the holding table".into());
        }

        issues
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_validates() {
        let doc = ScenarioDoc::default_scenario();
        assert_eq!(doc.topology.segments.len(), 7, "six segments plus the SOC enclave");
        assert_eq!(doc.topology.firewalls.len(), 2);
        assert_eq!(doc.topology.taps.len(), 5);
        assert!(doc.hosts.iter().any(|h| h.id == doc.campaign.jump_host));
        assert_eq!(doc.plcs.len(), 2);
        assert_eq!(doc.twins.len(), 2);
    }

    #[test]
    fn undeclared_host_reference_is_reported_by_field() {
        let mut doc = ScenarioDoc::default_scenario();
        doc.plcs[0].host = "ghost".into();
        let issues = doc.validate();
        assert!(
            issues.iter().any(|i| i.contains("plcs[0]") && i.contains("ghost")),
            "issues: {issues:?}"
        );
    }

    #[test]
    fn duplicate_segment_prefix_rejected() {
        let mut doc = ScenarioDoc::default_scenario();
        doc.topology.segments[2].cidr = doc.topology.segments[1].cidr.clone();
        let issues = doc.validate();
        assert!(issues.iter().any(|i| i.contains("overlaps")), "issues: {issues:?}");
    }

    #[test]
    fn broken_ladder_program_reported() {
        let mut doc = ScenarioDoc::default_scenario();
        doc.plcs[0].program.push("NOT A RUNG".into());
        let issues = doc.validate();
        assert!(issues.iter().any(|i| i.contains("ladder")), "issues: {issues:?}");
    }

    #[test]
    fn load_save_round_trip_is_identity() {
        let doc = ScenarioDoc::default_scenario();
        let json = doc.to_json().unwrap();
        let again = ScenarioDoc::from_json(&json).unwrap();
        assert_eq!(doc.content_hash(), again.content_hash());
    }

    #[test]
    fn stress_profile_scales_rates() {
        let mut doc = ScenarioDoc::default_scenario();
        let scan_before = doc.plcs[0].scan_ms;
        doc.apply_stress_profile();
        assert_eq!(doc.run.npc_frequency_multiplier, 10);
        assert_eq!(doc.plcs[0].scan_ms, (scan_before / 10).max(5));
        assert!(doc.validate().is_empty());
    }
}
