//! ATT&CK-aligned adversary engine.
//!
//! A campaign is an ordered list of phases, each holding atomic abilities.
//! Ability dependencies are expressed through a fact store rather than
//! hard-coded gates: an ability runs only once its required facts are
//! present, and yields new facts (harvested credentials, discovered
//! devices, installed implants) for later abilities to consume. The runner
//! advances on a periodic step event; abilities whose effects land
//! asynchronously (a phish waiting to be opened, a lateral logon waiting to
//! complete) park in a waiting state until their completion fact appears.
//!
//! Every packet an ability sends originates from a host holding a live
//! implant (or the external attack platform), and carries an attack cause,
//! so downstream telemetry labels itself.

use std::collections::BTreeSet;

use serde::Serialize;

use simpleics_protocols::modbus::{self, ModbusFrame, ModbusPdu, PduDirection};
use simpleics_protocols::mqtt::{self, MqttPacket};

use crate::hosts::{Attachment, MailItem, Service, EVENT_PROCESS_CREATION, EVENT_SERVICE_INSTALL};
use crate::kernel::VirtualTime;
use crate::net::{SegmentId, SessionKey, Transport};
use crate::telemetry::{AttackCause, Cause};
use crate::world::{
    AppData, AuthChannel, CampaignModbusIntent, DeliveryOutcome, Packet, Payload, SessionPurpose,
    SessionState, World, WorldError, POLL_WORD_BASE, POLL_WORD_COUNT, VIEW_OVERRIDE_REGISTER,
};

#[derive(Debug, Clone, Serialize)]
pub struct Fact {
    pub key: String,
    pub value: String,
    pub produced_by: u32,
    pub t: VirtualTime,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub phase: &'static str,
    pub technique: &'static str,
    pub name: &'static str,
    pub instance: u32,
    pub started_us: VirtualTime,
    pub finished_us: Option<VirtualTime>,
    pub outcome: String,
    pub facts_yielded: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbilityKind {
    PhishDeliver,
    BeaconStart,
    SystemInfo,
    NetworkScan,
    ImpairDefenses,
    LsassDump,
    DomainAccountDiscovery,
    ShareDiscovery,
    SmbLateralMove,
    ValidAccountsRdp,
    DeviceDiscovery,
    ProcessDiscovery,
    CliExecution,
    AutostartPersistence,
    MonitorProcessState,
    ChangeCredential,
    ModifyParameter,
    ManipulateView,
    ManipulateControl,
}

#[derive(Debug, Clone, Copy)]
pub struct Ability {
    pub technique: &'static str,
    pub name: &'static str,
    pub kind: AbilityKind,
}

const fn ability(technique: &'static str, name: &'static str, kind: AbilityKind) -> Ability {
    Ability { technique, name, kind }
}

/// The seven-phase plan: one leaf ability per technique, nineteen in all.
pub fn seven_phase_plan() -> Vec<(&'static str, Vec<Ability>)> {
    use AbilityKind::*;
    vec![
        (
            "initial-access",
            vec![ability("T1566.001", "spearphish-attachment", PhishDeliver)],
        ),
        (
            "it-reconnaissance",
            vec![
                ability("T1071.001", "https-c2-channel", BeaconStart),
                ability("T1082", "system-information-discovery", SystemInfo),
                ability("T1046", "network-service-discovery", NetworkScan),
                ability("T1562", "impair-defenses", ImpairDefenses),
            ],
        ),
        (
            "credential-harvesting",
            vec![
                ability("T1003.001", "lsass-memory-dump", LsassDump),
                ability("T1087.002", "domain-account-discovery", DomainAccountDiscovery),
                ability("T1135", "network-share-discovery", ShareDiscovery),
            ],
        ),
        (
            "lateral-movement-to-ot",
            vec![
                ability("T1021.002", "smb-admin-share-pivot", SmbLateralMove),
                ability("T1078", "valid-accounts-rdp-jump", ValidAccountsRdp),
            ],
        ),
        (
            "ot-infiltration",
            vec![
                ability("T0808", "modbus-device-discovery", DeviceDiscovery),
                ability("T0813", "process-and-topic-discovery", ProcessDiscovery),
                ability("T0807", "jump-host-cli", CliExecution),
                ability("T1547", "autostart-persistence", AutostartPersistence),
            ],
        ),
        (
            "attack-preparation",
            vec![
                ability("T0801", "monitor-process-state", MonitorProcessState),
                ability("T0892", "rotate-operator-credential", ChangeCredential),
            ],
        ),
        (
            "attack-execution",
            vec![
                ability("T0836", "modify-sorter-thresholds", ModifyParameter),
                ability("T0832", "freeze-operator-view", ManipulateView),
                ability("T0831", "halt-production-line", ManipulateControl),
            ],
        ),
    ]
}

#[derive(Debug, Clone, PartialEq)]
enum AbilityState {
    NotStarted { waited_steps: u64, network_retries: u64 },
    Waiting { until_fact: String, waited_steps: u64 },
}

#[derive(Debug, Clone, PartialEq)]
enum MqttStage {
    Idle,
    AwaitConnAck { then_publish: bool },
    Probing,
    AwaitPubAck,
}

/// Resolved identities the executors target.
#[derive(Debug, Clone)]
pub struct CampaignTargets {
    pub attacker_host: String,
    pub victim: String,
    pub victim_host: String,
    pub lateral_host: String,
    pub jump_host: String,
    pub it_dc: String,
    pub ot_dc: String,
    pub ot_plc_host: String,
    pub iiot_plc_host: String,
    pub broker_host: String,
    pub hmi_credential: String,
    pub admin_credential: String,
    pub mqtt_control_topic: String,
    pub threshold_register: u16,
    pub threshold_value: u16,
    pub step_ms: u64,
    pub impair_window_ms: u64,
}

enum ExecResult {
    Success(Vec<(String, String)>),
    Waiting(String),
    Blocked(&'static str),
}

pub struct CampaignRunner {
    pub name: String,
    pub plan_name: String,
    targets: CampaignTargets,
    phases: Vec<(&'static str, Vec<Ability>)>,
    pub facts: Vec<Fact>,
    pub trace: Vec<TraceEntry>,
    phase_idx: usize,
    ability_idx: usize,
    state: AbilityState,
    next_instance: u32,
    active_instance: u32,
    active_cause: Option<AttackCause>,
    phish_cause: Option<AttackCause>,
    mqtt_session: Option<SessionKey>,
    mqtt_stage: MqttStage,
    next_packet_id: u16,
    next_txn: u16,
    max_wait_steps: u64,
    max_network_retries: u64,
    pub aborted: bool,
    pub done: bool,
}

impl CampaignRunner {
    pub fn new(name: String, plan_name: String, targets: CampaignTargets) -> Self {
        Self {
            name,
            plan_name,
            targets,
            phases: seven_phase_plan(),
            facts: Vec::new(),
            trace: Vec::new(),
            phase_idx: 0,
            ability_idx: 0,
            state: AbilityState::NotStarted { waited_steps: 0, network_retries: 0 },
            next_instance: 0,
            active_instance: 0,
            active_cause: None,
            phish_cause: None,
            mqtt_session: None,
            mqtt_stage: MqttStage::Idle,
            next_packet_id: 0,
            next_txn: 0,
            max_wait_steps: 600,
            max_network_retries: 3,
            aborted: false,
            done: false,
        }
    }

    pub fn step_interval_ms(&self) -> u64 {
        self.targets.step_ms
    }

    pub fn phish_cause(&self) -> Option<&AttackCause> {
        self.phish_cause.as_ref()
    }

    pub fn phish_sender(&self) -> &str {
        "press-release@industrial-news.example"
    }

    pub fn has_fact(&self, key: &str) -> bool {
        self.facts.iter().any(|f| f.key == key)
    }

    pub fn has_fact_prefix(&self, prefix: &str) -> bool {
        self.facts.iter().any(|f| f.key.starts_with(prefix))
    }

    pub fn facts_with_prefix(&self, prefix: &str) -> Vec<&Fact> {
        self.facts.iter().filter(|f| f.key.starts_with(prefix)).collect()
    }

    pub fn add_fact(&mut self, key: impl Into<String>, value: impl Into<String>, t: VirtualTime) {
        let key = key.into();
        let fact = Fact { key, value: value.into(), produced_by: self.active_instance, t };
        self.facts.push(fact);
    }

    /// Called by the world whenever an implant lands on a host.
    pub fn note_implant(&mut self, implant: &str, host: &str, t: VirtualTime) {
        self.add_fact(format!("implant.{host}"), implant.to_owned(), t);
    }

    pub fn executed_techniques(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .trace
            .iter()
            .filter(|e| e.outcome == "success")
            .map(|e| e.technique)
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn phases_completed(&self) -> u32 {
        let mut completed = 0;
        for (phase, abilities) in &self.phases {
            let all = abilities.iter().all(|a| {
                self.trace.iter().any(|e| {
                    e.phase == *phase && e.technique == a.technique && e.outcome == "success"
                })
            });
            if all {
                completed += 1;
            } else {
                break;
            }
        }
        completed
    }

    pub fn trace_json(&self) -> serde_json::Value {
        let phases: Vec<serde_json::Value> = self
            .phases
            .iter()
            .map(|(phase, abilities)| {
                let entries: Vec<&TraceEntry> =
                    self.trace.iter().filter(|e| e.phase == *phase).collect();
                serde_json::json!({
                    "name": phase,
                    "planned_abilities": abilities.len(),
                    "abilities": entries,
                })
            })
            .collect();
        serde_json::json!({
            "enabled": true,
            "campaign": self.name,
            "plan": self.plan_name,
            "aborted": self.aborted,
            "completed": self.done,
            "phases_completed": self.phases_completed(),
            "phases": phases,
            "facts": self.facts,
        })
    }

    fn attack_cause(&self, technique: &'static str) -> AttackCause {
        AttackCause {
            campaign: self.name.clone(),
            technique: technique.to_owned(),
            ability: self.active_instance,
        }
    }

    fn current_ability(&self) -> Option<(&'static str, Ability)> {
        let (phase, abilities) = self.phases.get(self.phase_idx)?;
        abilities.get(self.ability_idx).map(|a| (*phase, *a))
    }

    /// Unmet-precondition check; `None` means the ability may run.
    pub fn requires_unmet(&self, kind: AbilityKind) -> Option<String> {
        use AbilityKind::*;
        let t = &self.targets;
        let implant = |host: &str| format!("implant.{host}");
        let need = |cond: bool, what: String| if cond { None } else { Some(what) };
        match kind {
            PhishDeliver => None,
            BeaconStart | SystemInfo | NetworkScan | ImpairDefenses | LsassDump
            | DomainAccountDiscovery | ShareDiscovery => need(
                self.has_fact(&implant(&t.victim_host)),
                implant(&t.victim_host),
            ),
            SmbLateralMove => {
                let cred = format!("cred.{}", t.admin_credential);
                if !self.has_fact(&implant(&t.victim_host)) {
                    Some(implant(&t.victim_host))
                } else {
                    need(self.has_fact(&cred), cred)
                }
            }
            ValidAccountsRdp => {
                let cred = format!("cred.{}", t.admin_credential);
                if !self.has_fact(&implant(&t.lateral_host)) {
                    Some(implant(&t.lateral_host))
                } else {
                    need(self.has_fact(&cred), cred)
                }
            }
            DeviceDiscovery | CliExecution | AutostartPersistence => {
                need(self.has_fact(&implant(&t.jump_host)), implant(&t.jump_host))
            }
            ProcessDiscovery | MonitorProcessState | ManipulateView | ManipulateControl => {
                if !self.has_fact(&implant(&t.jump_host)) {
                    Some(implant(&t.jump_host))
                } else {
                    need(self.has_fact_prefix("ot.plc."), "ot.plc.*".to_owned())
                }
            }
            ChangeCredential => {
                let cred = format!("cred.{}", t.admin_credential);
                if !self.has_fact(&implant(&t.jump_host)) {
                    Some(implant(&t.jump_host))
                } else {
                    need(self.has_fact(&cred), cred)
                }
            }
            ModifyParameter => {
                if !self.has_fact(&implant(&t.jump_host)) {
                    Some(implant(&t.jump_host))
                } else if !self.has_fact("ot.mqtt.subscribed") {
                    Some("ot.mqtt.subscribed".to_owned())
                } else {
                    None
                }
            }
        }
    }

    /// One planner step. Returns `Ok(true)` while the campaign wants more
    /// steps scheduled.
    pub fn step(&mut self, world: &mut World) -> Result<bool, WorldError> {
        if self.done || self.aborted {
            return Ok(false);
        }
        let Some((phase, ability)) = self.current_ability() else {
            self.done = true;
            return Ok(false);
        };

        match self.state.clone() {
            AbilityState::Waiting { until_fact, waited_steps } => {
                if self.has_fact(&until_fact) {
                    self.finish_current(world, "success")?;
                    self.advance();
                } else if waited_steps >= self.max_wait_steps {
                    self.finish_current(world, "blocked:timeout")?;
                    self.abort();
                } else {
                    self.state = AbilityState::Waiting {
                        until_fact,
                        waited_steps: waited_steps + 1,
                    };
                }
            }
            AbilityState::NotStarted { waited_steps, network_retries } => {
                if let Some(missing) = self.requires_unmet(ability.kind) {
                    if waited_steps >= self.max_wait_steps {
                        self.begin_trace(phase, ability, world.now());
                        self.finish_current(
                            world,
                            &format!("blocked:unmet_precondition:{missing}"),
                        )?;
                        self.abort();
                    } else {
                        self.state = AbilityState::NotStarted {
                            waited_steps: waited_steps + 1,
                            network_retries,
                        };
                    }
                    return Ok(!self.aborted && !self.done);
                }

                if self.trace_for_active().is_none() {
                    self.active_instance = self.next_instance;
                    self.next_instance += 1;
                    self.begin_trace(phase, ability, world.now());
                }
                match self.execute(world, ability)? {
                    ExecResult::Success(facts) => {
                        let now = world.now();
                        for (key, value) in facts {
                            self.add_fact(key, value, now);
                        }
                        self.finish_current(world, "success")?;
                        self.advance();
                    }
                    ExecResult::Waiting(fact) => {
                        self.state = AbilityState::Waiting { until_fact: fact, waited_steps: 0 };
                    }
                    ExecResult::Blocked(reason) => {
                        if network_retries + 1 >= self.max_network_retries {
                            self.finish_current(world, &format!("blocked:{reason}"))?;
                            self.abort();
                        } else {
                            self.state = AbilityState::NotStarted {
                                waited_steps,
                                network_retries: network_retries + 1,
                            };
                        }
                    }
                }
            }
        }

        if self.current_ability().is_none() {
            self.done = true;
        }
        Ok(!self.done && !self.aborted)
    }

    fn abort(&mut self) {
        self.aborted = true;
    }

    fn advance(&mut self) {
        self.state = AbilityState::NotStarted { waited_steps: 0, network_retries: 0 };
        let Some((_, abilities)) = self.phases.get(self.phase_idx) else {
            return;
        };
        if self.ability_idx + 1 < abilities.len() {
            self.ability_idx += 1;
        } else {
            self.phase_idx += 1;
            self.ability_idx = 0;
        }
    }

    fn begin_trace(&mut self, phase: &'static str, ability: Ability, now: VirtualTime) {
        self.trace.push(TraceEntry {
            phase,
            technique: ability.technique,
            name: ability.name,
            instance: self.active_instance,
            started_us: now,
            finished_us: None,
            outcome: "pending".into(),
            facts_yielded: Vec::new(),
        });
    }

    fn trace_for_active(&mut self) -> Option<&mut TraceEntry> {
        let instance = self.active_instance;
        self.trace
            .iter_mut()
            .find(|e| e.instance == instance && e.outcome == "pending")
    }

    fn finish_current(&mut self, world: &mut World, outcome: &str) -> Result<(), WorldError> {
        // tear down any probe MQTT connection the ability left open
        if outcome == "success" && self.mqtt_stage != MqttStage::Idle {
            self.mqtt_disconnect(world)?;
        }
        let now = world.now();
        let instance = self.active_instance;
        let yielded: Vec<String> = self
            .facts
            .iter()
            .filter(|f| f.produced_by == instance)
            .map(|f| f.key.clone())
            .collect();
        if let Some(entry) = self.trace_for_active() {
            entry.finished_us = Some(now);
            entry.outcome = outcome.to_owned();
            entry.facts_yielded = yielded;
        }
        Ok(())
    }

    // -----------------------------------------------------------------
    // executors
    // -----------------------------------------------------------------

    fn execute(&mut self, world: &mut World, ability: Ability) -> Result<ExecResult, WorldError> {
        use AbilityKind::*;
        let cause = self.attack_cause(ability.technique);
        self.active_cause = Some(cause.clone());
        let t = self.targets.clone();

        Ok(match ability.kind {
            PhishDeliver => {
                self.phish_cause = Some(cause.clone());
                let item = MailItem {
                    from: self.phish_sender().to_owned(),
                    to: t.victim.clone(),
                    subject: "updated supplier invoice".into(),
                    body_bytes: 900,
                    attachment: Some(Attachment {
                        filename: "invoice_q3.pdf.exe".into(),
                        malicious: true,
                        implant: Some("impl-alpha".into()),
                    }),
                };
                match world.deliver_mail(&t.attacker_host, item, Cause::Attack(cause))? {
                    DeliveryOutcome::Delivered { .. } => {
                        ExecResult::Waiting(format!("implant.{}", t.victim_host))
                    }
                    DeliveryOutcome::Dropped { .. } => ExecResult::Blocked("network_denied"),
                }
            }
            BeaconStart => {
                world.beacon_cause = Some(cause);
                let implants: Vec<String> = world.beacons.keys().cloned().collect();
                for implant in implants {
                    world.schedule_beacon(&implant)?;
                }
                ExecResult::Success(vec![("c2.established".into(), "https/443".into())])
            }
            SystemInfo => {
                for process in ["whoami.exe", "systeminfo.exe"] {
                    world.emit_host_event(
                        &t.victim_host,
                        EVENT_PROCESS_CREATION,
                        &[("process", process), ("parent", "update_svc.exe")],
                        &Cause::Attack(cause.clone()),
                    )?;
                }
                ExecResult::Success(vec![(
                    format!("host.info.{}", t.victim_host),
                    "collected".into(),
                )])
            }
            NetworkScan => {
                let targets: Vec<String> = world
                    .hosts
                    .values()
                    .filter(|h| {
                        matches!(h.segment, SegmentId::ItLan | SegmentId::ItDmz)
                            && h.id != t.victim_host
                    })
                    .map(|h| h.id.clone())
                    .collect();
                for target in targets {
                    for port in [80u16, 445, 3389] {
                        let key = world.open_session(
                            &t.victim_host,
                            &target,
                            Transport::Tcp,
                            port,
                            SessionPurpose::CampaignProbe,
                        );
                        world.send_to_responder(
                            key,
                            Payload::Opaque(64),
                            AppData::Probe,
                            Cause::Attack(cause.clone()),
                        )?;
                    }
                }
                ExecResult::Success(vec![("it.scan.done".into(), "tcp 80,445,3389".into())])
            }
            ImpairDefenses => {
                world.emit_host_event(
                    &t.victim_host,
                    EVENT_PROCESS_CREATION,
                    &[("process", "sc.exe"), ("args", "stop sensorsvc")],
                    &Cause::Attack(cause),
                )?;
                let window = t.impair_window_ms * 1000;
                let until = world.now() + window;
                if let Some(host) = world.hosts.get_mut(&t.victim_host) {
                    host.events_suppressed_until = Some(until);
                }
                ExecResult::Success(vec![(
                    "defense.impaired".into(),
                    format!("until_us={until}"),
                )])
            }
            LsassDump => {
                world.emit_host_event(
                    &t.victim_host,
                    EVENT_PROCESS_CREATION,
                    &[("process", "creddump.exe"), ("target", "lsass.exe")],
                    &Cause::Attack(cause.clone()),
                )?;
                // harvesting can only surface what the host actually caches
                let harvested: Vec<(String, String)> = world
                    .credentials
                    .values()
                    .filter(|c| c.stored_on.contains(&t.victim_host))
                    .map(|c| (format!("cred.{}", c.principal), format!("{:?}", c.grade)))
                    .collect();
                // validate the freshest catch against the domain controller;
                // the DC-side logon events survive the impaired endpoint
                if harvested.iter().any(|(k, _)| k == &format!("cred.{}", t.admin_credential)) {
                    let version = world
                        .credentials
                        .get(&t.admin_credential)
                        .map(|c| c.secret_version)
                        .unwrap_or(0);
                    let key = world.open_session(
                        &t.victim_host,
                        &t.it_dc,
                        Transport::Tcp,
                        88,
                        SessionPurpose::CampaignProbe,
                    );
                    world.send_to_responder(
                        key,
                        Payload::Opaque(400),
                        AppData::AuthRequest {
                            principal: t.admin_credential.clone(),
                            secret_version: version,
                            channel: AuthChannel::Dc,
                            install_implant: None,
                        },
                        Cause::Attack(cause),
                    )?;
                }
                ExecResult::Success(harvested)
            }
            DomainAccountDiscovery => {
                world.emit_host_event(
                    &t.victim_host,
                    EVENT_PROCESS_CREATION,
                    &[("process", "net.exe"), ("args", "user /domain")],
                    &Cause::Attack(cause.clone()),
                )?;
                let key = world.open_session(
                    &t.victim_host,
                    &t.it_dc,
                    Transport::Tcp,
                    88,
                    SessionPurpose::CampaignProbe,
                );
                world.send_to_responder(
                    key,
                    Payload::Opaque(400),
                    AppData::AuthRequest {
                        principal: t.victim.clone(),
                        secret_version: 0,
                        channel: AuthChannel::Dc,
                        install_implant: None,
                    },
                    Cause::Attack(cause),
                )?;
                let accounts = world.credentials.len();
                ExecResult::Success(vec![("ad.accounts".into(), accounts.to_string())])
            }
            ShareDiscovery => {
                let shares: Vec<String> = world
                    .hosts
                    .values()
                    .filter(|h| {
                        matches!(h.segment, SegmentId::ItLan | SegmentId::ItDmz)
                            && (h.has(Service::SmbShare) || h.has(Service::SmbShareSecured))
                    })
                    .map(|h| h.id.clone())
                    .collect();
                let mut facts = Vec::new();
                for share_host in shares {
                    let key = world.open_session(
                        &t.victim_host,
                        &share_host,
                        Transport::Tcp,
                        445,
                        SessionPurpose::CampaignProbe,
                    );
                    world.send_to_responder(
                        key,
                        Payload::Opaque(500),
                        AppData::SmbAccess { share: "enum$".into() },
                        Cause::Attack(cause.clone()),
                    )?;
                    facts.push((format!("share.{share_host}"), "enumerated".into()));
                }
                ExecResult::Success(facts)
            }
            SmbLateralMove => {
                let version = world
                    .credentials
                    .get(&t.admin_credential)
                    .map(|c| c.secret_version)
                    .unwrap_or(0);
                let key = world.open_session(
                    &t.victim_host,
                    &t.lateral_host,
                    Transport::Tcp,
                    445,
                    SessionPurpose::CampaignProbe,
                );
                match world.send_to_responder(
                    key,
                    Payload::Opaque(1200),
                    AppData::AuthRequest {
                        principal: t.admin_credential.clone(),
                        secret_version: version,
                        channel: AuthChannel::Smb,
                        install_implant: Some("impl-bravo".into()),
                    },
                    Cause::Attack(cause),
                )? {
                    DeliveryOutcome::Delivered { .. } => {
                        ExecResult::Waiting(format!("implant.{}", t.lateral_host))
                    }
                    DeliveryOutcome::Dropped { .. } => ExecResult::Blocked("network_denied"),
                }
            }
            ValidAccountsRdp => {
                let version = world
                    .credentials
                    .get(&t.admin_credential)
                    .map(|c| c.secret_version)
                    .unwrap_or(0);
                let key = world.open_session(
                    &t.lateral_host,
                    &t.jump_host,
                    Transport::Tcp,
                    3389,
                    SessionPurpose::CampaignProbe,
                );
                match world.send_to_responder(
                    key,
                    Payload::Opaque(1500),
                    AppData::AuthRequest {
                        principal: t.admin_credential.clone(),
                        secret_version: version,
                        channel: AuthChannel::Rdp,
                        install_implant: Some("impl-charlie".into()),
                    },
                    Cause::Attack(cause),
                )? {
                    DeliveryOutcome::Delivered { .. } => {
                        ExecResult::Waiting(format!("implant.{}", t.jump_host))
                    }
                    DeliveryOutcome::Dropped { .. } => ExecResult::Blocked("network_denied"),
                }
            }
            DeviceDiscovery => {
                let targets: Vec<String> = world
                    .hosts
                    .values()
                    .filter(|h| matches!(h.segment, SegmentId::Ot | SegmentId::Iiot))
                    .map(|h| h.id.clone())
                    .collect();
                for target in targets {
                    let key = world.open_session(
                        &t.jump_host,
                        &target,
                        Transport::Tcp,
                        502,
                        SessionPurpose::CampaignProbe,
                    );
                    world.send_to_responder(
                        key,
                        Payload::Opaque(64),
                        AppData::Probe,
                        Cause::Attack(cause.clone()),
                    )?;
                }
                ExecResult::Success(vec![("ot.scan.done".into(), "tcp/502".into())])
            }
            ProcessDiscovery => {
                // read the process image of every discovered Modbus device
                let addrs: Vec<String> = self
                    .facts_with_prefix("ot.plc.")
                    .iter()
                    .map(|f| f.key.trim_start_matches("ot.plc.").to_owned())
                    .collect();
                for addr_text in addrs {
                    let Ok(addr) = addr_text.parse() else { continue };
                    let Some(host) = world.addr_to_host.get(&addr).cloned() else {
                        continue;
                    };
                    self.next_txn = self.next_txn.wrapping_add(1);
                    let frame = ModbusFrame::new(
                        self.next_txn,
                        1,
                        ModbusPdu::ReadInputRegistersRequest {
                            addr: POLL_WORD_BASE,
                            quantity: POLL_WORD_COUNT,
                        },
                    );
                    let key = world.open_session(
                        &t.jump_host,
                        &host,
                        Transport::Tcp,
                        502,
                        SessionPurpose::CampaignModbus {
                            intent: CampaignModbusIntent::ProcessRead,
                        },
                    );
                    world.send_to_responder(
                        key,
                        Payload::Bytes(modbus::encode(&frame).expect("valid")),
                        AppData::ModbusRequest,
                        Cause::Attack(cause.clone()),
                    )?;
                }
                // and inventory the broker's topics with a wildcard probe
                self.mqtt_connect(world, false, Cause::Attack(cause))?;
                ExecResult::Waiting("ot.mqtt.subscribed".into())
            }
            CliExecution => {
                for (process, args) in
                    [("cmd.exe", "ipconfig /all"), ("plcscan.exe", "--list-units")]
                {
                    world.emit_host_event(
                        &t.jump_host,
                        EVENT_PROCESS_CREATION,
                        &[("process", process), ("args", args)],
                        &Cause::Attack(cause.clone()),
                    )?;
                }
                ExecResult::Success(vec![("ot.cli.done".into(), "jump-host".into())])
            }
            AutostartPersistence => {
                world.emit_host_event(
                    &t.jump_host,
                    EVENT_SERVICE_INSTALL,
                    &[("service", "UpdaterSvc"), ("start_type", "auto")],
                    &Cause::Attack(cause),
                )?;
                ExecResult::Success(vec![("persist.jump".into(), "service".into())])
            }
            MonitorProcessState => {
                for _ in 0..5 {
                    self.next_txn = self.next_txn.wrapping_add(1);
                    let frame = ModbusFrame::new(
                        self.next_txn,
                        1,
                        ModbusPdu::ReadInputRegistersRequest {
                            addr: POLL_WORD_BASE,
                            quantity: POLL_WORD_COUNT,
                        },
                    );
                    let key = world.open_session(
                        &t.jump_host,
                        &t.ot_plc_host,
                        Transport::Tcp,
                        502,
                        SessionPurpose::CampaignModbus { intent: CampaignModbusIntent::Monitor },
                    );
                    world.send_to_responder(
                        key,
                        Payload::Bytes(modbus::encode(&frame).expect("valid")),
                        AppData::ModbusRequest,
                        Cause::Attack(cause.clone()),
                    )?;
                }
                ExecResult::Success(vec![("ot.monitoring".into(), t.ot_plc_host.clone())])
            }
            ChangeCredential => {
                let version = world
                    .credentials
                    .get(&t.admin_credential)
                    .map(|c| c.secret_version)
                    .unwrap_or(0);
                let key = world.open_session(
                    &t.jump_host,
                    &t.ot_dc,
                    Transport::Tcp,
                    88,
                    SessionPurpose::CampaignProbe,
                );
                match world.send_to_responder(
                    key,
                    Payload::Opaque(600),
                    AppData::CredentialRotate {
                        principal: t.hmi_credential.clone(),
                        admin: t.admin_credential.clone(),
                        admin_version: version,
                    },
                    Cause::Attack(cause),
                )? {
                    DeliveryOutcome::Delivered { .. } => {
                        ExecResult::Waiting("ot.cred.rotated".into())
                    }
                    DeliveryOutcome::Dropped { .. } => ExecResult::Blocked("network_denied"),
                }
            }
            ModifyParameter => {
                self.mqtt_connect(world, true, Cause::Attack(cause))?;
                ExecResult::Waiting("ot.param.modified".into())
            }
            ManipulateView => {
                self.next_txn = self.next_txn.wrapping_add(1);
                let frame = ModbusFrame::new(
                    self.next_txn,
                    1,
                    ModbusPdu::WriteMultipleRegistersRequest {
                        addr: VIEW_OVERRIDE_REGISTER,
                        words: vec![1],
                    },
                );
                let key = world.open_session(
                    &t.jump_host,
                    &t.ot_plc_host,
                    Transport::Tcp,
                    502,
                    SessionPurpose::CampaignModbus {
                        intent: CampaignModbusIntent::ViewOverride,
                    },
                );
                match world.send_to_responder(
                    key,
                    Payload::Bytes(modbus::encode(&frame).expect("valid")),
                    AppData::ModbusRequest,
                    Cause::Attack(cause),
                )? {
                    DeliveryOutcome::Delivered { .. } => {
                        ExecResult::Waiting("ot.view.frozen".into())
                    }
                    DeliveryOutcome::Dropped { .. } => ExecResult::Blocked("network_denied"),
                }
            }
            ManipulateControl => {
                self.next_txn = self.next_txn.wrapping_add(1);
                // hold the stop command coil: the run seal-in drops out and
                // production halts until someone clears it
                let frame = ModbusFrame::new(
                    self.next_txn,
                    1,
                    ModbusPdu::WriteSingleCoil { addr: 809, on: true },
                );
                let key = world.open_session(
                    &t.jump_host,
                    &t.ot_plc_host,
                    Transport::Tcp,
                    502,
                    SessionPurpose::CampaignModbus {
                        intent: CampaignModbusIntent::ControlWrite,
                    },
                );
                match world.send_to_responder(
                    key,
                    Payload::Bytes(modbus::encode(&frame).expect("valid")),
                    AppData::ModbusRequest,
                    Cause::Attack(cause),
                )? {
                    DeliveryOutcome::Delivered { .. } => {
                        ExecResult::Waiting("ot.control.manipulated".into())
                    }
                    DeliveryOutcome::Dropped { .. } => ExecResult::Blocked("network_denied"),
                }
            }
        })
    }

    // -----------------------------------------------------------------
    // campaign-owned MQTT client (broker probe + control publish)
    // -----------------------------------------------------------------

    fn mqtt_connect(
        &mut self,
        world: &mut World,
        then_publish: bool,
        cause: Cause,
    ) -> Result<(), WorldError> {
        let key = world.open_session(
            &self.targets.jump_host,
            &self.targets.broker_host,
            Transport::Tcp,
            1883,
            SessionPurpose::CampaignMqtt,
        );
        self.mqtt_session = Some(key);
        self.mqtt_stage = MqttStage::AwaitConnAck { then_publish };
        let connect = MqttPacket::Connect {
            client_id: "svc-updater".into(),
            keep_alive_s: 120,
            clean_session: true,
        };
        world.send_to_responder(
            key,
            Payload::Bytes(mqtt::encode(&connect).expect("valid")),
            AppData::Mqtt,
            cause,
        )?;
        Ok(())
    }

    fn mqtt_disconnect(&mut self, world: &mut World) -> Result<(), WorldError> {
        if let Some(key) = self.mqtt_session.take() {
            let cause = self
                .active_cause
                .clone()
                .map(Cause::Attack)
                .unwrap_or(Cause::Benign(crate::telemetry::BenignKind::Protocol));
            world.send_to_responder(
                key,
                Payload::Bytes(mqtt::encode(&MqttPacket::Disconnect).expect("valid")),
                AppData::Mqtt,
                cause,
            )?;
        }
        self.mqtt_stage = MqttStage::Idle;
        Ok(())
    }

    /// Routes responses arriving on campaign-owned sessions.
    pub fn on_response(
        &mut self,
        world: &mut World,
        state: &SessionState,
        packet: &Packet,
    ) -> Result<(), WorldError> {
        let now = world.now();
        match (&state.purpose, &packet.app) {
            (SessionPurpose::CampaignProbe, AppData::ProbeReply) => {
                let responder_ip = state.key.responder;
                if state.key.service_port == 502 {
                    self.add_fact(format!("ot.plc.{responder_ip}"), "modbus/502", now);
                } else {
                    self.add_fact(
                        format!("net.open.{responder_ip}.{}", state.key.service_port),
                        "open",
                        now,
                    );
                }
            }
            (SessionPurpose::CampaignProbe, AppData::AuthResponse { success }) => {
                if *success && matches!(packet.payload, Payload::Opaque(_)) {
                    // positive acknowledgement of the remote credential reset
                    if state.key.service_port == 88 {
                        self.add_fact("ot.cred.rotated", "hmi-operator", now);
                    }
                }
            }
            (SessionPurpose::CampaignModbus { intent }, AppData::ModbusResponse) => {
                if let Payload::Bytes(bytes) = &packet.payload {
                    if let Ok(frame) = modbus::decode(bytes, PduDirection::Response) {
                        if matches!(frame.pdu, ModbusPdu::Exception { .. }) {
                            return Ok(());
                        }
                        match intent {
                            CampaignModbusIntent::ProcessRead => {
                                self.add_fact(
                                    format!("ot.process.{}", state.key.responder),
                                    "image-read",
                                    now,
                                );
                            }
                            CampaignModbusIntent::Monitor => {}
                            CampaignModbusIntent::ViewOverride => {
                                self.add_fact("ot.view.frozen", state.key.responder.to_string(), now);
                            }
                            CampaignModbusIntent::ControlWrite => {
                                self.add_fact(
                                    "ot.control.manipulated",
                                    state.key.responder.to_string(),
                                    now,
                                );
                            }
                        }
                    }
                }
            }
            (SessionPurpose::CampaignMqtt, AppData::Mqtt) => {
                let Payload::Bytes(bytes) = &packet.payload else {
                    return Ok(());
                };
                let Ok(control) = mqtt::decode(bytes) else {
                    return Ok(());
                };
                self.on_mqtt_inbound(world, control)?;
            }
            _ => {}
        }
        Ok(())
    }

    fn on_mqtt_inbound(
        &mut self,
        world: &mut World,
        control: MqttPacket,
    ) -> Result<(), WorldError> {
        let cause = self
            .active_cause
            .clone()
            .map(Cause::Attack)
            .unwrap_or(Cause::Benign(crate::telemetry::BenignKind::Protocol));
        let Some(key) = self.mqtt_session else {
            return Ok(());
        };
        let now = world.now();
        match (&self.mqtt_stage, control) {
            (MqttStage::AwaitConnAck { then_publish: false }, MqttPacket::ConnAck { .. }) => {
                self.next_packet_id = self.next_packet_id.wrapping_add(1).max(1);
                let subscribe = MqttPacket::Subscribe {
                    packet_id: self.next_packet_id,
                    filters: vec![("#".into(), 0)],
                };
                world.send_to_responder(
                    key,
                    Payload::Bytes(mqtt::encode(&subscribe).expect("valid")),
                    AppData::Mqtt,
                    cause,
                )?;
                self.mqtt_stage = MqttStage::Probing;
            }
            (MqttStage::AwaitConnAck { then_publish: true }, MqttPacket::ConnAck { .. }) => {
                self.next_packet_id = self.next_packet_id.wrapping_add(1).max(1);
                let publish = MqttPacket::Publish {
                    dup: false,
                    qos: 1,
                    retain: false,
                    topic: self.targets.mqtt_control_topic.clone(),
                    packet_id: Some(self.next_packet_id),
                    payload: format!(
                        "reg={},val={}",
                        self.targets.threshold_register, self.targets.threshold_value
                    )
                    .into_bytes(),
                };
                world.send_to_responder(
                    key,
                    Payload::Bytes(mqtt::encode(&publish).expect("valid")),
                    AppData::Mqtt,
                    cause,
                )?;
                self.mqtt_stage = MqttStage::AwaitPubAck;
            }
            (MqttStage::Probing, MqttPacket::SubAck { .. }) => {
                self.add_fact("ot.mqtt.subscribed", "#", now);
            }
            (MqttStage::Probing, MqttPacket::Publish { topic, .. }) => {
                self.add_fact("ot.mqtt.topics", topic, now);
            }
            (MqttStage::AwaitPubAck, MqttPacket::PubAck { .. }) => {
                self.add_fact("ot.param.modified", self.targets.mqtt_control_topic.clone(), now);
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn targets() -> CampaignTargets {
        CampaignTargets {
            attacker_host: "attack-platform".into(),
            victim: "carol@simple.local".into(),
            victim_host: "ws-carol".into(),
            lateral_host: "ws-dave".into(),
            jump_host: "jump1".into(),
            it_dc: "dc1".into(),
            ot_dc: "otdc1".into(),
            ot_plc_host: "plc-ot".into(),
            iiot_plc_host: "plc-iiot".into(),
            broker_host: "broker1".into(),
            hmi_credential: "hmi-operator@ot.simple.local".into(),
            admin_credential: "ops-admin@simple.local".into(),
            mqtt_control_topic: "factory/sorter/cmd/threshold".into(),
            threshold_register: 10,
            threshold_value: 32000,
            step_ms: 2000,
            impair_window_ms: 600000,
        }
    }

    #[test]
    fn plan_holds_seven_phases_and_nineteen_leaves() {
        let plan = seven_phase_plan();
        assert_eq!(plan.len(), 7);
        let total: usize = plan.iter().map(|(_, a)| a.len()).sum();
        assert_eq!(total, 19);
        let techniques: BTreeSet<&str> =
            plan.iter().flat_map(|(_, a)| a.iter().map(|x| x.technique)).collect();
        assert_eq!(techniques.len(), 19, "every leaf technique is unique");
        assert!(techniques.contains("T1566.001"));
        assert!(techniques.contains("T0836"));
    }

    #[test]
    fn requires_gate_on_facts() {
        let mut runner =
            CampaignRunner::new("apt-sim".into(), "blackenergy-seven-phase".into(), targets());
        assert!(runner.requires_unmet(AbilityKind::SmbLateralMove).is_some());
        runner.note_implant("impl-alpha", "ws-carol", 0);
        assert_eq!(
            runner.requires_unmet(AbilityKind::SmbLateralMove),
            Some("cred.ops-admin@simple.local".into())
        );
        runner.add_fact("cred.ops-admin@simple.local", "DomainAdmin", 0);
        assert!(runner.requires_unmet(AbilityKind::SmbLateralMove).is_none());
        assert!(runner.requires_unmet(AbilityKind::DeviceDiscovery).is_some());
    }

    #[test]
    fn facts_are_append_only_records() {
        let mut runner =
            CampaignRunner::new("apt-sim".into(), "blackenergy-seven-phase".into(), targets());
        runner.add_fact("a", "1", 5);
        runner.add_fact("a", "2", 9);
        assert_eq!(runner.facts.len(), 2, "same key appends, never overwrites");
        assert!(runner.has_fact("a"));
        assert!(runner.has_fact_prefix("a"));
    }
}
