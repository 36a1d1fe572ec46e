//! Scenario materialization: builds a [`World`] from a validated
//! [`ScenarioDoc`], wires every subsystem, and schedules the initial event
//! set. Materializing the same document twice under the same seed yields
//! behaviourally identical worlds.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::campaign::{CampaignRunner, CampaignTargets};
use crate::hosts::{Credential, Host, Npc, Service};
use crate::kernel::{EventQueue, RngForge, MICROS_PER_MS, MICROS_PER_SEC};
use crate::net::{Cidr, Fabric, Firewall, FirewallRule, LinkCfg, SegmentId};
use crate::plc::ladder::LadderProgram;
use crate::plc::scan::LadderRuntime;
use crate::plc::{RegisterBank, Table};
use crate::scenario::ScenarioDoc;
use crate::telemetry::export::{export_bundle, ExportMeta, ManifestCampaign, RunManifest};
use crate::telemetry::{Pipeline, TelemetryError};
use crate::twins::{ProductionParams, ProductionScene, SorterParams, SorterScene};

use super::{
    BrokerUnit, EventKind, GatewayCfg, HistorianUnit, HmiUnit, MqttClientUnit, PlcUnit,
    PublishCfg, SceneKind, TrafficModel, TwinUnit, World, WorldError, POLL_WORD_COUNT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Normal,
    Stress,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Normal => "normal",
            Profile::Stress => "stress",
        }
    }
}

/// Command-line-level overrides applied on top of the document.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub campaign_enabled: Option<bool>,
    pub stress: bool,
}

impl World {
    /// Instantiates and cross-wires every module described by the document.
    pub fn materialize(mut doc: ScenarioDoc, options: &RunOptions) -> Result<World, WorldError> {
        if options.stress {
            doc.apply_stress_profile();
        }
        let seed = options.seed.or(doc.run.seed).unwrap_or(42);
        let campaign_enabled = options.campaign_enabled.unwrap_or(doc.campaign.enabled);
        let profile = if options.stress { Profile::Stress } else { Profile::Normal };

        let mut forge = RngForge::new(seed);
        let mut fabric = Fabric::new(forge.fork("net.links")?);

        // segments, self-links, inter-segment links
        for seg in &doc.topology.segments {
            let cidr = Cidr::parse(&seg.cidr).expect("validated");
            let vlans =
                seg.vlans.iter().map(|v| Cidr::parse(v).expect("validated")).collect();
            fabric.add_segment(seg.id, cidr, vlans)?;
        }
        let jitter = doc.topology.jitter_frac;
        let bandwidth = doc.topology.bandwidth_kbps;
        for seg in &doc.topology.segments {
            fabric.add_link(
                seg.id,
                seg.id,
                LinkCfg {
                    latency_us: seg.intra_latency_us,
                    jitter_frac: jitter,
                    bandwidth_kbps: bandwidth,
                },
            )?;
        }
        for link in &doc.topology.links {
            fabric.add_link(
                link.a,
                link.b,
                LinkCfg { latency_us: link.latency_us, jitter_frac: jitter, bandwidth_kbps: bandwidth },
            )?;
        }
        for fw in &doc.topology.firewalls {
            fabric.add_firewall(Firewall {
                id: fw.id.clone(),
                interfaces: fw
                    .interfaces
                    .iter()
                    .map(|group| group.iter().copied().collect::<BTreeSet<SegmentId>>())
                    .collect(),
                rules: fw
                    .rules
                    .iter()
                    .map(|r| FirewallRule {
                        rule_id: r.id.clone(),
                        src: Cidr::parse(&r.src).expect("validated"),
                        dst: Cidr::parse(&r.dst).expect("validated"),
                        transport: r.transport,
                        dst_port: r.dst_port,
                        action: r.action,
                    })
                    .collect(),
            });
        }
        for tap in &doc.topology.taps {
            fabric.register_tap(*tap)?;
        }

        // hosts and their listening ports
        let mut hosts = BTreeMap::new();
        let mut addr_to_host = BTreeMap::new();
        for host_doc in &doc.hosts {
            let services: BTreeSet<Service> = host_doc
                .services
                .iter()
                .map(|s| Service::parse(s).expect("validated"))
                .collect();
            let open_ports = services.iter().map(|s| s.port()).collect();
            fabric.add_endpoint(host_doc.ip, host_doc.segment, open_ports)?;
            hosts.insert(
                host_doc.id.clone(),
                Host {
                    id: host_doc.id.clone(),
                    addr: host_doc.ip,
                    segment: host_doc.segment,
                    os: host_doc.os,
                    services,
                    domain: host_doc.domain.clone(),
                    events_suppressed_until: None,
                    implants: BTreeSet::new(),
                },
            );
            addr_to_host.insert(host_doc.ip, host_doc.id.clone());
        }

        let credentials: BTreeMap<String, Credential> = doc
            .credentials
            .iter()
            .map(|c| {
                let domain = c.principal.split_once('@').expect("validated").1.to_owned();
                (
                    c.principal.clone(),
                    Credential {
                        principal: c.principal.clone(),
                        domain,
                        grade: c.grade,
                        stored_on: c.stored_on.iter().cloned().collect(),
                        kerberoastable: c.kerberoastable,
                        secret_version: 0,
                    },
                )
            })
            .collect();

        let mut npcs = BTreeMap::new();
        for npc_doc in &doc.npcs {
            npcs.insert(
                npc_doc.name.clone(),
                Npc {
                    name: npc_doc.name.clone(),
                    role: npc_doc.role,
                    host: npc_doc.host.clone(),
                    rng: forge.fork(&format!("npc.{}", npc_doc.name))?,
                    known_secret: 0,
                },
            );
        }

        let mut twins = BTreeMap::new();
        for twin_doc in &doc.twins {
            let rng = forge.fork(&format!("twin.{}", twin_doc.id))?;
            let scene = match twin_doc.scene.as_str() {
                "production" => {
                    let mut params = ProductionParams::default();
                    if let Some(v) = twin_doc.spawn_interval_ms {
                        params.spawn_interval_ms = v;
                    }
                    if let Some(v) = twin_doc.cnc_cycle_ms {
                        params.cnc_cycle_ms = v;
                    }
                    SceneKind::Production(ProductionScene::new(params, rng))
                }
                _ => {
                    let mut params = SorterParams::default();
                    if let Some(v) = twin_doc.spawn_interval_ms {
                        params.spawn_interval_ms = v;
                    }
                    SceneKind::Sorter(SorterScene::new(params, rng))
                }
            };
            let addr = hosts[&twin_doc.host].addr;
            twins.insert(
                twin_doc.id.clone(),
                TwinUnit {
                    id: twin_doc.id.clone(),
                    host: twin_doc.host.clone(),
                    addr,
                    scene,
                    tick_ms: twin_doc.tick_ms,
                },
            );
        }

        let mut plcs = BTreeMap::new();
        for plc_doc in &doc.plcs {
            let program =
                LadderProgram::parse_rungs(&plc_doc.program).expect("validated");
            let mut bank = RegisterBank::new();
            for (key, value) in &plc_doc.holding_init {
                let index: u16 = key.parse().expect("validated");
                bank.set_word(Table::HoldingRegister, index, *value).expect("validated");
            }
            let twin = &twins[&plc_doc.twin];
            plcs.insert(
                plc_doc.id.clone(),
                PlcUnit {
                    id: plc_doc.id.clone(),
                    host: plc_doc.host.clone(),
                    addr: hosts[&plc_doc.host].addr,
                    twin_id: plc_doc.twin.clone(),
                    twin_addr: twin.addr,
                    bank,
                    runtime: LadderRuntime::new(program),
                    scan_ms: plc_doc.scan_ms,
                    next_txn: 0,
                    generation: 0,
                    awaiting_bits: None,
                    awaiting_words: None,
                    view_override: None,
                    overflow_reported: false,
                },
            );
        }

        let mut hmis = BTreeMap::new();
        for hmi_doc in &doc.hmis {
            hmis.insert(
                hmi_doc.id.clone(),
                HmiUnit {
                    id: hmi_doc.id.clone(),
                    host: hmi_doc.host.clone(),
                    addr: hosts[&hmi_doc.host].addr,
                    plc: hmi_doc.plc.clone(),
                    plc_addr: plcs[&hmi_doc.plc].addr,
                    poll_ms: hmi_doc.poll_ms,
                    next_txn: 0,
                },
            );
        }

        let mut historians = BTreeMap::new();
        for h in &doc.historians {
            historians.insert(
                h.id.clone(),
                HistorianUnit {
                    id: h.id.clone(),
                    host: h.host.clone(),
                    addr: hosts[&h.host].addr,
                    plc: h.plc.clone(),
                    plc_addr: plcs[&h.plc].addr,
                    poll_ms: h.poll_ms,
                    next_txn: 0,
                },
            );
        }

        let broker = BrokerUnit {
            host: doc.mqtt.broker_host.clone(),
            addr: hosts[&doc.mqtt.broker_host].addr,
            broker: simpleics_protocols::Broker::new(),
            next_session_id: 1,
            by_key: BTreeMap::new(),
            by_id: BTreeMap::new(),
        };

        let mut mqtt_clients = BTreeMap::new();
        for client_doc in &doc.mqtt.clients {
            mqtt_clients.insert(
                client_doc.id.clone(),
                MqttClientUnit {
                    id: client_doc.id.clone(),
                    host: client_doc.host.clone(),
                    addr: hosts[&client_doc.host].addr,
                    keep_alive_s: client_doc.keep_alive_s,
                    subscriptions: client_doc.subscriptions.clone(),
                    publishes: client_doc
                        .publishes
                        .iter()
                        .map(|p| PublishCfg {
                            topic: p.topic.clone(),
                            interval_ms: p.interval_ms,
                            source: p.source.clone(),
                            retain: p.retain,
                        })
                        .collect(),
                    gateway: client_doc.gateway.as_ref().map(|gw| GatewayCfg {
                        plc: gw.plc.clone(),
                        plc_addr: plcs[&gw.plc].addr,
                        poll_ms: gw.poll_ms,
                    }),
                    session: None,
                    connected: false,
                    next_packet_id: 0,
                    next_txn: 0,
                    last_sent_at: 0,
                    image_words: [0; POLL_WORD_COUNT as usize],
                },
            );
        }

        // campaign runner with resolved targets
        let campaign = if campaign_enabled {
            let c = &doc.campaign;
            let victim_host = npcs
                .get(&c.victim)
                .map(|n| n.host.clone())
                .ok_or_else(|| WorldError::Materialize("victim npc missing".into()))?;
            let victim_domain = hosts[&victim_host]
                .domain
                .clone()
                .ok_or_else(|| WorldError::Materialize("victim host has no domain".into()))?;
            let jump_domain = hosts[&c.jump_host]
                .domain
                .clone()
                .ok_or_else(|| WorldError::Materialize("jump host has no domain".into()))?;
            let find_dc = |domain: &str| {
                hosts
                    .values()
                    .find(|h| h.has(Service::AuthDc) && h.domain.as_deref() == Some(domain))
                    .map(|h| h.id.clone())
                    .ok_or_else(|| {
                        WorldError::Materialize(format!("no domain controller for {domain}"))
                    })
            };
            let targets = CampaignTargets {
                attacker_host: c.attacker_host.clone(),
                victim: c.victim.clone(),
                victim_host,
                lateral_host: c.lateral_host.clone(),
                jump_host: c.jump_host.clone(),
                it_dc: find_dc(&victim_domain)?,
                ot_dc: find_dc(&jump_domain)?,
                ot_plc_host: plcs[&c.ot_plc].host.clone(),
                iiot_plc_host: plcs[&c.iiot_plc].host.clone(),
                broker_host: doc.mqtt.broker_host.clone(),
                hmi_credential: c.hmi_credential.clone(),
                admin_credential: c.admin_credential.clone(),
                mqtt_control_topic: c.mqtt_control_topic.clone(),
                threshold_register: c.threshold_register,
                threshold_value: c.threshold_value,
                step_ms: c.step_ms,
                impair_window_ms: c.impair_window_ms,
            };
            Some(CampaignRunner::new("apt-sim-01".into(), c.plan.clone(), targets))
        } else {
            None
        };

        let mail_rng = forge.fork("mail.delays")?;
        let beacon_rng = forge.fork("campaign.beacons")?;

        let mut world = World {
            queue: EventQueue::new(),
            forge,
            fabric,
            pipeline: Pipeline::new(),
            hosts,
            addr_to_host,
            credentials,
            mailboxes: BTreeMap::new(),
            npcs,
            plcs,
            twins,
            hmis,
            historians,
            broker,
            mqtt_clients,
            campaign,
            beacons: BTreeMap::new(),
            beacon_cause: None,
            sessions: BTreeMap::new(),
            npc_action_counts: BTreeMap::new(),
            working_day_us: doc.run.working_day_hours as u64 * 3600 * MICROS_PER_SEC,
            scenario: doc,
            profile,
            seed,
            traffic_model: TrafficModel::default(),
            mail_rng,
            beacon_rng,
            next_session_serial: 0,
            next_packet_serial: 0,
            ephemeral_ports: BTreeMap::new(),
            trace_hash: 0xcbf2_9ce4_8422_2325,
        };

        world.schedule_initial_events()?;
        world.traffic_model = world.build_traffic_model();
        Ok(world)
    }

    fn schedule_initial_events(&mut self) -> Result<(), WorldError> {
        self.queue.schedule(0, EventKind::NpcPlanDay { day: 0 })?;

        let plc_ids: Vec<(String, u64)> =
            self.plcs.values().map(|p| (p.id.clone(), p.scan_ms)).collect();
        for (plc, scan_ms) in plc_ids {
            self.queue.schedule(scan_ms * MICROS_PER_MS, EventKind::PlcScan { plc })?;
        }
        let twin_ids: Vec<(String, u64)> =
            self.twins.values().map(|t| (t.id.clone(), t.tick_ms)).collect();
        for (twin, tick_ms) in twin_ids {
            self.queue.schedule(tick_ms * MICROS_PER_MS, EventKind::TwinTick { twin })?;
        }
        let hmi_ids: Vec<(String, u64, bool)> = self
            .scenario
            .hmis
            .iter()
            .map(|h| (h.id.clone(), h.poll_ms, h.startup_command))
            .collect();
        for (hmi, poll_ms, startup) in hmi_ids {
            self.queue
                .schedule(poll_ms * MICROS_PER_MS, EventKind::HmiPoll { hmi: hmi.clone() })?;
            if startup {
                self.queue.schedule(MICROS_PER_SEC, EventKind::HmiStartup { hmi })?;
            }
        }
        let historian_ids: Vec<(String, u64)> =
            self.historians.values().map(|h| (h.id.clone(), h.poll_ms)).collect();
        for (historian, poll_ms) in historian_ids {
            self.queue
                .schedule(poll_ms * MICROS_PER_MS, EventKind::HistorianPoll { historian })?;
        }

        // MQTT clients connect shortly after start, staggered and ordered
        let client_ids: Vec<String> = self.mqtt_clients.keys().cloned().collect();
        for (idx, client) in client_ids.iter().enumerate() {
            let connect_at = Self::mqtt_connect_at(idx);
            self.queue.schedule(connect_at, EventKind::MqttConnect { client: client.clone() })?;
            let unit = &self.mqtt_clients[client];
            for (publish_idx, publish) in unit.publishes.iter().enumerate() {
                self.queue.schedule(
                    connect_at + publish.interval_ms * MICROS_PER_MS,
                    EventKind::MqttPublish { client: client.clone(), publish_idx },
                )?;
            }
            if let Some(gw) = &unit.gateway {
                self.queue.schedule(
                    connect_at + gw.poll_ms * MICROS_PER_MS,
                    EventKind::GatewayPoll { client: client.clone() },
                )?;
            }
        }

        // domain members refresh their machine accounts periodically
        let heartbeat_hosts: Vec<String> = self
            .hosts
            .values()
            .filter(|h| {
                h.domain.is_some()
                    && h.os != crate::hosts::OsFamily::Linux
                    && !h.has(Service::AuthDc)
            })
            .map(|h| h.id.clone())
            .collect();
        for (idx, host) in heartbeat_hosts.into_iter().enumerate() {
            self.queue.schedule(
                (idx as u64 + 1) * MICROS_PER_SEC,
                EventKind::Heartbeat { host },
            )?;
        }

        if self.campaign.is_some() {
            self.queue.schedule(5 * MICROS_PER_SEC, EventKind::CampaignStep)?;
        }
        Ok(())
    }

    fn mqtt_connect_at(idx: usize) -> u64 {
        100 * MICROS_PER_MS + idx as u64 * 10 * MICROS_PER_MS
    }

    /// Derives the analytic packet-count model from the configured rates.
    /// Every industrial cycle is strictly periodic, so expected counts are
    /// exact closed forms of the intervals.
    fn build_traffic_model(&self) -> TrafficModel {
        let mut model = TrafficModel::default();
        for plc in self.plcs.values() {
            // read bits + read words + write coils, request and response each
            model.modbus_cycles.push((
                plc.scan_ms * MICROS_PER_MS,
                plc.scan_ms * MICROS_PER_MS,
                6,
            ));
        }
        for hmi in self.hmis.values() {
            model.modbus_cycles.push((hmi.poll_ms * MICROS_PER_MS, hmi.poll_ms * MICROS_PER_MS, 4));
        }
        for historian in self.historians.values() {
            model.modbus_cycles.push((
                historian.poll_ms * MICROS_PER_MS,
                historian.poll_ms * MICROS_PER_MS,
                2,
            ));
        }

        let client_ids: Vec<String> = self.mqtt_clients.keys().cloned().collect();
        for (idx, client_id) in client_ids.iter().enumerate() {
            let unit = &self.mqtt_clients[client_id];
            let connect_at = Self::mqtt_connect_at(idx);
            if let Some(gw) = &unit.gateway {
                model.modbus_cycles.push((
                    connect_at + gw.poll_ms * MICROS_PER_MS,
                    gw.poll_ms * MICROS_PER_MS,
                    2,
                ));
            }
            // CONNECT/CONNACK plus SUBSCRIBE/SUBACK when filters exist
            model.mqtt_fixed += 2 + if unit.subscriptions.is_empty() { 0 } else { 2 };
            for publish in &unit.publishes {
                let subscribers = self
                    .mqtt_clients
                    .values()
                    .filter(|other| {
                        other
                            .subscriptions
                            .iter()
                            .any(|f| simpleics_protocols::mqtt::topic_matches(f, &publish.topic))
                    })
                    .count() as u64;
                model.mqtt_publishes.push((
                    connect_at + publish.interval_ms * MICROS_PER_MS,
                    publish.interval_ms * MICROS_PER_MS,
                    1 + subscribers,
                ));
            }
            if unit.publishes.is_empty() {
                // a pure subscriber pings every keep-alive interval
                let keep = unit.keep_alive_s as u64 * MICROS_PER_SEC;
                model.mqtt_keepalives.push((connect_at + keep, keep));
            }
        }
        model
    }

    /// Exports the dataset bundle for the completed run.
    pub fn export(&self, dir: &Path) -> Result<RunManifest, TelemetryError> {
        let t_end = self.queue.now();
        let (expected_modbus, expected_mqtt) = self.traffic_model.expected(t_end);
        let campaign_trace = match &self.campaign {
            Some(runner) => runner.trace_json(),
            None => serde_json::json!({
                "enabled": false,
                "campaign": null,
                "phases": [],
                "facts": [],
            }),
        };
        let campaign_meta = match &self.campaign {
            Some(runner) => ManifestCampaign {
                enabled: true,
                name: runner.name.clone(),
                executed_techniques: runner.executed_techniques(),
                phases_completed: runner.phases_completed(),
                aborted: runner.aborted,
            },
            None => ManifestCampaign {
                enabled: false,
                name: String::new(),
                executed_techniques: Vec::new(),
                phases_completed: 0,
                aborted: false,
            },
        };
        let meta = ExportMeta {
            scenario_name: self.scenario.name.clone(),
            scenario_fnv1a64: self.scenario.content_hash(),
            seed: self.seed,
            profile: self.profile.name().to_owned(),
            clock_span_us: (0, t_end),
            events_dispatched: self.queue.dispatched(),
            dispatch_trace_fnv1a64: self.dispatch_trace_hash(),
            campaign: campaign_meta,
            expected_modbus_packets: expected_modbus,
            expected_mqtt_packets: expected_mqtt,
            packets_sent: self.fabric.counters.sent,
            packets_delivered: self.fabric.counters.delivered,
            packets_dropped: self.fabric.counters.dropped,
        };
        export_bundle(dir, &self.pipeline, &campaign_trace, &meta)
    }
}
