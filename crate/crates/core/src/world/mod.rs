//! The simulation world: every subsystem wired onto one deterministic
//! event loop.
//!
//! All mutation happens from event dispatch. Packets move between hosts via
//! [`crate::net::Fabric`]; every send produces flow telemetry at the taps it
//! crosses, and Modbus/MQTT payloads additionally produce raw packet
//! records for the PCAP. Causes ride along with packets and derived effects
//! so telemetry labelling stays causal end to end.

mod industrial;
mod materialize;
mod people;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::campaign::CampaignRunner;
use crate::hosts::{Credential, Host, HostId, MailItem, Npc, NpcActionKind, NpcRole};
use crate::kernel::{EventQueue, KernelError, RngForge, SimRng, VirtualTime};
use crate::net::{
    Disposition, DropReason, Fabric, NetError, SegmentId, SessionKey, Transport,
};
use crate::plc::scan::LadderRuntime;
use crate::plc::{RegisterBank, ViewOverride};
use crate::scenario::ScenarioDoc;
use crate::telemetry::{
    AttackCause, Body, Cause, FlowBody, PacketBody, PayloadProto, Pipeline, TelemetryError,
    Verdict,
};
use crate::twins::{production::ProductionScene, sorter::SorterScene};

pub use materialize::{Profile, RunOptions};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("kernel: {0}")]
    Kernel(#[from] KernelError),
    #[error("fabric: {0}")]
    Net(#[from] NetError),
    #[error("telemetry: {0}")]
    Telemetry(#[from] TelemetryError),
    #[error("materialize: {0}")]
    Materialize(String),
}

/// Payload carried by a simulated packet. Industrial protocols carry their
/// real wire bytes; everything else carries only a size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Bytes(Vec<u8>),
    Opaque(u32),
}

impl Payload {
    pub fn len(&self) -> u32 {
        match self {
            Payload::Bytes(b) => b.len() as u32,
            Payload::Opaque(n) => *n,
        }
    }

    fn proto_for_port(port: u16) -> Option<PayloadProto> {
        match port {
            502 => Some(PayloadProto::Modbus),
            1883 => Some(PayloadProto::Mqtt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthChannel {
    Rdp,
    Smb,
    Dc,
    Hmi,
}

/// Application-level meaning of a packet, routed at the destination.
#[derive(Debug, Clone, PartialEq)]
pub enum AppData {
    None,
    /// Payload bytes decode as a Modbus request PDU.
    ModbusRequest,
    /// Payload bytes decode as a Modbus response PDU.
    ModbusResponse,
    /// Payload bytes decode as one MQTT control packet.
    Mqtt,
    Mail(MailItem),
    HttpRequest { response_bytes: u32 },
    HttpResponse,
    SmbAccess { share: String },
    AuthRequest {
        principal: String,
        secret_version: u32,
        channel: AuthChannel,
        install_implant: Option<String>,
    },
    AuthResponse { success: bool },
    CredentialRotate { principal: String, admin: String, admin_version: u32 },
    Probe,
    ProbeReply,
    Beacon { implant: String },
    BeaconReply,
    Ack,
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub serial: u64,
    pub src: Ipv4Addr,
    pub src_port: u16,
    pub dst: Ipv4Addr,
    pub dst_port: u16,
    pub transport: Transport,
    pub session: SessionKey,
    pub opens: bool,
    pub payload: Payload,
    pub app: AppData,
    pub cause: Cause,
    pub sent_at: VirtualTime,
}

/// Why a long-lived session exists; drives response routing at the client.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionPurpose {
    PlcPoll { plc: String },
    PlcWrite { plc: String },
    HmiPoll { hmi: String },
    HmiCommand { hmi: String },
    HistorianPoll { historian: String },
    GatewayPoll { client: String },
    GatewayCommand { client: String },
    MqttLink { client: String },
    CampaignMqtt,
    CampaignModbus { intent: CampaignModbusIntent },
    CampaignProbe,
    NpcTraffic,
    Heartbeat,
    MailDelivery,
    C2 { implant: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CampaignModbusIntent {
    ProcessRead,
    Monitor,
    ViewOverride,
    ControlWrite,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub key: SessionKey,
    pub initiator: HostId,
    pub responder: HostId,
    pub purpose: SessionPurpose,
    pub opened: bool,
}

/// Spec-facing outcome of a packet send.
#[derive(Debug, Clone, PartialEq)]
pub enum DeliveryOutcome {
    Delivered { at: VirtualTime },
    Dropped { reason: DropReason },
}

impl DeliveryOutcome {
    pub fn delivered(&self) -> bool {
        matches!(self, DeliveryOutcome::Delivered { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmiCmd {
    Start,
    Stop,
    Reset,
}

impl HmiCmd {
    /// Command coils sit in the `%QX101.x` byte: coil 808 start, 809 stop,
    /// 810 reset.
    pub fn coil(&self) -> u16 {
        match self {
            HmiCmd::Start => 808,
            HmiCmd::Stop => 809,
            HmiCmd::Reset => 810,
        }
    }
}

/// Everything the event loop can be asked to do.
#[derive(Debug)]
pub enum EventKind {
    PacketArrive(Box<Packet>),
    PlcScan { plc: String },
    TwinTick { twin: String },
    HmiPoll { hmi: String },
    HmiStartup { hmi: String },
    HmiRelease { hmi: String, coil: u16 },
    HistorianPoll { historian: String },
    GatewayPoll { client: String },
    MqttConnect { client: String },
    MqttPublish { client: String, publish_idx: usize },
    MqttKeepAlive { client: String },
    NpcPlanDay { day: u64 },
    NpcAction { npc: String, kind: NpcActionKind },
    OpenMail { recipient: String, mailbox_idx: usize },
    Beacon { implant: String },
    Heartbeat { host: HostId },
    CampaignStep,
}

impl EventKind {
    /// Stable tag fed into the dispatch-trace hash.
    fn trace_tag(&self) -> (u8, u64) {
        fn h(s: &str) -> u64 {
            crate::telemetry::export::fnv1a64(s.as_bytes())
        }
        match self {
            EventKind::PacketArrive(p) => (1, p.serial),
            EventKind::PlcScan { plc } => (2, h(plc)),
            EventKind::TwinTick { twin } => (3, h(twin)),
            EventKind::HmiPoll { hmi } => (4, h(hmi)),
            EventKind::HmiStartup { hmi } => (5, h(hmi)),
            EventKind::HmiRelease { hmi, coil } => (6, h(hmi) ^ *coil as u64),
            EventKind::HistorianPoll { historian } => (7, h(historian)),
            EventKind::GatewayPoll { client } => (8, h(client)),
            EventKind::MqttConnect { client } => (9, h(client)),
            EventKind::MqttPublish { client, publish_idx } => {
                (10, h(client) ^ *publish_idx as u64)
            }
            EventKind::MqttKeepAlive { client } => (11, h(client)),
            EventKind::NpcPlanDay { day } => (12, *day),
            EventKind::NpcAction { npc, kind } => (13, h(npc) ^ (*kind as u64) << 32),
            EventKind::OpenMail { recipient, mailbox_idx } => {
                (14, h(recipient) ^ (*mailbox_idx as u64) << 32)
            }
            EventKind::Beacon { implant } => (15, h(implant)),
            EventKind::Heartbeat { host } => (16, h(host)),
            EventKind::CampaignStep => (17, 0),
        }
    }
}

/// Modbus poll geometry between a PLC and its twin: eight sensor bits and
/// eight words in, eight actuator coils out, all in the 800/100 windows.
pub const POLL_BIT_BASE: u16 = 800;
pub const POLL_BIT_COUNT: u16 = 8;
pub const POLL_WORD_BASE: u16 = 100;
pub const POLL_WORD_COUNT: u16 = 8;
/// Writing this holding register freezes the served process view (the
/// modelled firmware-level view manipulation hook).
pub const VIEW_OVERRIDE_REGISTER: u16 = 900;

#[derive(Debug)]
pub struct PlcUnit {
    pub id: String,
    pub host: HostId,
    pub addr: Ipv4Addr,
    pub twin_id: String,
    pub twin_addr: Ipv4Addr,
    pub bank: RegisterBank,
    pub runtime: LadderRuntime,
    pub scan_ms: u64,
    pub next_txn: u16,
    pub generation: u64,
    pub awaiting_bits: Option<u16>,
    pub awaiting_words: Option<u16>,
    pub view_override: Option<(ViewOverride, AttackCause)>,
    pub overflow_reported: bool,
}

#[derive(Debug)]
pub enum SceneKind {
    Production(ProductionScene),
    Sorter(SorterScene),
}

impl SceneKind {
    pub fn bank_mut(&mut self) -> &mut RegisterBank {
        match self {
            SceneKind::Production(s) => &mut s.bank,
            SceneKind::Sorter(s) => &mut s.bank,
        }
    }

    pub fn bank(&self) -> &RegisterBank {
        match self {
            SceneKind::Production(s) => &s.bank,
            SceneKind::Sorter(s) => &s.bank,
        }
    }

    pub fn historian_prefix(&self) -> &'static str {
        match self {
            SceneKind::Production(_) => "prod",
            SceneKind::Sorter(_) => "sorter",
        }
    }
}

#[derive(Debug)]
pub struct TwinUnit {
    pub id: String,
    pub host: HostId,
    pub addr: Ipv4Addr,
    pub scene: SceneKind,
    pub tick_ms: u64,
}

#[derive(Debug)]
pub struct HmiUnit {
    pub id: String,
    pub host: HostId,
    pub addr: Ipv4Addr,
    pub plc: String,
    pub plc_addr: Ipv4Addr,
    pub poll_ms: u64,
    pub next_txn: u16,
}

#[derive(Debug)]
pub struct HistorianUnit {
    pub id: String,
    pub host: HostId,
    pub addr: Ipv4Addr,
    pub plc: String,
    pub plc_addr: Ipv4Addr,
    pub poll_ms: u64,
    pub next_txn: u16,
}

#[derive(Debug)]
pub struct BrokerUnit {
    pub host: HostId,
    pub addr: Ipv4Addr,
    pub broker: simpleics_protocols::Broker,
    pub next_session_id: u64,
    pub by_key: BTreeMap<SessionKey, u64>,
    pub by_id: BTreeMap<u64, SessionKey>,
}

#[derive(Debug, Clone)]
pub struct PublishCfg {
    pub topic: String,
    pub interval_ms: u64,
    pub source: String,
    pub retain: bool,
}

#[derive(Debug, Clone)]
pub struct GatewayCfg {
    pub plc: String,
    pub plc_addr: Ipv4Addr,
    pub poll_ms: u64,
}

#[derive(Debug)]
pub struct MqttClientUnit {
    pub id: String,
    pub host: HostId,
    pub addr: Ipv4Addr,
    pub keep_alive_s: u16,
    pub subscriptions: Vec<String>,
    pub publishes: Vec<PublishCfg>,
    pub gateway: Option<GatewayCfg>,
    pub session: Option<SessionKey>,
    pub connected: bool,
    pub next_packet_id: u16,
    pub next_txn: u16,
    pub last_sent_at: VirtualTime,
    /// Last polled input-register window from the gateway PLC.
    pub image_words: [u16; POLL_WORD_COUNT as usize],
}

#[derive(Debug, Clone)]
pub struct BeaconCfg {
    pub implant: String,
    pub host: HostId,
    pub interval_ms: u64,
}

/// Deterministic per-(cycle-kind) traffic model used for the analytic
/// packet-count prediction in the run manifest.
#[derive(Debug, Clone, Default)]
pub struct TrafficModel {
    /// `(first_at_us, interval_us, packets_per_cycle)`
    pub modbus_cycles: Vec<(u64, u64, u64)>,
    /// `(first_at_us, interval_us, packets_per_publish)`
    pub mqtt_publishes: Vec<(u64, u64, u64)>,
    /// `(first_at_us, interval_us)` — idle-subscriber keep-alive ping pairs
    pub mqtt_keepalives: Vec<(u64, u64)>,
    /// Connect/subscribe handshake packets.
    pub mqtt_fixed: u64,
}

fn count_fires(first_at: u64, interval: u64, t_end: u64) -> u64 {
    if t_end < first_at {
        0
    } else {
        (t_end - first_at) / interval + 1
    }
}

impl TrafficModel {
    pub fn expected(&self, t_end: u64) -> (u64, u64) {
        let modbus = self
            .modbus_cycles
            .iter()
            .map(|(first, interval, pkts)| count_fires(*first, *interval, t_end) * pkts)
            .sum();
        let mqtt = self.mqtt_fixed
            + self
                .mqtt_publishes
                .iter()
                .map(|(first, interval, pkts)| count_fires(*first, *interval, t_end) * pkts)
                .sum::<u64>()
            + self
                .mqtt_keepalives
                .iter()
                .map(|(first, interval)| count_fires(*first, *interval, t_end) * 2)
                .sum::<u64>();
        (modbus, mqtt)
    }
}

pub struct World {
    pub queue: EventQueue<EventKind>,
    pub forge: RngForge,
    pub fabric: Fabric,
    pub pipeline: Pipeline,
    pub hosts: BTreeMap<HostId, Host>,
    pub addr_to_host: BTreeMap<Ipv4Addr, HostId>,
    pub credentials: BTreeMap<String, Credential>,
    pub mailboxes: BTreeMap<String, Vec<MailItem>>,
    pub npcs: BTreeMap<String, Npc>,
    pub plcs: BTreeMap<String, PlcUnit>,
    pub twins: BTreeMap<String, TwinUnit>,
    pub hmis: BTreeMap<String, HmiUnit>,
    pub historians: BTreeMap<String, HistorianUnit>,
    pub broker: BrokerUnit,
    pub mqtt_clients: BTreeMap<String, MqttClientUnit>,
    pub campaign: Option<CampaignRunner>,
    pub beacons: BTreeMap<String, BeaconCfg>,
    pub beacon_cause: Option<AttackCause>,
    pub sessions: BTreeMap<SessionKey, SessionState>,
    pub npc_action_counts: BTreeMap<(NpcRole, NpcActionKind), u64>,
    pub scenario: ScenarioDoc,
    pub profile: Profile,
    pub seed: u64,
    pub traffic_model: TrafficModel,
    pub working_day_us: u64,
    mail_rng: SimRng,
    beacon_rng: SimRng,
    next_session_serial: u64,
    next_packet_serial: u64,
    ephemeral_ports: BTreeMap<HostId, u16>,
    trace_hash: u64,
}

impl World {
    pub fn now(&self) -> VirtualTime {
        self.queue.now()
    }

    pub fn host_addr(&self, id: &str) -> Ipv4Addr {
        self.hosts[id].addr
    }

    pub fn dispatch_trace_hash(&self) -> u64 {
        self.trace_hash
    }

    /// Runs the event loop until `t_end`, dispatching every due event in
    /// `(fire_at, sequence)` order, and leaves the clock at `t_end`.
    pub fn run_until(&mut self, t_end: VirtualTime) -> Result<u64, WorldError> {
        let before = self.queue.dispatched();
        while let Some(firing) = self.queue.pop_due(t_end) {
            let (tag, ident) = firing.payload.trace_tag();
            let mut h = self.trace_hash ^ firing.fire_at;
            h = h.wrapping_mul(0x100_0000_01b3);
            h ^= firing.sequence ^ ((tag as u64) << 56) ^ ident;
            self.trace_hash = h.wrapping_mul(0x100_0000_01b3);
            self.dispatch(firing.payload)?;
        }
        self.queue.advance_to(t_end)?;
        Ok(self.queue.dispatched() - before)
    }

    fn dispatch(&mut self, event: EventKind) -> Result<(), WorldError> {
        match event {
            EventKind::PacketArrive(packet) => self.on_packet_arrive(*packet),
            EventKind::PlcScan { plc } => self.on_plc_scan(&plc),
            EventKind::TwinTick { twin } => self.on_twin_tick(&twin),
            EventKind::HmiPoll { hmi } => self.on_hmi_poll(&hmi),
            EventKind::HmiStartup { hmi } => self.on_hmi_startup(&hmi),
            EventKind::HmiRelease { hmi, coil } => self.on_hmi_release(&hmi, coil),
            EventKind::HistorianPoll { historian } => self.on_historian_poll(&historian),
            EventKind::GatewayPoll { client } => self.on_gateway_poll(&client),
            EventKind::MqttConnect { client } => self.on_mqtt_connect(&client),
            EventKind::MqttPublish { client, publish_idx } => {
                self.on_mqtt_publish(&client, publish_idx)
            }
            EventKind::MqttKeepAlive { client } => self.on_mqtt_keepalive(&client),
            EventKind::NpcPlanDay { day } => self.on_npc_plan_day(day),
            EventKind::NpcAction { npc, kind } => self.on_npc_action(&npc, kind),
            EventKind::OpenMail { recipient, mailbox_idx } => {
                self.on_open_mail(&recipient, mailbox_idx)
            }
            EventKind::Beacon { implant } => self.on_beacon(&implant),
            EventKind::Heartbeat { host } => self.on_heartbeat(&host),
            EventKind::CampaignStep => self.on_campaign_step(),
        }
    }

    fn on_campaign_step(&mut self) -> Result<(), WorldError> {
        let Some(mut runner) = self.campaign.take() else {
            return Ok(());
        };
        let outcome = runner.step(self);
        let step_ms = runner.step_interval_ms();
        let keep_running = match outcome {
            Ok(active) => active,
            Err(e) => {
                self.campaign = Some(runner);
                return Err(e);
            }
        };
        self.campaign = Some(runner);
        if keep_running {
            self.queue.schedule_in(step_ms * crate::kernel::MICROS_PER_MS, EventKind::CampaignStep)?;
        }
        Ok(())
    }

    // -----------------------------------------------------------------
    // session + packet plumbing
    // -----------------------------------------------------------------

    fn ephemeral_port(&mut self, host: &HostId) -> u16 {
        let port = self.ephemeral_ports.entry(host.clone()).or_insert(49152);
        let current = *port;
        *port = port.checked_add(1).unwrap_or(49152);
        current
    }

    /// Creates a session between two hosts; the first `send_to_responder`
    /// on it is the connection-opening packet the firewalls evaluate.
    pub fn open_session(
        &mut self,
        initiator: &HostId,
        responder: &HostId,
        transport: Transport,
        service_port: u16,
        purpose: SessionPurpose,
    ) -> SessionKey {
        let serial = self.next_session_serial;
        self.next_session_serial += 1;
        let client_port = self.ephemeral_port(initiator);
        let key = SessionKey {
            initiator: self.host_addr(initiator),
            responder: self.host_addr(responder),
            transport,
            service_port,
            serial: (serial << 16) | client_port as u64,
        };
        self.sessions.insert(
            key,
            SessionState {
                key,
                initiator: initiator.clone(),
                responder: responder.clone(),
                purpose,
                opened: false,
            },
        );
        key
    }

    pub fn session_client_port(key: &SessionKey) -> u16 {
        (key.serial & 0xFFFF) as u16
    }

    /// Sends a packet from the session initiator to the responder.
    pub fn send_to_responder(
        &mut self,
        key: SessionKey,
        payload: Payload,
        app: AppData,
        cause: Cause,
    ) -> Result<DeliveryOutcome, WorldError> {
        let opens = {
            let state = self.sessions.get_mut(&key).expect("session exists");
            let opens = !state.opened;
            state.opened = true;
            opens
        };
        self.send_packet(
            key.initiator,
            Self::session_client_port(&key),
            key.responder,
            key.service_port,
            key.transport,
            key,
            opens,
            payload,
            app,
            cause,
        )
    }

    /// Sends a packet from the responder back to the initiator.
    pub fn send_to_initiator(
        &mut self,
        key: SessionKey,
        payload: Payload,
        app: AppData,
        cause: Cause,
    ) -> Result<DeliveryOutcome, WorldError> {
        self.send_packet(
            key.responder,
            key.service_port,
            key.initiator,
            Self::session_client_port(&key),
            key.transport,
            key,
            false,
            payload,
            app,
            cause,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn send_packet(
        &mut self,
        src: Ipv4Addr,
        src_port: u16,
        dst: Ipv4Addr,
        dst_port: u16,
        transport: Transport,
        session: SessionKey,
        opens: bool,
        payload: Payload,
        app: AppData,
        cause: Cause,
    ) -> Result<DeliveryOutcome, WorldError> {
        let serial = self.next_packet_serial;
        self.next_packet_serial += 1;
        let now = self.now();
        let disposition =
            self.fabric.dispose(src, dst, transport, dst_port, payload.len(), session, opens);

        let (verdict, last_us, taps, fragments, outcome) = match disposition {
            Disposition::Deliver { latency_us, taps_crossed, fragments } => {
                let at = now + latency_us;
                (Verdict::Delivered, at, taps_crossed, fragments, DeliveryOutcome::Delivered { at })
            }
            Disposition::Drop { reason, taps_crossed } => (
                Verdict::Dropped { reason: reason.summary() },
                now,
                taps_crossed,
                1,
                DeliveryOutcome::Dropped { reason },
            ),
        };

        let src_segment = self.fabric.segment_of(src).unwrap_or(SegmentId::External);
        let dst_segment = self.fabric.segment_of(dst).unwrap_or(SegmentId::External);
        let label = cause.label();
        for tap in &taps {
            self.pipeline.observe(
                now,
                Some(*tap),
                format!("tap.{tap}"),
                Body::Flow(FlowBody {
                    packet_serial: serial,
                    src,
                    src_port,
                    dst,
                    dst_port,
                    transport,
                    src_segment,
                    dst_segment,
                    bytes: payload.len(),
                    packets: fragments,
                    first_us: now,
                    last_us,
                    verdict: verdict.clone(),
                }),
                label.clone(),
            )?;
        }
        if let Payload::Bytes(bytes) = &payload {
            if let Some(proto) = Payload::proto_for_port(if dst_port == 502 || dst_port == 1883 {
                dst_port
            } else {
                src_port
            }) {
                if !taps.is_empty() {
                    self.pipeline.observe(
                        now,
                        Some(taps[0]),
                        format!("tap.{}", taps[0]),
                        Body::Packet(PacketBody {
                            proto,
                            src,
                            src_port,
                            dst,
                            dst_port,
                            bytes: bytes.clone(),
                        }),
                        label,
                    )?;
                }
            }
        }

        if let DeliveryOutcome::Delivered { at } = outcome {
            let packet = Packet {
                serial,
                src,
                src_port,
                dst,
                dst_port,
                transport,
                session,
                opens,
                payload,
                app,
                cause,
                sent_at: now,
            };
            self.queue.schedule(at, EventKind::PacketArrive(Box::new(packet)))?;
        }
        Ok(outcome)
    }

    fn on_packet_arrive(&mut self, packet: Packet) -> Result<(), WorldError> {
        let Some(state) = self.sessions.get(&packet.session).cloned() else {
            return Ok(()); // session dropped by its owner
        };
        let at_responder =
            packet.dst == packet.session.responder && packet.dst_port == packet.session.service_port;
        if at_responder {
            self.handle_request(&state, packet)
        } else {
            self.handle_response(&state, packet)
        }
    }

    // -----------------------------------------------------------------
    // telemetry helpers
    // -----------------------------------------------------------------

    /// Emits a host event unless the host's sink is suppressed.
    pub fn emit_host_event(
        &mut self,
        host_id: &str,
        event_id: u16,
        fields: &[(&str, &str)],
        cause: &Cause,
    ) -> Result<(), WorldError> {
        let now = self.now();
        let Some(host) = self.hosts.get(host_id) else {
            return Ok(());
        };
        if host.events_suppressed(now) {
            return Ok(());
        }
        let segment = host.segment;
        let body = Body::Host(crate::telemetry::HostEventBody {
            host: host_id.to_owned(),
            event_id,
            fields: fields.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        });
        self.pipeline.observe(now, Some(segment), host_id.to_owned(), body, cause.label())?;
        Ok(())
    }

    /// Emits one historian/operational sample.
    pub fn emit_operational(
        &mut self,
        source: &str,
        segment: SegmentId,
        tag: String,
        value: f64,
        cause: &Cause,
    ) -> Result<(), WorldError> {
        let now = self.now();
        self.pipeline.observe(
            now,
            Some(segment),
            source.to_owned(),
            Body::Operational(crate::telemetry::OperationalBody { tag, value }),
            cause.label(),
        )?;
        Ok(())
    }

    // -----------------------------------------------------------------
    // implants and beacons
    // -----------------------------------------------------------------

    /// Installs an implant on a host: process-creation event, campaign
    /// fact, and a C2 beacon schedule.
    pub fn install_implant(
        &mut self,
        host_id: &str,
        implant: &str,
        cause: &Cause,
    ) -> Result<(), WorldError> {
        if let Some(host) = self.hosts.get_mut(host_id) {
            host.implants.insert(implant.to_owned());
        }
        self.emit_host_event(
            host_id,
            crate::hosts::EVENT_PROCESS_CREATION,
            &[("process", "update_svc.exe"), ("parent", "explorer.exe")],
            cause,
        )?;
        let now = self.now();
        if let Some(runner) = self.campaign.as_mut() {
            runner.note_implant(implant, host_id, now);
        }
        let interval_ms = self
            .scenario
            .campaign
            .beacon_interval_ms
            .max(1000);
        self.beacons.insert(
            implant.to_owned(),
            BeaconCfg { implant: implant.to_owned(), host: host_id.to_owned(), interval_ms },
        );
        if self.beacon_cause.is_some() {
            self.schedule_beacon(implant)?;
        }
        Ok(())
    }

    pub fn schedule_beacon(&mut self, implant: &str) -> Result<(), WorldError> {
        let Some(cfg) = self.beacons.get(implant) else {
            return Ok(());
        };
        let jittered = self.beacon_rng.jitter(cfg.interval_ms * 1000, 0.2);
        self.queue.schedule_in(jittered, EventKind::Beacon { implant: implant.to_owned() })?;
        Ok(())
    }

    fn on_beacon(&mut self, implant: &str) -> Result<(), WorldError> {
        let Some(cfg) = self.beacons.get(implant).cloned() else {
            return Ok(());
        };
        let Some(cause) = self.beacon_cause.clone() else {
            return Ok(());
        };
        let attacker = self.scenario.campaign.attacker_host.clone();
        let key = self.open_session(
            &cfg.host,
            &attacker,
            Transport::Tcp,
            443,
            SessionPurpose::C2 { implant: implant.to_owned() },
        );
        self.send_to_responder(
            key,
            Payload::Opaque(180),
            AppData::Beacon { implant: implant.to_owned() },
            Cause::Attack(cause),
        )?;
        self.schedule_beacon(implant)?;
        Ok(())
    }

    fn on_heartbeat(&mut self, host_id: &HostId) -> Result<(), WorldError> {
        let Some(host) = self.hosts.get(host_id) else {
            return Ok(());
        };
        let Some(domain) = host.domain.clone() else {
            return Ok(());
        };
        let dc = self
            .hosts
            .values()
            .find(|h| h.has(crate::hosts::Service::AuthDc) && h.domain.as_deref() == Some(&domain))
            .map(|h| h.id.clone());
        if let Some(dc) = dc {
            if dc != *host_id {
                let key = self.open_session(
                    host_id,
                    &dc,
                    Transport::Tcp,
                    88,
                    SessionPurpose::Heartbeat,
                );
                let cause = Cause::Benign(crate::telemetry::BenignKind::Infrastructure);
                self.send_to_responder(key, Payload::Opaque(300), AppData::None, cause)?;
            }
        }
        self.queue.schedule_in(
            300 * crate::kernel::MICROS_PER_SEC,
            EventKind::Heartbeat { host: host_id.clone() },
        )?;
        Ok(())
    }

    /// Operator command to a scene, realized as an externally-written
    /// Modbus coil write from the HMI host to its PLC.
    pub fn hmi_command(&mut self, hmi_id: &str, cmd: HmiCmd) -> Result<(), WorldError> {
        let (host, plc_addr, txn) = {
            let hmi = self.hmis.get_mut(hmi_id).expect("hmi exists");
            hmi.next_txn = hmi.next_txn.wrapping_add(1);
            (hmi.host.clone(), hmi.plc_addr, hmi.next_txn)
        };
        let plc_host = self.addr_to_host[&plc_addr].clone();
        let frame = simpleics_protocols::modbus::ModbusFrame::new(
            txn,
            1,
            simpleics_protocols::modbus::ModbusPdu::WriteSingleCoil { addr: cmd.coil(), on: true },
        );
        let bytes = simpleics_protocols::modbus::encode(&frame).expect("valid frame");
        let key = self.open_session(
            &host,
            &plc_host,
            Transport::Tcp,
            502,
            SessionPurpose::HmiCommand { hmi: hmi_id.to_owned() },
        );
        let cause = Cause::Benign(crate::telemetry::BenignKind::Infrastructure);
        self.send_to_responder(key, Payload::Bytes(bytes), AppData::ModbusRequest, cause)?;
        if cmd == HmiCmd::Reset {
            // momentary button: release after one second
            self.queue.schedule_in(
                crate::kernel::MICROS_PER_SEC,
                EventKind::HmiRelease { hmi: hmi_id.to_owned(), coil: cmd.coil() },
            )?;
        }
        Ok(())
    }

    fn on_hmi_startup(&mut self, hmi_id: &str) -> Result<(), WorldError> {
        self.hmi_command(hmi_id, HmiCmd::Start)
    }

    fn on_hmi_release(&mut self, hmi_id: &str, coil: u16) -> Result<(), WorldError> {
        let (host, plc_addr, txn) = {
            let hmi = self.hmis.get_mut(hmi_id).expect("hmi exists");
            hmi.next_txn = hmi.next_txn.wrapping_add(1);
            (hmi.host.clone(), hmi.plc_addr, hmi.next_txn)
        };
        let plc_host = self.addr_to_host[&plc_addr].clone();
        let frame = simpleics_protocols::modbus::ModbusFrame::new(
            txn,
            1,
            simpleics_protocols::modbus::ModbusPdu::WriteSingleCoil { addr: coil, on: false },
        );
        let bytes = simpleics_protocols::modbus::encode(&frame).expect("valid frame");
        let key = self.open_session(
            &host,
            &plc_host,
            Transport::Tcp,
            502,
            SessionPurpose::HmiCommand { hmi: hmi_id.to_owned() },
        );
        let cause = Cause::Benign(crate::telemetry::BenignKind::Infrastructure);
        self.send_to_responder(key, Payload::Bytes(bytes), AppData::ModbusRequest, cause)?;
        Ok(())
    }
}
