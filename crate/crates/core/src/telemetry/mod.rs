//! Synchronized multi-source telemetry: flow records from segment taps,
//! host events, raw protocol payloads, and historian samples, unified under
//! one timestamped record schema.
//!
//! Ground-truth labels are causal, not time-window based: every action in
//! the simulation carries a [`Cause`], and a record is labelled with a
//! technique exactly when its causal chain roots in a campaign ability.
//! Benign traffic generated while an attack is underway stays benign.

pub mod export;
pub mod report;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::VirtualTime;
use crate::net::{SegmentId, Transport};

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("record at t={t} precedes the buffer tail {tail} (schema violation)")]
    TimeRegression { t: VirtualTime, tail: VirtualTime },
    #[error("flow record with zero packet count (schema violation)")]
    EmptyFlow,
    #[error("packet record with empty payload (schema violation)")]
    EmptyPayload,
    #[error("host event id {0} outside the declared catalogue")]
    UnknownEventId(u16),
    #[error("export io: {0}")]
    Io(#[from] std::io::Error),
    #[error("export encoding: {0}")]
    Json(#[from] serde_json::Error),
}

/// Who ultimately caused an action. Propagated along packets, mail, and
/// derived effects so that labelling never guesses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cause {
    Benign(BenignKind),
    Attack(AttackCause),
}

impl Cause {
    pub fn label(&self) -> Label {
        match self {
            Cause::Benign(_) => Label::Benign,
            Cause::Attack(a) => Label::Attack {
                campaign: a.campaign.clone(),
                technique: a.technique.clone(),
                ability: a.ability,
            },
        }
    }

    pub fn is_attack(&self) -> bool {
        matches!(self, Cause::Attack(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenignKind {
    /// Scripted user activity.
    Npc,
    /// Physics ticks and scene-driven effects.
    Physics,
    /// Protocol housekeeping: polls, publishes, keep-alives.
    Protocol,
    /// Platform plumbing: heartbeats, startup commands.
    Infrastructure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackCause {
    pub campaign: String,
    pub technique: String,
    /// Ability instance counter within the campaign run.
    pub ability: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    #[serde(with = "benign_label")]
    Benign,
    Attack { campaign: String, technique: String, ability: u32 },
}

mod benign_label {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("benign")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let text = String::deserialize(d)?;
        if text == "benign" {
            Ok(())
        } else {
            Err(D::Error::custom("expected \"benign\""))
        }
    }
}

impl Label {
    pub fn technique(&self) -> Option<&str> {
        match self {
            Label::Benign => None,
            Label::Attack { technique, .. } => Some(technique),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    NetworkFlow,
    PacketPayload,
    HostEvent,
    Operational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Delivered,
    Dropped { reason: String },
}

/// Per-packet observation at one segment tap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowBody {
    pub packet_serial: u64,
    pub src: Ipv4Addr,
    pub src_port: u16,
    pub dst: Ipv4Addr,
    pub dst_port: u16,
    pub transport: Transport,
    pub src_segment: SegmentId,
    pub dst_segment: SegmentId,
    pub bytes: u32,
    pub packets: u32,
    pub first_us: VirtualTime,
    pub last_us: VirtualTime,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadProto {
    Modbus,
    Mqtt,
}

/// Raw protocol bytes as seen on the wire (exported into the PCAP).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketBody {
    pub proto: PayloadProto,
    pub src: Ipv4Addr,
    pub src_port: u16,
    pub dst: Ipv4Addr,
    pub dst_port: u16,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostEventBody {
    pub host: String,
    pub event_id: u16,
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationalBody {
    pub tag: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Flow(FlowBody),
    Packet(PacketBody),
    Host(HostEventBody),
    Operational(OperationalBody),
}

impl Body {
    pub fn category(&self) -> Category {
        match self {
            Body::Flow(_) => Category::NetworkFlow,
            Body::Packet(_) => Category::PacketPayload,
            Body::Host(_) => Category::HostEvent,
            Body::Operational(_) => Category::Operational,
        }
    }
}

/// One labelled observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: VirtualTime,
    pub seq: u64,
    pub segment: Option<SegmentId>,
    pub source: String,
    pub body: Body,
    pub label: Label,
}

impl TelemetryRecord {
    pub fn category(&self) -> Category {
        self.body.category()
    }
}

/// Arrival-ordered buffer; serialization happens post-run in [`export`].
#[derive(Debug, Default)]
pub struct Pipeline {
    records: Vec<TelemetryRecord>,
    next_seq: u64,
    tail_t: VirtualTime,
    counts: BTreeMap<Category, u64>,
}

impl Pipeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Buffers one record, enforcing the schema. A violation is fatal to
    /// the run: dataset integrity is the product.
    pub fn observe(
        &mut self,
        t: VirtualTime,
        segment: Option<SegmentId>,
        source: impl Into<String>,
        body: Body,
        label: Label,
    ) -> Result<(), TelemetryError> {
        if t < self.tail_t {
            return Err(TelemetryError::TimeRegression { t, tail: self.tail_t });
        }
        match &body {
            Body::Flow(flow) => {
                if flow.packets == 0 {
                    return Err(TelemetryError::EmptyFlow);
                }
            }
            Body::Packet(p) => {
                if p.bytes.is_empty() {
                    return Err(TelemetryError::EmptyPayload);
                }
            }
            Body::Host(h) => {
                if !crate::hosts::EVENT_CATALOGUE.contains(&h.event_id) {
                    return Err(TelemetryError::UnknownEventId(h.event_id));
                }
            }
            Body::Operational(_) => {}
        }
        self.tail_t = t;
        *self.counts.entry(body.category()).or_insert(0) += 1;
        let record = TelemetryRecord {
            t,
            seq: self.next_seq,
            segment,
            source: source.into(),
            body,
            label,
        };
        self.next_seq += 1;
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn count(&self, category: Category) -> u64 {
        self.counts.get(&category).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Technique ids that appear in at least one label.
    pub fn labelled_techniques(&self) -> std::collections::BTreeSet<String> {
        self.records
            .iter()
            .filter_map(|r| r.label.technique().map(str::to_owned))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op_body(tag: &str) -> Body {
        Body::Operational(OperationalBody { tag: tag.into(), value: 1.0 })
    }

    #[test]
    fn records_keep_arrival_order_and_sequence() {
        let mut p = Pipeline::new();
        p.observe(5, None, "a", op_body("x"), Label::Benign).unwrap();
        p.observe(5, None, "b", op_body("y"), Label::Benign).unwrap();
        p.observe(9, None, "c", op_body("z"), Label::Benign).unwrap();
        let seqs: Vec<u64> = p.records().iter().map(|r| r.seq).collect();
        assert_eq!(seqs, [0, 1, 2]);
    }

    #[test]
    fn time_regression_is_fatal() {
        let mut p = Pipeline::new();
        p.observe(10, None, "a", op_body("x"), Label::Benign).unwrap();
        assert!(matches!(
            p.observe(9, None, "b", op_body("y"), Label::Benign),
            Err(TelemetryError::TimeRegression { .. })
        ));
    }

    #[test]
    fn unknown_event_ids_rejected() {
        let mut p = Pipeline::new();
        let body = Body::Host(HostEventBody {
            host: "ws".into(),
            event_id: 1234,
            fields: BTreeMap::new(),
        });
        assert!(matches!(
            p.observe(0, None, "ws", body, Label::Benign),
            Err(TelemetryError::UnknownEventId(1234))
        ));
    }

    #[test]
    fn label_json_forms() {
        assert_eq!(serde_json::to_string(&Label::Benign).unwrap(), "\"benign\"");
        let attack = Label::Attack {
            campaign: "c1".into(),
            technique: "T0836".into(),
            ability: 17,
        };
        let json = serde_json::to_string(&attack).unwrap();
        assert!(json.contains("\"T0836\""));
        assert_eq!(serde_json::from_str::<Label>(&json).unwrap(), attack);
        assert_eq!(serde_json::from_str::<Label>("\"benign\"").unwrap(), Label::Benign);
    }
}
