//! Dataset bundle export.
//!
//! Layout, one directory per run:
//!
//! ```text
//! manifest.json        counts, hashes, seed, analytics
//! flows.jsonl          network_flow records
//! host_events.jsonl    host_event records
//! operational.jsonl    historian / operational records
//! packets.pcap         raw Modbus + MQTT frames wrapped in Ethernet/IPv4/TCP
//! campaign_trace.json  ability-by-ability campaign outcome
//! ```
//!
//! Export is fully deterministic: identical record streams produce
//! byte-identical bundles. Virtual timestamps map directly to PCAP epoch
//! offsets (the scenario starts at epoch zero).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Body, Category, FlowBody, HostEventBody, Label, OperationalBody, PayloadProto, Pipeline,
    TelemetryError, TelemetryRecord,
};
use crate::net::SegmentId;

pub const SCHEMA_VERSION: &str = "1.0";

pub const FILE_FLOWS: &str = "flows.jsonl";
pub const FILE_HOST_EVENTS: &str = "host_events.jsonl";
pub const FILE_OPERATIONAL: &str = "operational.jsonl";
pub const FILE_PCAP: &str = "packets.pcap";
pub const FILE_CAMPAIGN: &str = "campaign_trace.json";
pub const FILE_MANIFEST: &str = "manifest.json";

/// FNV-1a 64-bit, used for file stamps and the scenario hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileStamp {
    pub records: u64,
    pub fnv1a64: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrafficAnalytics {
    pub expected_modbus_packets: u64,
    pub expected_mqtt_packets: u64,
    pub measured_modbus_packets: u64,
    pub measured_mqtt_packets: u64,
}

impl TrafficAnalytics {
    pub fn expected_ratio(&self) -> f64 {
        self.expected_modbus_packets as f64 / self.expected_mqtt_packets.max(1) as f64
    }

    pub fn measured_ratio(&self) -> f64 {
        self.measured_modbus_packets as f64 / self.measured_mqtt_packets.max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestCampaign {
    pub enabled: bool,
    pub name: String,
    pub executed_techniques: Vec<String>,
    pub phases_completed: u32,
    pub aborted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub schema_version: String,
    pub scenario_name: String,
    pub scenario_fnv1a64: String,
    pub seed: u64,
    pub profile: String,
    pub clock_span_us: (u64, u64),
    pub events_dispatched: u64,
    pub dispatch_trace_fnv1a64: String,
    pub counts: BTreeMap<Category, u64>,
    pub files: BTreeMap<String, FileStamp>,
    pub campaign: ManifestCampaign,
    pub analytics: TrafficAnalytics,
    /// Fabric-level conservation counters: delivered + dropped == sent.
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
}

/// Everything the exporter needs besides the records themselves.
#[derive(Debug, Clone)]
pub struct ExportMeta {
    pub scenario_name: String,
    pub scenario_fnv1a64: u64,
    pub seed: u64,
    pub profile: String,
    pub clock_span_us: (u64, u64),
    pub events_dispatched: u64,
    pub dispatch_trace_fnv1a64: u64,
    pub campaign: ManifestCampaign,
    pub expected_modbus_packets: u64,
    pub expected_mqtt_packets: u64,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
}

/// One record as it appears on a JSONL line.
#[derive(Serialize)]
struct RecordLine<'a> {
    t: u64,
    seq: u64,
    category: Category,
    #[serde(skip_serializing_if = "Option::is_none")]
    segment: Option<SegmentId>,
    source: &'a str,
    label: &'a Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    flow: Option<&'a FlowBody>,
    #[serde(skip_serializing_if = "Option::is_none")]
    host_event: Option<&'a HostEventBody>,
    #[serde(skip_serializing_if = "Option::is_none")]
    operational: Option<&'a OperationalBody>,
}

/// Owned mirror of [`RecordLine`] used when reading bundles back.
#[derive(Deserialize)]
pub struct OwnedRecordLine {
    pub t: u64,
    pub seq: u64,
    pub category: Category,
    #[serde(default)]
    pub segment: Option<SegmentId>,
    pub source: String,
    pub label: Label,
    #[serde(default)]
    pub flow: Option<FlowBody>,
    #[serde(default)]
    pub host_event: Option<HostEventBody>,
    #[serde(default)]
    pub operational: Option<OperationalBody>,
}

struct HashingWriter<W: Write> {
    inner: W,
    hash: u64,
    bytes: u64,
}

impl<W: Write> HashingWriter<W> {
    fn new(inner: W) -> Self {
        Self { inner, hash: 0xcbf2_9ce4_8422_2325, bytes: 0 }
    }
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        for b in &buf[..n] {
            self.hash ^= *b as u64;
            self.hash = self.hash.wrapping_mul(0x100_0000_01b3);
        }
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Writes the full bundle and returns the manifest (also written to disk).
pub fn export_bundle(
    dir: &Path,
    pipeline: &Pipeline,
    campaign_trace: &serde_json::Value,
    meta: &ExportMeta,
) -> Result<RunManifest, TelemetryError> {
    std::fs::create_dir_all(dir)?;
    let records = pipeline.records();

    let mut files = BTreeMap::new();

    files.insert(
        FILE_FLOWS.to_owned(),
        write_jsonl(&dir.join(FILE_FLOWS), records, Category::NetworkFlow)?,
    );
    files.insert(
        FILE_HOST_EVENTS.to_owned(),
        write_jsonl(&dir.join(FILE_HOST_EVENTS), records, Category::HostEvent)?,
    );
    files.insert(
        FILE_OPERATIONAL.to_owned(),
        write_jsonl(&dir.join(FILE_OPERATIONAL), records, Category::Operational)?,
    );

    let (pcap_stamp, measured_modbus, measured_mqtt) =
        write_pcap(&dir.join(FILE_PCAP), records)?;
    files.insert(FILE_PCAP.to_owned(), pcap_stamp);

    let trace_bytes = serde_json::to_vec_pretty(campaign_trace)?;
    std::fs::write(dir.join(FILE_CAMPAIGN), &trace_bytes)?;
    files.insert(
        FILE_CAMPAIGN.to_owned(),
        FileStamp { records: 1, fnv1a64: format!("{:016x}", fnv1a64(&trace_bytes)) },
    );

    let mut counts = BTreeMap::new();
    for category in [
        Category::NetworkFlow,
        Category::PacketPayload,
        Category::HostEvent,
        Category::Operational,
    ] {
        counts.insert(category, pipeline.count(category));
    }

    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION.to_owned(),
        scenario_name: meta.scenario_name.clone(),
        scenario_fnv1a64: format!("{:016x}", meta.scenario_fnv1a64),
        seed: meta.seed,
        profile: meta.profile.clone(),
        clock_span_us: meta.clock_span_us,
        events_dispatched: meta.events_dispatched,
        dispatch_trace_fnv1a64: format!("{:016x}", meta.dispatch_trace_fnv1a64),
        counts,
        files,
        campaign: meta.campaign.clone(),
        analytics: TrafficAnalytics {
            expected_modbus_packets: meta.expected_modbus_packets,
            expected_mqtt_packets: meta.expected_mqtt_packets,
            measured_modbus_packets: measured_modbus,
            measured_mqtt_packets: measured_mqtt,
        },
        packets_sent: meta.packets_sent,
        packets_delivered: meta.packets_delivered,
        packets_dropped: meta.packets_dropped,
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(dir.join(FILE_MANIFEST), manifest_bytes)?;
    Ok(manifest)
}

fn write_jsonl(
    path: &Path,
    records: &[TelemetryRecord],
    category: Category,
) -> Result<FileStamp, TelemetryError> {
    let mut w = HashingWriter::new(BufWriter::new(File::create(path)?));
    let mut count = 0u64;
    for record in records {
        if record.category() != category {
            continue;
        }
        let line = RecordLine {
            t: record.t,
            seq: record.seq,
            category,
            segment: record.segment,
            source: &record.source,
            label: &record.label,
            flow: match &record.body {
                Body::Flow(f) => Some(f),
                _ => None,
            },
            host_event: match &record.body {
                Body::Host(h) => Some(h),
                _ => None,
            },
            operational: match &record.body {
                Body::Operational(o) => Some(o),
                _ => None,
            },
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
        count += 1;
    }
    w.flush()?;
    Ok(FileStamp { records: count, fnv1a64: format!("{:016x}", w.hash) })
}

// ---------------------------------------------------------------------------
// PCAP synthesis
// ---------------------------------------------------------------------------

const PCAP_MAGIC: u32 = 0xa1b2_c3d4; // microsecond timestamps
const LINKTYPE_ETHERNET: u32 = 1;

fn mac_for(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    // locally administered unicast
    [0x02, 0x53, o[1], o[2], o[3], 0x01]
}

fn checksum16(data: &[u8]) -> u16 {
    let mut sum = 0u32;
    let mut chunks = data.chunks_exact(2);
    for c in &mut chunks {
        sum += u16::from_be_bytes([c[0], c[1]]) as u32;
    }
    if let [last] = chunks.remainder() {
        sum += (*last as u32) << 8;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

fn build_frame(record: &TelemetryRecord, seq: u64) -> Vec<u8> {
    let Body::Packet(p) = &record.body else {
        unreachable!("pcap writer only sees packet records");
    };
    let payload = &p.bytes;
    let ip_len = 20 + 20 + payload.len();
    let mut frame = Vec::with_capacity(14 + ip_len);

    frame.extend_from_slice(&mac_for(p.dst));
    frame.extend_from_slice(&mac_for(p.src));
    frame.extend_from_slice(&0x0800u16.to_be_bytes());

    let mut ip = Vec::with_capacity(20);
    ip.push(0x45);
    ip.push(0);
    ip.extend_from_slice(&(ip_len as u16).to_be_bytes());
    ip.extend_from_slice(&(seq as u16).to_be_bytes());
    ip.extend_from_slice(&0x4000u16.to_be_bytes()); // DF
    ip.push(64);
    ip.push(6); // TCP
    ip.extend_from_slice(&[0, 0]); // checksum placeholder
    ip.extend_from_slice(&p.src.octets());
    ip.extend_from_slice(&p.dst.octets());
    let ip_csum = checksum16(&ip);
    ip[10..12].copy_from_slice(&ip_csum.to_be_bytes());
    frame.extend_from_slice(&ip);

    let mut tcp = Vec::with_capacity(20 + payload.len());
    tcp.extend_from_slice(&p.src_port.to_be_bytes());
    tcp.extend_from_slice(&p.dst_port.to_be_bytes());
    tcp.extend_from_slice(&(seq as u32).to_be_bytes()); // seq
    tcp.extend_from_slice(&0u32.to_be_bytes()); // ack
    tcp.push(5 << 4);
    tcp.push(0x18); // PSH|ACK
    tcp.extend_from_slice(&0xFAF0u16.to_be_bytes());
    tcp.extend_from_slice(&[0, 0]); // checksum placeholder
    tcp.extend_from_slice(&[0, 0]); // urgent
    tcp.extend_from_slice(payload);

    // TCP checksum over the IPv4 pseudo header + segment
    let mut pseudo = Vec::with_capacity(12 + tcp.len());
    pseudo.extend_from_slice(&p.src.octets());
    pseudo.extend_from_slice(&p.dst.octets());
    pseudo.push(0);
    pseudo.push(6);
    pseudo.extend_from_slice(&(tcp.len() as u16).to_be_bytes());
    pseudo.extend_from_slice(&tcp);
    let tcp_csum = checksum16(&pseudo);
    tcp[16..18].copy_from_slice(&tcp_csum.to_be_bytes());
    frame.extend_from_slice(&tcp);

    frame
}

fn write_pcap(
    path: &Path,
    records: &[TelemetryRecord],
) -> Result<(FileStamp, u64, u64), TelemetryError> {
    let mut w = HashingWriter::new(BufWriter::new(File::create(path)?));
    w.write_all(&PCAP_MAGIC.to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&4u16.to_le_bytes())?;
    w.write_all(&0i32.to_le_bytes())?; // thiszone
    w.write_all(&0u32.to_le_bytes())?; // sigfigs
    w.write_all(&65535u32.to_le_bytes())?; // snaplen
    w.write_all(&LINKTYPE_ETHERNET.to_le_bytes())?;

    let mut frames = 0u64;
    let mut modbus = 0u64;
    let mut mqtt = 0u64;
    for record in records {
        let Body::Packet(p) = &record.body else {
            continue;
        };
        match p.proto {
            PayloadProto::Modbus => modbus += 1,
            PayloadProto::Mqtt => mqtt += 1,
        }
        let frame = build_frame(record, frames);
        w.write_all(&((record.t / 1_000_000) as u32).to_le_bytes())?;
        w.write_all(&((record.t % 1_000_000) as u32).to_le_bytes())?;
        w.write_all(&(frame.len() as u32).to_le_bytes())?;
        w.write_all(&(frame.len() as u32).to_le_bytes())?;
        w.write_all(&frame)?;
        frames += 1;
    }
    w.flush()?;
    Ok((
        FileStamp { records: frames, fnv1a64: format!("{:016x}", w.hash) },
        modbus,
        mqtt,
    ))
}

/// Counts the frames in a PCAP written by [`write_pcap`] (integrity checks).
pub fn pcap_frame_count(path: &Path) -> Result<u64, TelemetryError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 24 {
        return Ok(0);
    }
    let mut pos = 24usize;
    let mut frames = 0u64;
    while pos + 16 <= bytes.len() {
        let incl = u32::from_le_bytes([
            bytes[pos + 8],
            bytes[pos + 9],
            bytes[pos + 10],
            bytes[pos + 11],
        ]) as usize;
        pos += 16 + incl;
        if pos > bytes.len() {
            break;
        }
        frames += 1;
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::PacketBody;

    fn packet_record(t: u64, seq: u64) -> TelemetryRecord {
        TelemetryRecord {
            t,
            seq,
            segment: Some(SegmentId::Ot),
            source: "tap.OT".into(),
            body: Body::Packet(PacketBody {
                proto: PayloadProto::Modbus,
                src: "10.20.2.10".parse().unwrap(),
                src_port: 49152,
                dst: "10.20.2.20".parse().unwrap(),
                dst_port: 502,
                bytes: vec![0, 1, 0, 0, 0, 6, 1, 5, 0, 0, 0xFF, 0],
            }),
            label: Label::Benign,
        }
    }

    #[test]
    fn pcap_round_trips_frame_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pcap");
        let records: Vec<TelemetryRecord> = (0..5).map(|i| packet_record(i * 100, i)).collect();
        let (stamp, modbus, mqtt) = write_pcap(&path, &records).unwrap();
        assert_eq!(stamp.records, 5);
        assert_eq!(modbus, 5);
        assert_eq!(mqtt, 0);
        assert_eq!(pcap_frame_count(&path).unwrap(), 5);
    }

    #[test]
    fn frame_checksums_are_valid() {
        let record = packet_record(1_000_000, 0);
        let frame = build_frame(&record, 0);
        // IPv4 header checksum over itself must fold to zero
        let ip = &frame[14..34];
        assert_eq!(checksum16(ip), 0);
        assert_eq!(frame[23], 6, "protocol must be TCP");
        let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
        assert_eq!(total_len + 14, frame.len());
    }

    #[test]
    fn fnv_vector() {
        // FNV-1a 64 of "a" is a well-known constant
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
