//! Post-run evaluation report over an exported bundle: per-class latency
//! statistics, packet-loss summary, protocol traffic mix against the
//! analytic prediction, and technique label coverage.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::Serialize;

use super::export::{
    pcap_frame_count, OwnedRecordLine, RunManifest, FILE_FLOWS, FILE_HOST_EVENTS, FILE_MANIFEST,
    FILE_OPERATIONAL, FILE_PCAP,
};
use super::{Label, TelemetryError, Verdict};
use crate::net::SegmentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyClass {
    IntraIt,
    IntraOt,
    CrossSegment,
}

impl LatencyClass {
    pub fn display(&self) -> &'static str {
        match self {
            LatencyClass::IntraIt => "intra-IT",
            LatencyClass::IntraOt => "intra-OT",
            LatencyClass::CrossSegment => "cross-segment",
        }
    }
}

fn it_side(seg: SegmentId) -> bool {
    matches!(seg, SegmentId::ItDmz | SegmentId::ItLan)
}

fn ot_side(seg: SegmentId) -> bool {
    matches!(seg, SegmentId::OtDmz | SegmentId::Ot | SegmentId::Iiot)
}

/// Classifies one delivered flow by its endpoints' segments. External and
/// monitoring traffic stays out of the three calibration classes.
pub fn latency_class(src: SegmentId, dst: SegmentId) -> Option<LatencyClass> {
    if it_side(src) && it_side(dst) {
        Some(LatencyClass::IntraIt)
    } else if ot_side(src) && ot_side(dst) {
        Some(LatencyClass::IntraOt)
    } else if (it_side(src) && ot_side(dst)) || (ot_side(src) && it_side(dst)) {
        Some(LatencyClass::CrossSegment)
    } else {
        None
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyRow {
    pub class: LatencyClass,
    pub samples: u64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossSummary {
    pub profile: String,
    pub packets_seen: u64,
    pub policy_drops: u64,
    /// Drops not explained by firewall policy, closed ports, or routing —
    /// genuine network loss. The lossless fabric keeps this at zero.
    pub loss_drops: u64,
    pub loss_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolMix {
    pub modbus_packets: u64,
    pub mqtt_packets: u64,
    pub measured_ratio: f64,
    pub expected_ratio: f64,
    pub ratio_error_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Coverage {
    pub executed_techniques: Vec<String>,
    pub labelled_techniques: Vec<String>,
    pub covered: usize,
    pub executed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BundleReport {
    pub scenario_name: String,
    pub seed: u64,
    pub profile: String,
    pub virtual_span_s: f64,
    pub latency: Vec<LatencyRow>,
    pub loss: LossSummary,
    pub protocol_mix: ProtocolMix,
    pub coverage: Coverage,
    pub integrity_issues: Vec<String>,
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest, TelemetryError> {
    let bytes = std::fs::read(dir.join(FILE_MANIFEST))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Streams one JSONL file, applying `f` to every line.
pub fn scan_jsonl<F: FnMut(OwnedRecordLine)>(
    path: &Path,
    mut f: F,
) -> Result<(u64, u64), TelemetryError> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    let mut line = String::new();
    let mut records = 0u64;
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        for b in line.as_bytes() {
            hash ^= *b as u64;
            hash = hash.wrapping_mul(0x100_0000_01b3);
        }
        let parsed: OwnedRecordLine = serde_json::from_str(line.trim_end())?;
        f(parsed);
        records += 1;
    }
    Ok((records, hash))
}

/// Builds the evaluation report from an exported bundle directory.
pub fn report_bundle(dir: &Path) -> Result<BundleReport, TelemetryError> {
    let manifest = load_manifest(dir)?;
    let mut issues = Vec::new();

    struct Acc {
        sum_us: f64,
        min_us: u64,
        max_us: u64,
        n: u64,
    }
    let mut classes: BTreeMap<LatencyClass, Acc> = BTreeMap::new();
    let mut seen_serials: HashSet<u64> = HashSet::new();
    let mut policy_drops = 0u64;
    let mut loss_drops = 0u64;
    let mut packets_seen = 0u64;
    let mut labelled: BTreeSet<String> = BTreeSet::new();

    let (flow_records, flow_hash) = scan_jsonl(&dir.join(FILE_FLOWS), |line| {
        if let Label::Attack { technique, .. } = &line.label {
            labelled.insert(technique.clone());
        }
        let Some(flow) = line.flow else { return };
        if !seen_serials.insert(flow.packet_serial) {
            return; // same packet observed at another tap
        }
        packets_seen += 1;
        match &flow.verdict {
            Verdict::Delivered => {
                if let Some(class) = latency_class(flow.src_segment, flow.dst_segment) {
                    let one_way = flow.last_us.saturating_sub(flow.first_us);
                    let acc = classes.entry(class).or_insert(Acc {
                        sum_us: 0.0,
                        min_us: u64::MAX,
                        max_us: 0,
                        n: 0,
                    });
                    acc.sum_us += one_way as f64;
                    acc.min_us = acc.min_us.min(one_way);
                    acc.max_us = acc.max_us.max(one_way);
                    acc.n += 1;
                }
            }
            Verdict::Dropped { reason } => {
                let policy = reason.starts_with("firewall")
                    || reason == "closed_port"
                    || reason == "no_route"
                    || reason == "host_down";
                if policy {
                    policy_drops += 1;
                } else {
                    loss_drops += 1;
                }
            }
        }
    })?;
    check_stamp(&manifest, FILE_FLOWS, flow_records, flow_hash, &mut issues);

    let (host_records, host_hash) = scan_jsonl(&dir.join(FILE_HOST_EVENTS), |line| {
        if let Label::Attack { technique, .. } = &line.label {
            labelled.insert(technique.clone());
        }
    })?;
    check_stamp(&manifest, FILE_HOST_EVENTS, host_records, host_hash, &mut issues);

    let (op_records, op_hash) = scan_jsonl(&dir.join(FILE_OPERATIONAL), |line| {
        if let Label::Attack { technique, .. } = &line.label {
            labelled.insert(technique.clone());
        }
    })?;
    check_stamp(&manifest, FILE_OPERATIONAL, op_records, op_hash, &mut issues);

    let pcap_frames = pcap_frame_count(&dir.join(FILE_PCAP))?;
    if let Some(stamp) = manifest.files.get(FILE_PCAP) {
        if stamp.records != pcap_frames {
            issues.push(format!(
                "{FILE_PCAP}: manifest says {} frames, file holds {pcap_frames}",
                stamp.records
            ));
        }
    }
    let payload_count = manifest.counts.get(&super::Category::PacketPayload).copied().unwrap_or(0);
    if payload_count != pcap_frames {
        issues.push(format!(
            "packet_payload count {payload_count} does not match pcap frames {pcap_frames}"
        ));
    }

    let latency = classes
        .into_iter()
        .map(|(class, acc)| LatencyRow {
            class,
            samples: acc.n,
            mean_ms: acc.sum_us / acc.n.max(1) as f64 / 1000.0,
            min_ms: acc.min_us as f64 / 1000.0,
            max_ms: acc.max_us as f64 / 1000.0,
        })
        .collect();

    let analytics = &manifest.analytics;
    let expected_ratio = analytics.expected_ratio();
    let measured_ratio = analytics.measured_ratio();
    let ratio_error = if expected_ratio > 0.0 {
        (measured_ratio - expected_ratio).abs() / expected_ratio
    } else {
        0.0
    };

    let executed = manifest.campaign.executed_techniques.clone();
    let covered = executed.iter().filter(|t| labelled.contains(*t)).count();

    Ok(BundleReport {
        scenario_name: manifest.scenario_name.clone(),
        seed: manifest.seed,
        profile: manifest.profile.clone(),
        virtual_span_s: (manifest.clock_span_us.1 - manifest.clock_span_us.0) as f64 / 1e6,
        latency,
        loss: LossSummary {
            profile: manifest.profile.clone(),
            packets_seen,
            policy_drops,
            loss_drops,
            loss_fraction: if packets_seen > 0 {
                loss_drops as f64 / packets_seen as f64
            } else {
                0.0
            },
        },
        protocol_mix: ProtocolMix {
            modbus_packets: analytics.measured_modbus_packets,
            mqtt_packets: analytics.measured_mqtt_packets,
            measured_ratio,
            expected_ratio,
            ratio_error_fraction: ratio_error,
        },
        coverage: Coverage {
            executed: executed.len(),
            covered,
            executed_techniques: executed,
            labelled_techniques: labelled.into_iter().collect(),
        },
        integrity_issues: issues,
    })
}

fn check_stamp(
    manifest: &RunManifest,
    file: &str,
    records: u64,
    hash: u64,
    issues: &mut Vec<String>,
) {
    match manifest.files.get(file) {
        Some(stamp) => {
            if stamp.records != records {
                issues.push(format!(
                    "{file}: manifest says {} records, file holds {records}",
                    stamp.records
                ));
            }
            let hex = format!("{hash:016x}");
            if stamp.fnv1a64 != hex {
                issues.push(format!("{file}: content hash mismatch"));
            }
        }
        None => issues.push(format!("{file}: missing from manifest")),
    }
}

/// Renders the report as aligned text tables.
pub fn render_text(report: &BundleReport) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "run: {} (seed {}, profile {}, {:.0}s virtual)",
        report.scenario_name, report.seed, report.profile, report.virtual_span_s
    );
    let _ = writeln!(out, "\nnetwork latency (one-way)");
    let _ = writeln!(out, "  {:<14} {:>9} {:>10} {:>10} {:>10}", "path", "samples", "mean ms", "min ms", "max ms");
    for row in &report.latency {
        let _ = writeln!(
            out,
            "  {:<14} {:>9} {:>10.3} {:>10.3} {:>10.3}",
            row.class.display(),
            row.samples,
            row.mean_ms,
            row.min_ms,
            row.max_ms
        );
    }
    let _ = writeln!(out, "\npacket loss ({} profile)", report.loss.profile);
    let _ = writeln!(
        out,
        "  packets {}  policy drops {}  network loss {} ({:.4}%)",
        report.loss.packets_seen,
        report.loss.policy_drops,
        report.loss.loss_drops,
        report.loss.loss_fraction * 100.0
    );
    let _ = writeln!(out, "\nprotocol traffic");
    let _ = writeln!(
        out,
        "  modbus {}  mqtt {}  ratio {:.2} (predicted {:.2}, error {:.2}%)",
        report.protocol_mix.modbus_packets,
        report.protocol_mix.mqtt_packets,
        report.protocol_mix.measured_ratio,
        report.protocol_mix.expected_ratio,
        report.protocol_mix.ratio_error_fraction * 100.0
    );
    let _ = writeln!(out, "\ntechnique coverage");
    let _ = writeln!(out, "  {}/{} executed techniques labelled", report.coverage.covered, report.coverage.executed);
    for technique in &report.coverage.executed_techniques {
        let hit = report.coverage.labelled_techniques.iter().any(|t| t == technique);
        let _ = writeln!(out, "  {} {}", if hit { "✔" } else { "✘" }, technique);
    }
    if !report.integrity_issues.is_empty() {
        let _ = writeln!(out, "\nintegrity issues");
        for issue in &report.integrity_issues {
            let _ = writeln!(out, "  ! {issue}");
        }
    }
    out
}
