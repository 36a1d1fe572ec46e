//! Simulated L3/L4 fabric: six network segments, latency/jitter links,
//! two packet-filtering firewalls, and per-segment taps.
//!
//! The fabric itself is passive: it classifies a packet (route, firewall
//! verdict, latency draw, taps crossed) and the world loop schedules the
//! arrival and emits telemetry. Firewalls are stateful in the pfSense sense:
//! rules are evaluated against the connection-opening packet only, and the
//! packets of an established session pass unexamined.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::SimRng;

pub const MTU_BYTES: u32 = 1500;
/// Payload bytes carried per fragment once transport overhead is taken out.
pub const FRAGMENT_PAYLOAD: u32 = 1460;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("segment {0} already defined")]
    DuplicateSegment(SegmentId),
    #[error("segment prefixes {0} and {1} overlap")]
    OverlappingPrefixes(SegmentId, SegmentId),
    #[error("endpoint {0} duplicated")]
    DuplicateEndpoint(Ipv4Addr),
    #[error("address {addr} is outside segment {segment}")]
    AddressOutsideSegment { addr: Ipv4Addr, segment: SegmentId },
    #[error("unknown segment {0}")]
    UnknownSegment(SegmentId),
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(Ipv4Addr),
    #[error("link {0}-{1} already defined")]
    DuplicateLink(SegmentId, SegmentId),
    #[error("link {a}-{b}: {problem}")]
    BadLink { a: SegmentId, b: SegmentId, problem: String },
    #[error("tap on {0} already registered")]
    DuplicateTap(SegmentId),
    #[error("invalid CIDR prefix '{0}'")]
    BadCidr(String),
}

/// The six scenario segments plus the monitoring enclave.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum SegmentId {
    #[serde(rename = "EXTERNAL")]
    External,
    #[serde(rename = "IT_DMZ")]
    ItDmz,
    #[serde(rename = "IT_LAN")]
    ItLan,
    #[serde(rename = "OT_DMZ")]
    OtDmz,
    #[serde(rename = "OT")]
    Ot,
    #[serde(rename = "IIOT")]
    Iiot,
    #[serde(rename = "SOC_TAP")]
    SocTap,
}

impl SegmentId {
    pub const ALL: [SegmentId; 7] = [
        SegmentId::External,
        SegmentId::ItDmz,
        SegmentId::ItLan,
        SegmentId::OtDmz,
        SegmentId::Ot,
        SegmentId::Iiot,
        SegmentId::SocTap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SegmentId::External => "EXTERNAL",
            SegmentId::ItDmz => "IT_DMZ",
            SegmentId::ItLan => "IT_LAN",
            SegmentId::OtDmz => "OT_DMZ",
            SegmentId::Ot => "OT",
            SegmentId::Iiot => "IIOT",
            SegmentId::SocTap => "SOC_TAP",
        }
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SegmentId {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SegmentId::ALL
            .iter()
            .find(|seg| seg.name() == s)
            .copied()
            .ok_or_else(|| NetError::BadCidr(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transport::Tcp => "tcp",
            Transport::Udp => "udp",
        })
    }
}

/// IPv4 prefix, e.g. `10.20.2.0/24`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cidr {
    pub network: u32,
    pub prefix_len: u8,
}

impl Cidr {
    pub fn parse(text: &str) -> Result<Self, NetError> {
        let bad = || NetError::BadCidr(text.to_owned());
        let (addr, len) = text.split_once('/').ok_or_else(bad)?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| bad())?;
        let prefix_len: u8 = len.parse().map_err(|_| bad())?;
        if prefix_len > 32 {
            return Err(bad());
        }
        let mask = Self::mask(prefix_len);
        Ok(Self { network: u32::from(addr) & mask, prefix_len })
    }

    fn mask(prefix_len: u8) -> u32 {
        if prefix_len == 0 {
            0
        } else {
            u32::MAX << (32 - prefix_len)
        }
    }

    pub fn contains(&self, addr: Ipv4Addr) -> bool {
        u32::from(addr) & Self::mask(self.prefix_len) == self.network
    }

    pub fn overlaps(&self, other: &Cidr) -> bool {
        let len = self.prefix_len.min(other.prefix_len);
        let mask = Self::mask(len);
        self.network & mask == other.network & mask
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", Ipv4Addr::from(self.network), self.prefix_len)
    }
}

#[derive(Debug, Clone)]
pub struct SegmentCfg {
    pub cidr: Cidr,
    pub vlans: Vec<Cidr>,
}

#[derive(Debug, Clone)]
pub struct EndpointState {
    pub segment: SegmentId,
    pub open_ports: BTreeSet<(Transport, u16)>,
    pub up: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LinkCfg {
    pub latency_us: u64,
    /// Uniform jitter as a fraction of the mean, e.g. 0.10 for ±10%.
    pub jitter_frac: f64,
    pub bandwidth_kbps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleAction {
    Allow,
    Deny,
}

/// One ordered packet-filter rule; `dst_port: None` means any port.
#[derive(Debug, Clone)]
pub struct FirewallRule {
    pub rule_id: String,
    pub src: Cidr,
    pub dst: Cidr,
    pub transport: Transport,
    pub dst_port: Option<u16>,
    pub action: RuleAction,
}

/// A firewall with its interface groups. A packet consults the firewall
/// exactly when its source and destination segments sit behind different
/// interfaces; rules are first-match-wins with an implicit trailing deny.
#[derive(Debug, Clone)]
pub struct Firewall {
    pub id: String,
    pub interfaces: Vec<BTreeSet<SegmentId>>,
    pub rules: Vec<FirewallRule>,
}

impl Firewall {
    fn interface_of(&self, segment: SegmentId) -> Option<usize> {
        self.interfaces.iter().position(|group| group.contains(&segment))
    }

    fn mediates(&self, from: SegmentId, to: SegmentId) -> bool {
        match (self.interface_of(from), self.interface_of(to)) {
            (Some(a), Some(b)) => a != b,
            _ => false,
        }
    }

    /// First matching rule id, or `None` for the implicit default deny.
    pub fn evaluate(
        &self,
        src: Ipv4Addr,
        dst: Ipv4Addr,
        transport: Transport,
        dst_port: u16,
    ) -> (RuleAction, Option<&str>) {
        for rule in &self.rules {
            if rule.src.contains(src)
                && rule.dst.contains(dst)
                && rule.transport == transport
                && rule.dst_port.map(|p| p == dst_port).unwrap_or(true)
            {
                return (rule.action, Some(rule.rule_id.as_str()));
            }
        }
        (RuleAction::Deny, None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DropReason {
    NoRoute,
    Firewall { rule_id: String },
    ClosedPort,
    HostDown,
}

impl DropReason {
    pub fn summary(&self) -> String {
        match self {
            DropReason::NoRoute => "no_route".into(),
            DropReason::Firewall { rule_id } => format!("firewall:{rule_id}"),
            DropReason::ClosedPort => "closed_port".into(),
            DropReason::HostDown => "host_down".into(),
        }
    }
}

/// How the fabric disposed of one packet.
#[derive(Debug, Clone, PartialEq)]
pub enum Disposition {
    Deliver {
        /// One-way latency including jitter and serialization.
        latency_us: u64,
        /// Tapped segments the packet crossed, in path order.
        taps_crossed: Vec<SegmentId>,
        fragments: u32,
    },
    Drop {
        reason: DropReason,
        /// Taps that still observed the packet before it died.
        taps_crossed: Vec<SegmentId>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrafficCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub sent: u32,
    pub mean_rtt_us: f64,
    pub min_rtt_us: u64,
    pub max_rtt_us: u64,
    pub loss_fraction: f64,
}

/// Session key: who opened a conversation to whom, on which service port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SessionKey {
    pub initiator: Ipv4Addr,
    pub responder: Ipv4Addr,
    pub transport: Transport,
    pub service_port: u16,
    pub serial: u64,
}

pub struct Fabric {
    segments: BTreeMap<SegmentId, SegmentCfg>,
    endpoints: BTreeMap<Ipv4Addr, EndpointState>,
    links: BTreeMap<(SegmentId, SegmentId), LinkCfg>,
    firewalls: Vec<Firewall>,
    taps: BTreeSet<SegmentId>,
    established: BTreeSet<SessionKey>,
    link_rng: SimRng,
    pub counters: TrafficCounters,
}

impl Fabric {
    pub fn new(link_rng: SimRng) -> Self {
        Self {
            segments: BTreeMap::new(),
            endpoints: BTreeMap::new(),
            links: BTreeMap::new(),
            firewalls: Vec::new(),
            taps: BTreeSet::new(),
            established: BTreeSet::new(),
            link_rng,
            counters: TrafficCounters::default(),
        }
    }

    pub fn add_segment(
        &mut self,
        id: SegmentId,
        cidr: Cidr,
        vlans: Vec<Cidr>,
    ) -> Result<(), NetError> {
        if self.segments.contains_key(&id) {
            return Err(NetError::DuplicateSegment(id));
        }
        for (other, cfg) in &self.segments {
            if cfg.cidr.overlaps(&cidr) {
                return Err(NetError::OverlappingPrefixes(*other, id));
            }
        }
        self.segments.insert(id, SegmentCfg { cidr, vlans });
        Ok(())
    }

    pub fn add_endpoint(
        &mut self,
        addr: Ipv4Addr,
        segment: SegmentId,
        open_ports: BTreeSet<(Transport, u16)>,
    ) -> Result<(), NetError> {
        let cfg = self.segments.get(&segment).ok_or(NetError::UnknownSegment(segment))?;
        if !cfg.cidr.contains(addr) {
            return Err(NetError::AddressOutsideSegment { addr, segment });
        }
        if self.endpoints.contains_key(&addr) {
            return Err(NetError::DuplicateEndpoint(addr));
        }
        self.endpoints.insert(addr, EndpointState { segment, open_ports, up: true });
        Ok(())
    }

    pub fn open_port(&mut self, addr: Ipv4Addr, transport: Transport, port: u16) {
        if let Some(ep) = self.endpoints.get_mut(&addr) {
            ep.open_ports.insert((transport, port));
        }
    }

    pub fn set_up(&mut self, addr: Ipv4Addr, up: bool) {
        if let Some(ep) = self.endpoints.get_mut(&addr) {
            ep.up = up;
        }
    }

    fn link_key(a: SegmentId, b: SegmentId) -> (SegmentId, SegmentId) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn add_link(&mut self, a: SegmentId, b: SegmentId, cfg: LinkCfg) -> Result<(), NetError> {
        for seg in [a, b] {
            if !self.segments.contains_key(&seg) {
                return Err(NetError::UnknownSegment(seg));
            }
        }
        if cfg.latency_us == 0 {
            return Err(NetError::BadLink { a, b, problem: "latency must be > 0".into() });
        }
        if !(0.0..1.0).contains(&cfg.jitter_frac) {
            return Err(NetError::BadLink { a, b, problem: "jitter must be in [0, 1)".into() });
        }
        if cfg.bandwidth_kbps == 0 {
            return Err(NetError::BadLink { a, b, problem: "bandwidth must be > 0".into() });
        }
        let key = Self::link_key(a, b);
        if self.links.contains_key(&key) {
            return Err(NetError::DuplicateLink(a, b));
        }
        self.links.insert(key, cfg);
        Ok(())
    }

    pub fn add_firewall(&mut self, firewall: Firewall) {
        self.firewalls.push(firewall);
    }

    pub fn register_tap(&mut self, segment: SegmentId) -> Result<(), NetError> {
        if !self.segments.contains_key(&segment) {
            return Err(NetError::UnknownSegment(segment));
        }
        if !self.taps.insert(segment) {
            return Err(NetError::DuplicateTap(segment));
        }
        Ok(())
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    pub fn endpoint(&self, addr: Ipv4Addr) -> Option<&EndpointState> {
        self.endpoints.get(&addr)
    }

    pub fn segment_of(&self, addr: Ipv4Addr) -> Option<SegmentId> {
        self.endpoints
            .get(&addr)
            .map(|e| e.segment)
            .or_else(|| self.segments.iter().find(|(_, c)| c.cidr.contains(addr)).map(|(s, _)| *s))
    }

    pub fn endpoints_in(&self, segment: SegmentId) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.endpoints
            .iter()
            .filter(move |(_, e)| e.segment == segment)
            .map(|(addr, _)| *addr)
    }

    pub fn register_session(&mut self, key: SessionKey) {
        self.established.insert(key);
    }

    pub fn session_established(&self, key: &SessionKey) -> bool {
        self.established.contains(key)
    }

    /// Shortest segment path (in hops) between two segments, inclusive.
    fn route(&self, from: SegmentId, to: SegmentId) -> Option<Vec<SegmentId>> {
        if from == to {
            return Some(vec![from]);
        }
        let mut prev: BTreeMap<SegmentId, SegmentId> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        while let Some(seg) = queue.pop_front() {
            for (&(a, b), _) in &self.links {
                let next = if a == seg {
                    b
                } else if b == seg {
                    a
                } else {
                    continue;
                };
                if next == seg || next == from || prev.contains_key(&next) {
                    continue;
                }
                prev.insert(next, seg);
                if next == to {
                    let mut path = vec![to];
                    let mut cur = to;
                    while cur != from {
                        cur = prev[&cur];
                        path.push(cur);
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(next);
            }
        }
        None
    }

    fn hop_latency(&mut self, a: SegmentId, b: SegmentId, payload_bytes: u32) -> Option<u64> {
        let cfg = *self.links.get(&Self::link_key(a, b))?;
        let jittered = self.link_rng.jitter(cfg.latency_us, cfg.jitter_frac).max(1);
        // bits / kbps = ms; multiply bits by 1000 first to keep µs precision
        let serialization_us = (payload_bytes as u64 * 8 * 1000).div_ceil(cfg.bandwidth_kbps);
        Some(jittered + serialization_us)
    }

    /// Classifies one packet: route it, run the firewalls it crosses, and
    /// draw its latency. `opens_session` marks connection-initiating packets;
    /// later packets of an established session skip rule evaluation.
    pub fn dispose(
        &mut self,
        src: Ipv4Addr,
        dst: Ipv4Addr,
        transport: Transport,
        dst_port: u16,
        payload_bytes: u32,
        session: SessionKey,
        opens_session: bool,
    ) -> Disposition {
        self.counters.sent += 1;

        let src_ep = match self.endpoints.get(&src) {
            Some(ep) if ep.up => ep.clone(),
            Some(_) => return self.drop(DropReason::HostDown, vec![]),
            None => return self.drop(DropReason::NoRoute, vec![]),
        };
        let src_tap: Vec<SegmentId> =
            self.taps.contains(&src_ep.segment).then_some(src_ep.segment).into_iter().collect();

        let dst_ep = match self.endpoints.get(&dst) {
            Some(ep) => ep.clone(),
            None => return self.drop(DropReason::NoRoute, src_tap),
        };
        let path = match self.route(src_ep.segment, dst_ep.segment) {
            Some(p) => p,
            None => return self.drop(DropReason::NoRoute, src_tap),
        };

        if opens_session {
            for hop in path.windows(2) {
                for fw_idx in 0..self.firewalls.len() {
                    if self.firewalls[fw_idx].mediates(hop[0], hop[1]) {
                        let (action, rule_id) =
                            self.firewalls[fw_idx].evaluate(src, dst, transport, dst_port);
                        if action == RuleAction::Deny {
                            let rule_id = format!(
                                "{}:{}",
                                self.firewalls[fw_idx].id,
                                rule_id.unwrap_or("default-deny")
                            );
                            // the packet died at this firewall: taps up to and
                            // including the blocking hop's near side saw it
                            let seen: Vec<SegmentId> = path
                                .iter()
                                .take_while(|s| **s != hop[1])
                                .filter(|s| self.taps.contains(s))
                                .copied()
                                .collect();
                            return self.drop(DropReason::Firewall { rule_id }, seen);
                        }
                    }
                }
            }
        } else if !self.session_established(&session) {
            // a continuation packet for a session that never opened is a
            // module logic bug; treat as default deny for safety
            return self.drop(
                DropReason::Firewall { rule_id: "conntrack:unknown-session".into() },
                src_tap,
            );
        }

        if !dst_ep.up {
            let seen = path.iter().filter(|s| self.taps.contains(s)).copied().collect();
            return self.drop(DropReason::HostDown, seen);
        }
        if opens_session && !dst_ep.open_ports.contains(&(transport, dst_port)) {
            let seen = path.iter().filter(|s| self.taps.contains(s)).copied().collect();
            return self.drop(DropReason::ClosedPort, seen);
        }

        let fragments = payload_bytes.div_ceil(FRAGMENT_PAYLOAD).max(1);
        let mut latency_us = 0u64;
        if path.len() == 1 {
            // intra-segment traffic rides the segment's self-link
            latency_us += self
                .hop_latency(path[0], path[0], payload_bytes)
                .unwrap_or(50); // default switch-local latency when no self-link declared
        } else {
            for hop in path.windows(2) {
                match self.hop_latency(hop[0], hop[1], payload_bytes) {
                    Some(l) => latency_us += l,
                    None => return self.drop(DropReason::NoRoute, vec![]),
                }
            }
        }

        if opens_session {
            self.established.insert(session);
        }
        self.counters.delivered += 1;
        let taps_crossed = path.iter().filter(|s| self.taps.contains(s)).copied().collect();
        Disposition::Deliver { latency_us, taps_crossed, fragments }
    }

    fn drop(&mut self, reason: DropReason, taps_crossed: Vec<SegmentId>) -> Disposition {
        self.counters.dropped += 1;
        Disposition::Drop { reason, taps_crossed }
    }

    /// Synthetic RTT probe: samples `count` request/response pairs over the
    /// current topology without scheduling events or emitting telemetry.
    /// Losses count firewall and policy drops.
    pub fn ping(
        &mut self,
        a: Ipv4Addr,
        b: Ipv4Addr,
        transport: Transport,
        dst_port: u16,
        count: u32,
        rng: &mut SimRng,
    ) -> Result<LatencyStats, NetError> {
        let src_ep = self.endpoints.get(&a).ok_or(NetError::UnknownEndpoint(a))?.clone();
        let dst_ep = self.endpoints.get(&b).ok_or(NetError::UnknownEndpoint(b))?.clone();

        let mut permitted = src_ep.up && dst_ep.up;
        let path = self.route(src_ep.segment, dst_ep.segment);
        permitted &= path.is_some();
        if let Some(path) = &path {
            if permitted {
                'fw: for hop in path.windows(2) {
                    for fw in &self.firewalls {
                        if fw.mediates(hop[0], hop[1]) {
                            let (action, _) = fw.evaluate(a, b, transport, dst_port);
                            if action == RuleAction::Deny {
                                permitted = false;
                                break 'fw;
                            }
                        }
                    }
                }
            }
        }
        permitted &= dst_ep.open_ports.contains(&(transport, dst_port));

        if !permitted {
            return Ok(LatencyStats {
                sent: count,
                mean_rtt_us: 0.0,
                min_rtt_us: 0,
                max_rtt_us: 0,
                loss_fraction: 1.0,
            });
        }

        let path = path.expect("permitted implies route");
        const PROBE_BYTES: u32 = 64;
        let mut total = 0u64;
        let mut min = u64::MAX;
        let mut max = 0u64;
        for _ in 0..count {
            let mut rtt = 0u64;
            for _ in 0..2 {
                if path.len() == 1 {
                    let cfg = self.links.get(&Self::link_key(path[0], path[0])).copied();
                    rtt += match cfg {
                        Some(cfg) => {
                            rng.jitter(cfg.latency_us, cfg.jitter_frac).max(1)
                                + (PROBE_BYTES as u64 * 8 * 1000).div_ceil(cfg.bandwidth_kbps)
                        }
                        None => 50,
                    };
                } else {
                    for hop in path.windows(2) {
                        let cfg = self.links[&Self::link_key(hop[0], hop[1])];
                        rtt += rng.jitter(cfg.latency_us, cfg.jitter_frac).max(1)
                            + (PROBE_BYTES as u64 * 8 * 1000).div_ceil(cfg.bandwidth_kbps);
                    }
                }
            }
            total += rtt;
            min = min.min(rtt);
            max = max.max(rtt);
        }
        Ok(LatencyStats {
            sent: count,
            mean_rtt_us: total as f64 / count as f64,
            min_rtt_us: min,
            max_rtt_us: max,
            loss_fraction: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngForge;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn ports(list: &[(Transport, u16)]) -> BTreeSet<(Transport, u16)> {
        list.iter().copied().collect()
    }

    /// Miniature three-segment fabric guarded by one firewall.
    fn mini_fabric() -> Fabric {
        let forge = RngForge::new(11);
        let mut fab = Fabric::new(forge.replay("link"));
        fab.add_segment(SegmentId::ItLan, Cidr::parse("10.10.2.0/24").unwrap(), vec![]).unwrap();
        fab.add_segment(SegmentId::OtDmz, Cidr::parse("10.20.1.0/24").unwrap(), vec![]).unwrap();
        fab.add_segment(SegmentId::Ot, Cidr::parse("10.20.2.0/24").unwrap(), vec![]).unwrap();
        fab.add_link(
            SegmentId::ItLan,
            SegmentId::OtDmz,
            LinkCfg { latency_us: 3605, jitter_frac: 0.1, bandwidth_kbps: 1_000_000 },
        )
        .unwrap();
        fab.add_link(
            SegmentId::OtDmz,
            SegmentId::Ot,
            LinkCfg { latency_us: 1290, jitter_frac: 0.1, bandwidth_kbps: 1_000_000 },
        )
        .unwrap();
        fab.add_endpoint(ip("10.10.2.5"), SegmentId::ItLan, ports(&[])).unwrap();
        fab.add_endpoint(
            ip("10.20.1.10"),
            SegmentId::OtDmz,
            ports(&[(Transport::Tcp, 3389)]),
        )
        .unwrap();
        fab.add_endpoint(ip("10.20.2.20"), SegmentId::Ot, ports(&[(Transport::Tcp, 502)]))
            .unwrap();
        fab.add_firewall(Firewall {
            id: "fw-ot".into(),
            interfaces: vec![
                [SegmentId::ItLan].into(),
                [SegmentId::OtDmz].into(),
                [SegmentId::Ot].into(),
            ],
            rules: vec![
                FirewallRule {
                    rule_id: "it-to-jump".into(),
                    src: Cidr::parse("10.10.2.0/24").unwrap(),
                    dst: Cidr::parse("10.20.1.10/32").unwrap(),
                    transport: Transport::Tcp,
                    dst_port: Some(3389),
                    action: RuleAction::Allow,
                },
                FirewallRule {
                    rule_id: "dmz-to-ot-modbus".into(),
                    src: Cidr::parse("10.20.1.0/24").unwrap(),
                    dst: Cidr::parse("10.20.2.0/24").unwrap(),
                    transport: Transport::Tcp,
                    dst_port: Some(502),
                    action: RuleAction::Allow,
                },
            ],
        });
        fab
    }

    fn session(init: &str, resp: &str, port: u16, serial: u64) -> SessionKey {
        SessionKey {
            initiator: ip(init),
            responder: ip(resp),
            transport: Transport::Tcp,
            service_port: port,
            serial,
        }
    }

    #[test]
    fn it_to_ot_modbus_blocked_by_default_deny() {
        let mut fab = mini_fabric();
        let disp = fab.dispose(
            ip("10.10.2.5"),
            ip("10.20.2.20"),
            Transport::Tcp,
            502,
            12,
            session("10.10.2.5", "10.20.2.20", 502, 1),
            true,
        );
        match disp {
            Disposition::Drop { reason: DropReason::Firewall { rule_id }, .. } => {
                assert_eq!(rule_id, "fw-ot:default-deny");
            }
            other => panic!("expected firewall drop, got {other:?}"),
        }
    }

    #[test]
    fn jump_host_to_plc_allowed() {
        let mut fab = mini_fabric();
        let disp = fab.dispose(
            ip("10.20.1.10"),
            ip("10.20.2.20"),
            Transport::Tcp,
            502,
            12,
            session("10.20.1.10", "10.20.2.20", 502, 2),
            true,
        );
        assert!(matches!(disp, Disposition::Deliver { .. }), "got {disp:?}");
    }

    #[test]
    fn response_rides_established_session() {
        let mut fab = mini_fabric();
        let key = session("10.10.2.5", "10.20.1.10", 3389, 3);
        let open = fab.dispose(ip("10.10.2.5"), ip("10.20.1.10"), Transport::Tcp, 3389, 64, key, true);
        assert!(matches!(open, Disposition::Deliver { .. }));
        // reply travels dst->src on an ephemeral port; rules would deny it,
        // conntrack lets it through
        let reply =
            fab.dispose(ip("10.20.1.10"), ip("10.10.2.5"), Transport::Tcp, 49152, 64, key, false);
        assert!(matches!(reply, Disposition::Deliver { .. }), "got {reply:?}");
    }

    #[test]
    fn closed_port_drops() {
        let mut fab = mini_fabric();
        let disp = fab.dispose(
            ip("10.20.1.10"),
            ip("10.20.2.20"),
            Transport::Tcp,
            502,
            12,
            session("10.20.1.10", "10.20.2.20", 502, 4),
            true,
        );
        assert!(matches!(disp, Disposition::Deliver { .. }));
        // no rule admits tcp/80 and the endpoint does not listen on it either
        let disp = fab.dispose(
            ip("10.20.1.10"),
            ip("10.20.2.20"),
            Transport::Tcp,
            80,
            12,
            session("10.20.1.10", "10.20.2.20", 80, 5),
            true,
        );
        assert!(matches!(disp, Disposition::Drop { .. }));
    }

    #[test]
    fn conservation_of_packets() {
        let mut fab = mini_fabric();
        for serial in 0..20u64 {
            let port = if serial % 2 == 0 { 3389 } else { 502 };
            fab.dispose(
                ip("10.10.2.5"),
                ip("10.20.1.10"),
                Transport::Tcp,
                port,
                64,
                session("10.10.2.5", "10.20.1.10", port, serial),
                true,
            );
        }
        assert_eq!(fab.counters.sent, 20);
        assert_eq!(fab.counters.delivered + fab.counters.dropped, fab.counters.sent);
    }

    #[test]
    fn firewall_outcome_is_deterministic_per_tuple() {
        let mut fab = mini_fabric();
        let run = |fab: &mut Fabric, serial| {
            fab.dispose(
                ip("10.10.2.5"),
                ip("10.20.2.20"),
                Transport::Tcp,
                502,
                12,
                session("10.10.2.5", "10.20.2.20", 502, serial),
                true,
            )
        };
        let first = run(&mut fab, 10);
        for serial in 11..30 {
            let again = run(&mut fab, serial);
            match (&first, &again) {
                (
                    Disposition::Drop { reason: a, .. },
                    Disposition::Drop { reason: b, .. },
                ) => assert_eq!(a, b),
                other => panic!("expected deterministic drops, got {other:?}"),
            }
        }
    }

    #[test]
    fn ping_firewalled_pair_loses_everything() {
        let mut fab = mini_fabric();
        let forge = RngForge::new(5);
        let mut rng = forge.replay("ping");
        let stats = fab
            .ping(ip("10.10.2.5"), ip("10.20.2.20"), Transport::Tcp, 502, 100, &mut rng)
            .unwrap();
        assert_eq!(stats.loss_fraction, 1.0);
    }

    #[test]
    fn ping_rtt_tracks_link_mean() {
        let mut fab = mini_fabric();
        let forge = RngForge::new(5);
        let mut rng = forge.replay("ping");
        let stats = fab
            .ping(ip("10.10.2.5"), ip("10.20.1.10"), Transport::Tcp, 3389, 1000, &mut rng)
            .unwrap();
        let expect = 2.0 * 3605.0;
        let err = (stats.mean_rtt_us - expect).abs() / expect;
        assert!(err < 0.05, "mean {} vs expected {expect}", stats.mean_rtt_us);
        assert_eq!(stats.loss_fraction, 0.0);
    }

    #[test]
    fn taps_observe_crossings() {
        let mut fab = mini_fabric();
        fab.register_tap(SegmentId::OtDmz).unwrap();
        fab.register_tap(SegmentId::Ot).unwrap();
        assert_eq!(
            fab.register_tap(SegmentId::Ot),
            Err(NetError::DuplicateTap(SegmentId::Ot))
        );
        let disp = fab.dispose(
            ip("10.20.1.10"),
            ip("10.20.2.20"),
            Transport::Tcp,
            502,
            12,
            session("10.20.1.10", "10.20.2.20", 502, 77),
            true,
        );
        match disp {
            Disposition::Deliver { taps_crossed, .. } => {
                assert_eq!(taps_crossed, vec![SegmentId::OtDmz, SegmentId::Ot]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlapping_segments_rejected() {
        let forge = RngForge::new(1);
        let mut fab = Fabric::new(forge.replay("link"));
        fab.add_segment(SegmentId::ItLan, Cidr::parse("10.0.0.0/16").unwrap(), vec![]).unwrap();
        let err = fab
            .add_segment(SegmentId::Ot, Cidr::parse("10.0.5.0/24").unwrap(), vec![])
            .unwrap_err();
        assert!(matches!(err, NetError::OverlappingPrefixes(..)));
    }
}
