//! Deterministic virtual-time simulation of a segmented industrial
//! enterprise network (IT / OT / IIoT).
//!
//! The crate builds a complete miniature plant out of pure software:
//!
//! * [`kernel`] — discrete-event engine: virtual clock, ordered queue,
//!   seeded named-stream randomness. Everything else runs on top of it.
//! * [`net`] — six network segments, latency/jitter links, two stateful
//!   packet-filter firewalls, and per-segment monitoring taps.
//! * [`plc`] — a ladder-logic soft PLC with a Modbus-addressable process
//!   image and a deterministic scan cycle.
//! * [`twins`] — physics-lite digital twins of the two factory scenes: a
//!   two-line lid production process and a sort-by-weight conveyor.
//! * [`hosts`] — abstract enterprise hosts, credentials, Windows-style host
//!   events, mailboxes, and scripted NPC users.
//! * [`campaign`] — an ATT&CK-aligned adversary engine: atomic abilities,
//!   a fact store, and a seven-phase plan executed over the simulated world.
//! * [`telemetry`] — the synchronized observation pipeline and the dataset
//!   bundle exporter (JSONL + PCAP + manifest), plus the evaluation report.
//! * [`scenario`] — declarative JSON scenario documents and validation.
//! * [`world`] — the event loop tying all of the above together.
//!
//! Runs are reproducible: the same scenario and seed produce byte-identical
//! dataset bundles.

pub mod campaign;
pub mod hosts;
pub mod kernel;
pub mod net;
pub mod plc;
pub mod scenario;
pub mod telemetry;
pub mod twins;
pub mod world;

pub use kernel::{VirtualTime, MICROS_PER_DAY, MICROS_PER_MS, MICROS_PER_SEC};
pub use net::SegmentId;
pub use world::World;
