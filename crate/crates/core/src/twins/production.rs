//! Lid production scene: two parallel lines, each feeding metal slabs to a
//! CNC station via a robotic arm; finished lids travel exit belts that merge
//! into one outfeed.
//!
//! Process image (twin acts as Modbus server):
//!
//! | table            | index | meaning                        |
//! |------------------|-------|--------------------------------|
//! | discrete input   | 800   | slab at line-1 pickup          |
//! | discrete input   | 801   | slab at line-2 pickup          |
//! | discrete input   | 802   | CNC 1 busy                     |
//! | discrete input   | 803   | CNC 2 busy                     |
//! | input register   | 100   | station 1 lid counter          |
//! | input register   | 101   | station 2 lid counter          |
//! | input register   | 102   | merged outfeed counter         |
//! | coil             | 800   | conveyors run                  |
//! | coil             | 801   | CNC 1 start enable             |
//! | coil             | 802   | CNC 2 start enable             |
//! | coil             | 804   | counter reset                  |

use crate::kernel::SimRng;
use crate::plc::{RegisterBank, Table};

use super::OpEvent;

pub const DI_PICKUP_BASE: u16 = 800;
pub const DI_CNC_BUSY_BASE: u16 = 802;
pub const IR_STATION_BASE: u16 = 100;
pub const IR_EXIT_COUNT: u16 = 102;
pub const COIL_RUN: u16 = 800;
pub const COIL_CNC_START_BASE: u16 = 801;
pub const COIL_COUNTER_RESET: u16 = 804;

const ENTRY_LENGTH_MM: f64 = 1000.0;
const EXIT_LENGTH_MM: f64 = 800.0;
const MERGE_LENGTH_MM: f64 = 1000.0;
const PICKUP_ZONE_MM: f64 = 100.0;
const QUEUE_SPACING_MM: f64 = 100.0;
const COLLISION_TOLERANCE_MM: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct ProductionParams {
    pub spawn_interval_ms: u64,
    /// Line 2 spawns offset by half an interval to stagger the merge.
    pub cnc_cycle_ms: u64,
    pub speed_mm_s: f64,
}

impl Default for ProductionParams {
    fn default() -> Self {
        Self { spawn_interval_ms: 6000, cnc_cycle_ms: 4000, speed_mm_s: 200.0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cnc {
    busy_until_ms: Option<u64>,
}

#[derive(Debug)]
pub struct ProductionScene {
    pub bank: RegisterBank,
    params: ProductionParams,
    elapsed_ms: u64,
    next_spawn_ms: [u64; 2],
    /// Slab positions per entry line, ascending.
    slabs: [Vec<f64>; 2],
    cnc: [Cnc; 2],
    /// Lid positions per exit line followed by the merge belt.
    lids: [Vec<f64>; 2],
    merge: Vec<f64>,
    station_counts: [u16; 2],
    exit_count: u16,
    pub created_slabs: u64,
    pub exited_lids: u64,
    pub faulted: u64,
    pub fault: Option<String>,
    _rng: SimRng,
}

impl ProductionScene {
    pub fn new(params: ProductionParams, rng: SimRng) -> Self {
        let first = params.spawn_interval_ms;
        let stagger = params.spawn_interval_ms / 2;
        Self {
            bank: RegisterBank::new(),
            params,
            elapsed_ms: 0,
            next_spawn_ms: [first, first + stagger],
            slabs: [Vec::new(), Vec::new()],
            cnc: [Cnc { busy_until_ms: None }; 2],
            lids: [Vec::new(), Vec::new()],
            merge: Vec::new(),
            station_counts: [0; 2],
            exit_count: 0,
            created_slabs: 0,
            exited_lids: 0,
            faulted: 0,
            fault: None,
            _rng: rng,
        }
    }

    pub fn station_counts(&self) -> [u16; 2] {
        self.station_counts
    }

    pub fn exit_count(&self) -> u16 {
        self.exit_count
    }

    pub fn in_flight(&self) -> u64 {
        let conveyor: usize = self.slabs.iter().map(Vec::len).sum::<usize>()
            + self.lids.iter().map(Vec::len).sum::<usize>()
            + self.merge.len();
        let machining = self.cnc.iter().filter(|c| c.busy_until_ms.is_some()).count();
        (conveyor + machining) as u64
    }

    fn coil(&self, index: u16) -> bool {
        self.bank.coils[index as usize]
    }

    pub fn tick(&mut self, dt_ms: u64) -> Vec<OpEvent> {
        let mut events = Vec::new();
        self.elapsed_ms += dt_ms;

        if self.coil(COIL_COUNTER_RESET)
            && (self.station_counts != [0; 2] || self.exit_count != 0)
        {
            self.station_counts = [0; 2];
            self.exit_count = 0;
            events.push(OpEvent::Sample { tag: "line1.count", value: 0.0 });
            events.push(OpEvent::Sample { tag: "line2.count", value: 0.0 });
            events.push(OpEvent::Sample { tag: "exit.count", value: 0.0 });
        }

        let running = self.coil(COIL_RUN) && self.fault.is_none();
        let step = self.params.speed_mm_s * dt_ms as f64 / 1000.0;

        for line in 0..2 {
            if running && self.elapsed_ms >= self.next_spawn_ms[line] {
                self.next_spawn_ms[line] += self.params.spawn_interval_ms;
                self.slabs[line].insert(0, 0.0);
                self.created_slabs += 1;
            }

            if running {
                // slabs queue up behind the pickup point
                let mut limit = ENTRY_LENGTH_MM;
                for pos in self.slabs[line].iter_mut().rev() {
                    *pos = (*pos + step).min(limit);
                    limit = *pos - QUEUE_SPACING_MM;
                }
            }

            // CNC: consume a waiting slab when enabled and idle
            let start_enabled = self.coil(COIL_CNC_START_BASE + line as u16);
            let slab_ready = self.slabs[line]
                .last()
                .map(|p| *p >= ENTRY_LENGTH_MM - PICKUP_ZONE_MM)
                .unwrap_or(false);
            match self.cnc[line].busy_until_ms {
                Some(done) if self.elapsed_ms >= done => {
                    self.cnc[line].busy_until_ms = None;
                    self.station_counts[line] += 1;
                    self.lids[line].push(0.0);
                    events.push(OpEvent::Sample {
                        tag: if line == 0 { "line1.count" } else { "line2.count" },
                        value: self.station_counts[line] as f64,
                    });
                }
                Some(_) => {}
                None => {
                    if running && start_enabled && slab_ready {
                        self.slabs[line].pop();
                        self.cnc[line].busy_until_ms =
                            Some(self.elapsed_ms + self.params.cnc_cycle_ms);
                    }
                }
            }

            // lids ride the exit belt, then transfer onto the merge belt
            if running {
                let mut transferred = Vec::new();
                for (i, pos) in self.lids[line].iter_mut().enumerate() {
                    *pos += step;
                    if *pos >= EXIT_LENGTH_MM {
                        transferred.push(i);
                    }
                }
                for i in transferred.into_iter().rev() {
                    self.lids[line].remove(i);
                    if self.merge.iter().any(|p| p.abs() < COLLISION_TOLERANCE_MM) {
                        let message = format!("lids collided at the line-{} merge", line + 1);
                        self.fault = Some(message.clone());
                        self.faulted += 1;
                        events.push(OpEvent::Fault { message });
                    } else {
                        self.merge.push(0.0);
                    }
                }
            }
        }

        if running {
            let mut exited = Vec::new();
            for (i, pos) in self.merge.iter_mut().enumerate() {
                *pos += step;
                if *pos >= MERGE_LENGTH_MM {
                    exited.push(i);
                }
            }
            for i in exited.into_iter().rev() {
                self.merge.remove(i);
                self.exit_count += 1;
                events.push(OpEvent::Sample { tag: "exit.count", value: self.exit_count as f64 });
            }
        }

        self.publish_sensors();
        events
    }

    fn publish_sensors(&mut self) {
        for line in 0..2usize {
            let at_pickup = self.slabs[line]
                .last()
                .map(|p| *p >= ENTRY_LENGTH_MM - PICKUP_ZONE_MM)
                .unwrap_or(false);
            let busy = self.cnc[line].busy_until_ms.is_some();
            self.bank
                .set_bit(Table::DiscreteInput, DI_PICKUP_BASE + line as u16, at_pickup)
                .expect("in range");
            self.bank
                .set_bit(Table::DiscreteInput, DI_CNC_BUSY_BASE + line as u16, busy)
                .expect("in range");
            self.bank
                .set_word(
                    Table::InputRegister,
                    IR_STATION_BASE + line as u16,
                    self.station_counts[line],
                )
                .expect("in range");
        }
        self.bank
            .set_word(Table::InputRegister, IR_EXIT_COUNT, self.exit_count)
            .expect("in range");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngForge;

    fn scene() -> ProductionScene {
        let forge = RngForge::new(7);
        ProductionScene::new(ProductionParams::default(), forge.replay("twin.prod"))
    }

    fn enable(s: &mut ProductionScene) {
        s.bank.set_bit(Table::Coil, COIL_RUN, true).unwrap();
        s.bank.set_bit(Table::Coil, COIL_CNC_START_BASE, true).unwrap();
        s.bank.set_bit(Table::Coil, COIL_CNC_START_BASE + 1, true).unwrap();
    }

    fn run_for(s: &mut ProductionScene, ms: u64) {
        let mut t = 0;
        while t < ms {
            s.tick(100);
            t += 100;
        }
    }

    #[test]
    fn stopped_scene_produces_nothing() {
        let mut s = scene();
        run_for(&mut s, 60_000);
        assert_eq!(s.created_slabs, 0);
        assert_eq!(s.exit_count(), 0);
    }

    #[test]
    fn lines_produce_and_merge() {
        let mut s = scene();
        enable(&mut s);
        run_for(&mut s, 120_000);
        let [line1, line2] = s.station_counts();
        assert!(line1 >= 15, "line 1 produced {line1}");
        assert!(line2 >= 15, "line 2 produced {line2}");
        assert!(s.exit_count() > 0);
        assert!(s.fault.is_none());
        // merged exit equals the line sum minus lids still in transit
        let in_transit: usize =
            s.lids.iter().map(Vec::len).sum::<usize>() + s.merge.len();
        assert_eq!(
            s.exit_count() as usize + in_transit,
            (line1 + line2) as usize,
            "merge must conserve lids"
        );
        // slab conservation across the whole scene
        assert_eq!(
            s.created_slabs,
            (line1 + line2) as u64 + s.slabs.iter().map(Vec::len).sum::<usize>() as u64
                + s.cnc.iter().filter(|c| c.busy_until_ms.is_some()).count() as u64
                + s.faulted
        );
    }

    #[test]
    fn reset_coil_zeroes_counters() {
        let mut s = scene();
        enable(&mut s);
        run_for(&mut s, 60_000);
        assert!(s.station_counts()[0] > 0);
        s.bank.set_bit(Table::Coil, COIL_COUNTER_RESET, true).unwrap();
        s.tick(100);
        assert_eq!(s.station_counts(), [0, 0]);
        assert_eq!(s.exit_count(), 0);
    }

    #[test]
    fn cnc_waits_for_start_enable() {
        let mut s = scene();
        s.bank.set_bit(Table::Coil, COIL_RUN, true).unwrap();
        run_for(&mut s, 60_000);
        assert!(s.created_slabs > 0);
        assert_eq!(s.station_counts(), [0, 0], "no CNC enable, no lids");
        // slabs queue at the pickup without colliding
        assert!(s.fault.is_none());
        assert!(s.bank.get_bit(Table::DiscreteInput, DI_PICKUP_BASE).unwrap());
    }

    #[test]
    fn counters_monotone_between_resets() {
        let mut s = scene();
        enable(&mut s);
        let mut last = 0u16;
        for _ in 0..600 {
            s.tick(100);
            let now = s.station_counts()[0];
            assert!(now >= last);
            last = now;
        }
    }
}
