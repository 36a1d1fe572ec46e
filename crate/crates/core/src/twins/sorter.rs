//! Sort-by-weight scene: a weigh scale on the main conveyor and two pop-up
//! wheel sorters diverting boxes onto side exits; heavy boxes run through to
//! the end of the belt (exit 3).
//!
//! Process image (twin acts as Modbus server):
//!
//! | table            | index | meaning                          |
//! |------------------|-------|----------------------------------|
//! | discrete input   | 800   | box over the scale               |
//! | discrete input   | 801   | box at wheel sorter 1            |
//! | discrete input   | 802   | box at wheel sorter 2            |
//! | discrete input   | 803   | box at belt entry                |
//! | input register   | 100   | scale output, counts (0..32000)  |
//! | input register   | 101-3 | exit 1/2/3 box counters          |
//! | coil             | 800   | main conveyor run                |
//! | coil             | 801   | wheel sorter 1 energize          |
//! | coil             | 802   | wheel sorter 2 energize          |
//! | coil             | 803   | exit conveyors run               |
//! | coil             | 804   | counter reset                    |

use crate::kernel::SimRng;
use crate::plc::{RegisterBank, Table};

use super::{counts_to_volts, OpEvent};

pub const DI_AT_SCALE: u16 = 800;
pub const DI_AT_WHEEL1: u16 = 801;
pub const DI_AT_WHEEL2: u16 = 802;
pub const DI_AT_ENTRY: u16 = 803;
pub const IR_SCALE_COUNTS: u16 = 100;
pub const IR_EXIT_BASE: u16 = 101;
pub const COIL_MAIN_RUN: u16 = 800;
pub const COIL_WHEEL1: u16 = 801;
pub const COIL_WHEEL2: u16 = 802;
pub const COIL_EXITS_RUN: u16 = 803;
pub const COIL_COUNTER_RESET: u16 = 804;

const MAIN_LENGTH_MM: f64 = 3200.0;
const EXIT_LENGTH_MM: f64 = 800.0;
const ENTRY_ZONE: (f64, f64) = (0.0, 400.0);
const SCALE_ZONE: (f64, f64) = (500.0, 900.0);
const WHEEL1_ZONE: (f64, f64) = (1400.0, 1800.0);
const WHEEL2_ZONE: (f64, f64) = (2200.0, 2600.0);
const COLLISION_TOLERANCE_MM: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct SorterParams {
    pub spawn_interval_ms: u64,
    pub speed_mm_s: f64,
    /// Inclusive box weight range drawn uniformly, in counts.
    pub weight_lo_counts: u16,
    pub weight_hi_counts: u16,
}

impl Default for SorterParams {
    fn default() -> Self {
        Self {
            spawn_interval_ms: 3000,
            speed_mm_s: 1200.0,
            weight_lo_counts: 3200,  // 1 V
            weight_hi_counts: 28800, // 9 V
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lane {
    Main,
    Exit(u8),
}

#[derive(Debug, Clone)]
struct Box {
    weight_counts: u16,
    position_mm: f64,
    lane: Lane,
    weighed: bool,
}

/// One item's completed journey, kept for oracles and conservation checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SortedBox {
    pub weight_counts: u16,
    pub exit: u8,
}

#[derive(Debug)]
pub struct SorterScene {
    pub bank: RegisterBank,
    params: SorterParams,
    rng: SimRng,
    boxes: Vec<Box>,
    elapsed_ms: u64,
    next_spawn_at_ms: u64,
    exit_counts: [u16; 3],
    pub sorted: Vec<SortedBox>,
    pub created: u64,
    pub faulted: u64,
    pub fault: Option<String>,
}

impl SorterScene {
    pub fn new(params: SorterParams, rng: SimRng) -> Self {
        let next_spawn_at_ms = params.spawn_interval_ms;
        Self {
            bank: RegisterBank::new(),
            params,
            rng,
            boxes: Vec::new(),
            elapsed_ms: 0,
            next_spawn_at_ms,
            exit_counts: [0; 3],
            sorted: Vec::new(),
            created: 0,
            faulted: 0,
            fault: None,
        }
    }

    pub fn in_flight(&self) -> u64 {
        self.boxes.len() as u64
    }

    pub fn exit_counts(&self) -> [u16; 3] {
        self.exit_counts
    }

    fn coil(&self, index: u16) -> bool {
        self.bank.coils[index as usize]
    }

    /// Advances the scene by one physics tick.
    pub fn tick(&mut self, dt_ms: u64) -> Vec<OpEvent> {
        let mut events = Vec::new();
        self.elapsed_ms += dt_ms;

        if self.coil(COIL_COUNTER_RESET) && self.exit_counts != [0; 3] {
            self.exit_counts = [0; 3];
            for i in 0..3u16 {
                events.push(OpEvent::Sample {
                    tag: exit_tag(i as u8 + 1),
                    value: 0.0,
                });
            }
        }

        let main_running = self.coil(COIL_MAIN_RUN) && self.fault.is_none();
        let exits_running = self.coil(COIL_EXITS_RUN) && self.fault.is_none();

        // spawn only onto a moving belt so boxes never pile up at the infeed
        if main_running && self.elapsed_ms >= self.next_spawn_at_ms {
            self.next_spawn_at_ms += self.params.spawn_interval_ms;
            let weight_counts = self.rng.range_u64(
                self.params.weight_lo_counts as u64,
                self.params.weight_hi_counts as u64 + 1,
            ) as u16;
            self.boxes.push(Box {
                weight_counts,
                position_mm: 0.0,
                lane: Lane::Main,
                weighed: false,
            });
            self.created += 1;
        }

        let step = self.params.speed_mm_s * dt_ms as f64 / 1000.0;
        let wheel1 = self.coil(COIL_WHEEL1);
        let wheel2 = self.coil(COIL_WHEEL2);

        let mut finished: Vec<(usize, u8)> = Vec::new();
        for (i, item) in self.boxes.iter_mut().enumerate() {
            match item.lane {
                Lane::Main => {
                    if !main_running {
                        continue;
                    }
                    item.position_mm += step;
                    if !item.weighed && in_zone(item.position_mm, SCALE_ZONE) {
                        item.weighed = true;
                        self.bank
                            .set_word(Table::InputRegister, IR_SCALE_COUNTS, item.weight_counts)
                            .expect("in range");
                        events.push(OpEvent::Sample {
                            tag: "item.weight_v",
                            value: counts_to_volts(item.weight_counts),
                        });
                    }
                    if wheel1 && in_zone(item.position_mm, WHEEL1_ZONE) {
                        item.lane = Lane::Exit(1);
                        item.position_mm = 0.0;
                    } else if wheel2 && in_zone(item.position_mm, WHEEL2_ZONE) {
                        item.lane = Lane::Exit(2);
                        item.position_mm = 0.0;
                    } else if item.position_mm >= MAIN_LENGTH_MM {
                        finished.push((i, 3));
                    }
                }
                Lane::Exit(exit) => {
                    if !exits_running {
                        continue;
                    }
                    item.position_mm += step;
                    if item.position_mm >= EXIT_LENGTH_MM {
                        finished.push((i, exit));
                    }
                }
            }
        }

        for (i, exit) in finished.into_iter().rev() {
            let item = self.boxes.remove(i);
            self.exit_counts[exit as usize - 1] += 1;
            self.sorted.push(SortedBox { weight_counts: item.weight_counts, exit });
            events.push(OpEvent::Sample { tag: "item.exit", value: exit as f64 });
            events.push(OpEvent::Sample {
                tag: exit_tag(exit),
                value: self.exit_counts[exit as usize - 1] as f64,
            });
        }

        if let Some(message) = self.collision() {
            if self.fault.is_none() {
                self.fault = Some(message.clone());
                self.faulted += self.boxes.len() as u64;
                events.push(OpEvent::Fault { message });
            }
        }

        self.publish_sensors();
        events
    }

    fn collision(&self) -> Option<String> {
        for (i, a) in self.boxes.iter().enumerate() {
            for b in self.boxes.iter().skip(i + 1) {
                if a.lane == b.lane && (a.position_mm - b.position_mm).abs() < COLLISION_TOLERANCE_MM
                {
                    return Some(format!(
                        "boxes overlap at {:.0} mm on {:?}",
                        a.position_mm, a.lane
                    ));
                }
            }
        }
        None
    }

    fn publish_sensors(&mut self) {
        let on_main = |zone: (f64, f64)| {
            self.boxes
                .iter()
                .any(|b| b.lane == Lane::Main && in_zone(b.position_mm, zone))
        };
        let at_entry = on_main(ENTRY_ZONE);
        let at_scale = on_main(SCALE_ZONE);
        let at_wheel1 = on_main(WHEEL1_ZONE);
        let at_wheel2 = on_main(WHEEL2_ZONE);
        let b = &mut self.bank;
        b.set_bit(Table::DiscreteInput, DI_AT_SCALE, at_scale).expect("in range");
        b.set_bit(Table::DiscreteInput, DI_AT_WHEEL1, at_wheel1).expect("in range");
        b.set_bit(Table::DiscreteInput, DI_AT_WHEEL2, at_wheel2).expect("in range");
        b.set_bit(Table::DiscreteInput, DI_AT_ENTRY, at_entry).expect("in range");
        for i in 0..3usize {
            b.set_word(Table::InputRegister, IR_EXIT_BASE + i as u16, self.exit_counts[i])
                .expect("in range");
        }
    }

    /// Spawns a box with a chosen weight, for tests that need exact values.
    pub fn inject_box(&mut self, weight_counts: u16) {
        self.boxes.push(Box { weight_counts, position_mm: 0.0, lane: Lane::Main, weighed: false });
        self.created += 1;
    }
}

fn exit_tag(exit: u8) -> &'static str {
    match exit {
        1 => "exit1.count",
        2 => "exit2.count",
        _ => "exit3.count",
    }
}

fn in_zone(pos: f64, zone: (f64, f64)) -> bool {
    pos >= zone.0 && pos < zone.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngForge;
    use crate::plc::ladder::LadderProgram;
    use crate::plc::scan::LadderRuntime;
    use crate::twins::classify_weight;

    fn scene() -> SorterScene {
        let forge = RngForge::new(99);
        SorterScene::new(SorterParams::default(), forge.replay("twin.sorter"))
    }

    fn run_coils(scene: &mut SorterScene) {
        scene.bank.set_bit(Table::Coil, COIL_MAIN_RUN, true).unwrap();
        scene.bank.set_bit(Table::Coil, COIL_EXITS_RUN, true).unwrap();
    }

    #[test]
    fn stopped_conveyor_freezes_positions() {
        let mut s = scene();
        s.inject_box(16000);
        for _ in 0..10 {
            s.tick(100);
        }
        assert_eq!(s.in_flight(), 1);
        assert!(s.sorted.is_empty());
    }

    #[test]
    fn box_runs_through_to_exit3_without_wheels() {
        let mut s = scene();
        run_coils(&mut s);
        s.inject_box(16000);
        for _ in 0..40 {
            s.tick(100);
        }
        assert_eq!(s.sorted.len(), 1);
        assert_eq!(s.sorted[0].exit, 3);
    }

    #[test]
    fn energized_wheel_diverts() {
        let mut s = scene();
        run_coils(&mut s);
        s.bank.set_bit(Table::Coil, COIL_WHEEL1, true).unwrap();
        s.inject_box(9000);
        for _ in 0..40 {
            s.tick(100);
        }
        assert_eq!(s.sorted.len(), 1);
        assert_eq!(s.sorted[0].exit, 1);
    }

    #[test]
    fn weigh_event_reports_volts() {
        let mut s = scene();
        run_coils(&mut s);
        s.inject_box(16000);
        let mut seen = None;
        for _ in 0..12 {
            for ev in s.tick(100) {
                if let OpEvent::Sample { tag: "item.weight_v", value } = ev {
                    seen = Some(value);
                }
            }
        }
        assert_eq!(seen, Some(5.0));
    }

    /// Closed-loop check against an in-process ladder runtime: every box must
    /// land on the exit `classify_weight` predicts. The runtime plays the PLC
    /// role by polling the twin image directly (no network in this test).
    #[test]
    fn ladder_controlled_sorting_matches_classifier() {
        // %QX101.1 (stop command) is never set, so the run chain stays closed
        let program = LadderProgram::parse(
            "NC(%QX101.1) => OUT(%QX100.0)\n\
             NO(%QX100.0) => OUT(%QX100.3)\n\
             RT(%IX100.0) => MOV(%IW100 -> %QW20)\n\
             NO(%IX100.1) & LT(%QW20, %QW10) => OUT(%QX100.1)\n\
             NO(%IX100.2) & GE(%QW20, %QW10) & LT(%QW20, %QW11) => OUT(%QX100.2)",
        )
        .unwrap();
        let mut plc = LadderRuntime::new(program);
        let mut plc_bank = RegisterBank::new();
        plc_bank.set_word(Table::HoldingRegister, 10, 12800).unwrap();
        plc_bank.set_word(Table::HoldingRegister, 11, 22400).unwrap();

        let mut s = scene();

        for _ in 0..3000u32 {
            s.tick(100);
            // poll: twin sensors -> PLC image
            for di in 800..=803u16 {
                let v = s.bank.get_bit(Table::DiscreteInput, di).unwrap();
                plc_bank.set_bit(Table::DiscreteInput, di, v).unwrap();
            }
            let w = s.bank.get_word(Table::InputRegister, 100).unwrap();
            plc_bank.set_word(Table::InputRegister, 100, w).unwrap();
            plc.scan(&mut plc_bank, 100);
            // write back: PLC coils -> twin actuators
            for coil in 800..=807u16 {
                let v = plc_bank.get_bit(Table::Coil, coil).unwrap();
                s.bank.set_bit(Table::Coil, coil, v).unwrap();
            }
        }

        assert!(s.sorted.len() >= 90, "only {} boxes sorted", s.sorted.len());
        for item in &s.sorted {
            let expected = classify_weight(counts_to_volts(item.weight_counts)).unwrap();
            assert_eq!(item.exit, expected, "box of {} counts missorted", item.weight_counts);
        }
        assert_eq!(s.created, s.sorted.len() as u64 + s.in_flight() + s.faulted);
    }

    #[test]
    fn collision_raises_fault_and_halts() {
        let mut s = scene();
        run_coils(&mut s);
        s.inject_box(9000);
        s.inject_box(9001); // same position: overlapping
        let events = s.tick(100);
        assert!(events.iter().any(|e| matches!(e, OpEvent::Fault { .. })));
        assert!(s.fault.is_some());
        let before: Vec<f64> = s.boxes.iter().map(|b| b.position_mm).collect();
        s.tick(100);
        let after: Vec<f64> = s.boxes.iter().map(|b| b.position_mm).collect();
        assert_eq!(before, after, "faulted scene must halt");
    }
}
