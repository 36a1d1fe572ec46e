//! The deterministic scan cycle.
//!
//! One scan latches a snapshot of the whole process image, evaluates every
//! rung top-to-bottom against that snapshot, and commits all outputs
//! atomically at the end. A rung therefore never observes another rung's
//! writes from the same scan. Timers advance by the configured scan period,
//! not by any wall-clock measurement, so scan output is a pure function of
//! `(program state, pre-scan bank, dt)`.

use std::collections::BTreeMap;

use super::ladder::{Action, ArithOp, CmpOp, Expr, LadderProgram, Operand, Rung};
use super::{RegisterBank, Table};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanReport {
    /// Saturating arithmetic clipped at least one result this scan.
    pub overflow_raised: bool,
}

/// Program plus the retained element state (timers, counters, edges).
#[derive(Debug, Clone)]
pub struct LadderRuntime {
    pub program: LadderProgram,
    timer_elapsed_ms: BTreeMap<String, u64>,
    counter_value: BTreeMap<String, u16>,
    counter_prev_input: BTreeMap<String, bool>,
    edge_prev: BTreeMap<(Table, u16), bool>,
    pub scan_count: u64,
}

impl LadderRuntime {
    pub fn new(program: LadderProgram) -> Self {
        Self {
            program,
            timer_elapsed_ms: BTreeMap::new(),
            counter_value: BTreeMap::new(),
            counter_prev_input: BTreeMap::new(),
            edge_prev: BTreeMap::new(),
            scan_count: 0,
        }
    }

    pub fn timer_elapsed(&self, name: &str) -> u64 {
        self.timer_elapsed_ms.get(name).copied().unwrap_or(0)
    }

    pub fn counter_value(&self, name: &str) -> u16 {
        self.counter_value.get(name).copied().unwrap_or(0)
    }

    /// Executes one scan against `bank`, committing outputs atomically.
    pub fn scan(&mut self, bank: &mut RegisterBank, dt_ms: u64) -> ScanReport {
        let snapshot = bank.clone();
        let mut pending = bank.clone();
        let mut report = ScanReport::default();

        let rungs: Vec<Rung> = self.program.rungs.clone();
        for rung in &rungs {
            let power = self.eval(&rung.expr, &snapshot, dt_ms);
            for action in &rung.actions {
                self.apply_action(action, power, &snapshot, &mut pending, &mut report);
            }
        }

        // edge memories follow the snapshot the rungs just saw
        let mut rt_addrs = Vec::new();
        for rung in &rungs {
            collect_rt(&rung.expr, &mut rt_addrs);
        }
        for key in rt_addrs {
            let value = match key.0 {
                Table::Coil => snapshot.coils[key.1 as usize],
                Table::DiscreteInput => snapshot.discrete_inputs[key.1 as usize],
                _ => unreachable!("contacts validated as bit addresses"),
            };
            self.edge_prev.insert(key, value);
        }

        bank.coils = pending.coils;
        bank.holding_registers = pending.holding_registers;
        self.scan_count += 1;
        report
    }

    fn eval(&mut self, expr: &Expr, snap: &RegisterBank, dt_ms: u64) -> bool {
        match expr {
            Expr::And(items) => {
                let mut acc = true;
                // no short-circuit: every element must see power each scan so
                // timer and counter state advances deterministically
                for item in items {
                    acc = self.element(item, acc, snap, dt_ms);
                }
                acc
            }
            Expr::Or(branches) => {
                let mut any = false;
                for branch in branches {
                    let value = self.eval(branch, snap, dt_ms);
                    any = any || value;
                }
                any
            }
            atom => self.element(atom, true, snap, dt_ms),
        }
    }

    fn element(&mut self, atom: &Expr, power_in: bool, snap: &RegisterBank, dt_ms: u64) -> bool {
        match atom {
            Expr::And(_) | Expr::Or(_) => {
                let value = self.eval(atom, snap, dt_ms);
                power_in && value
            }
            Expr::No(addr) => power_in && snap.read_bit_addr(*addr).expect("validated"),
            Expr::Nc(addr) => power_in && !snap.read_bit_addr(*addr).expect("validated"),
            Expr::Rt(addr) => {
                let key = addr.to_modbus().expect("validated");
                let value = snap.read_bit_addr(*addr).expect("validated");
                let prev = self.edge_prev.get(&key).copied().unwrap_or(false);
                power_in && value && !prev
            }
            Expr::Ton { name, preset_ms } => {
                let elapsed = self.timer_elapsed_ms.entry(name.clone()).or_insert(0);
                if power_in {
                    *elapsed = elapsed.saturating_add(dt_ms);
                } else {
                    *elapsed = 0;
                }
                power_in && *elapsed >= *preset_ms
            }
            Expr::Ctu { name, preset } => {
                let prev = self.counter_prev_input.insert(name.clone(), power_in).unwrap_or(false);
                let count = self.counter_value.entry(name.clone()).or_insert(0);
                if power_in && !prev {
                    *count = count.saturating_add(1);
                }
                *count >= *preset
            }
            Expr::Cmp { op, left, right } => {
                let l = operand_value(*left, snap);
                let r = operand_value(*right, snap);
                let result = match op {
                    CmpOp::Lt => l < r,
                    CmpOp::Le => l <= r,
                    CmpOp::Gt => l > r,
                    CmpOp::Ge => l >= r,
                    CmpOp::Eq => l == r,
                };
                power_in && result
            }
        }
    }

    fn apply_action(
        &mut self,
        action: &Action,
        power: bool,
        snap: &RegisterBank,
        pending: &mut RegisterBank,
        report: &mut ScanReport,
    ) {
        match action {
            Action::Out(addr) => {
                let (table, index) = addr.to_modbus().expect("validated");
                pending.set_bit(table, index, power).expect("validated");
            }
            Action::Set(addr) => {
                if power {
                    let (table, index) = addr.to_modbus().expect("validated");
                    pending.set_bit(table, index, true).expect("validated");
                }
            }
            Action::Reset(addr) => {
                if power {
                    let (table, index) = addr.to_modbus().expect("validated");
                    pending.set_bit(table, index, false).expect("validated");
                }
            }
            Action::Mov { src, dst } => {
                if power {
                    let value = operand_value(*src, snap);
                    let (table, index) = dst.to_modbus().expect("validated");
                    pending.set_word(table, index, value).expect("validated");
                }
            }
            Action::Arith { op, a, b, dst } => {
                if power {
                    let a = operand_value(*a, snap);
                    let b = operand_value(*b, snap);
                    let value = match op {
                        ArithOp::Add => a.checked_add(b).unwrap_or_else(|| {
                            report.overflow_raised = true;
                            u16::MAX
                        }),
                        ArithOp::Sub => a.checked_sub(b).unwrap_or_else(|| {
                            report.overflow_raised = true;
                            0
                        }),
                        ArithOp::Mul => a.checked_mul(b).unwrap_or_else(|| {
                            report.overflow_raised = true;
                            u16::MAX
                        }),
                    };
                    let (table, index) = dst.to_modbus().expect("validated");
                    pending.set_word(table, index, value).expect("validated");
                }
            }
            Action::Scale { src, in_hi, out_hi, dst } => {
                if power {
                    let value = operand_value(*src, snap) as u32 * *out_hi as u32 / *in_hi as u32;
                    let clipped = if value > u16::MAX as u32 {
                        report.overflow_raised = true;
                        u16::MAX
                    } else {
                        value as u16
                    };
                    let (table, index) = dst.to_modbus().expect("validated");
                    pending.set_word(table, index, clipped).expect("validated");
                }
            }
            Action::ResetCounter(name) => {
                if power {
                    self.counter_value.insert(name.clone(), 0);
                }
            }
        }
    }
}

fn operand_value(op: Operand, snap: &RegisterBank) -> u16 {
    match op {
        Operand::Literal(v) => v,
        Operand::Address(addr) => snap.read_word_addr(addr).expect("validated"),
    }
}

fn collect_rt(expr: &Expr, out: &mut Vec<(Table, u16)>) {
    match expr {
        Expr::And(items) | Expr::Or(items) => items.iter().for_each(|e| collect_rt(e, out)),
        Expr::Rt(addr) => out.push(addr.to_modbus().expect("validated")),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plc::ladder::LadderProgram;

    fn runtime(source: &str) -> LadderRuntime {
        LadderRuntime::new(LadderProgram::parse(source).unwrap())
    }

    fn set_input(bank: &mut RegisterBank, index: u16, value: bool) {
        bank.set_bit(Table::DiscreteInput, index, value).unwrap();
    }

    #[test]
    fn identity_rung_copies_input_to_coil() {
        let mut rt = runtime("NO(%IX100.0) => OUT(%QX100.0)");
        let mut bank = RegisterBank::new();
        set_input(&mut bank, 800, true);
        rt.scan(&mut bank, 50);
        assert!(bank.coils[800]);
        set_input(&mut bank, 800, false);
        rt.scan(&mut bank, 50);
        assert!(!bank.coils[800]);
    }

    #[test]
    fn ton_done_bit_follows_preset() {
        let mut rt = runtime("NO(%IX100.0) & TON(t1, 500) => OUT(%QX100.0)");
        let mut bank = RegisterBank::new();
        set_input(&mut bank, 800, true);
        for scan in 1..=4 {
            rt.scan(&mut bank, 100);
            assert!(!bank.coils[800], "done early at scan {scan}");
        }
        rt.scan(&mut bank, 100);
        assert!(bank.coils[800], "done bit must rise at scan 5");
        // dropping the input resets the timer
        set_input(&mut bank, 800, false);
        rt.scan(&mut bank, 100);
        assert_eq!(rt.timer_elapsed("t1"), 0);
        assert!(!bank.coils[800]);
    }

    #[test]
    fn timer_elapsed_monotone_while_input_held() {
        let mut rt = runtime("NO(%IX100.0) & TON(t1, 10000) => OUT(%QX100.0)");
        let mut bank = RegisterBank::new();
        set_input(&mut bank, 800, true);
        let mut last = 0;
        for _ in 0..20 {
            rt.scan(&mut bank, 50);
            let now = rt.timer_elapsed("t1");
            assert!(now >= last);
            last = now;
        }
    }

    #[test]
    fn second_rung_sees_pre_scan_coil_value() {
        let mut rt = runtime(
            "NO(%IX100.0) => OUT(%QX100.0)\n\
             NO(%QX100.0) => OUT(%QX100.1)",
        );
        let mut bank = RegisterBank::new();
        set_input(&mut bank, 800, true);
        rt.scan(&mut bank, 50);
        assert!(bank.coils[800], "rung 1 committed");
        assert!(!bank.coils[801], "rung 2 saw the snapshot, not rung 1's write");
        rt.scan(&mut bank, 50);
        assert!(bank.coils[801], "propagates one scan later");
    }

    #[test]
    fn repeated_scans_with_same_inputs_are_idempotent() {
        let mut rt = runtime(
            "NO(%IX100.0) & GE(%IW100, 12800) => OUT(%QX100.2)\n\
             NO(%IX100.0) => OUT(%QX100.3)",
        );
        let mut bank = RegisterBank::new();
        set_input(&mut bank, 800, true);
        bank.set_word(Table::InputRegister, 100, 20000).unwrap();
        rt.scan(&mut bank, 50);
        let after_first = bank.clone();
        for _ in 0..5 {
            rt.scan(&mut bank, 50);
            assert_eq!(bank, after_first);
        }
    }

    #[test]
    fn rising_edge_fires_once() {
        let mut rt = runtime("RT(%IX100.0) & CTU(c1, 3) => OUT(%QX100.0)");
        let mut bank = RegisterBank::new();
        for pulse in 0..3 {
            set_input(&mut bank, 800, true);
            rt.scan(&mut bank, 50);
            rt.scan(&mut bank, 50); // held high: no second count
            set_input(&mut bank, 800, false);
            rt.scan(&mut bank, 50);
            assert_eq!(rt.counter_value("c1"), pulse + 1);
        }
        set_input(&mut bank, 800, true);
        rt.scan(&mut bank, 50);
        assert!(bank.coils[800], "counter done at preset 3");
    }

    #[test]
    fn arithmetic_saturates_and_flags() {
        let mut rt = runtime("NO(%IX100.0) => ADD(%QW0, 10 -> %QW1)");
        let mut bank = RegisterBank::new();
        set_input(&mut bank, 800, true);
        bank.set_word(Table::HoldingRegister, 0, u16::MAX - 3).unwrap();
        let report = rt.scan(&mut bank, 50);
        assert!(report.overflow_raised);
        assert_eq!(bank.holding_registers[1], u16::MAX);
    }

    #[test]
    fn mov_latches_on_rising_edge_only() {
        let mut rt = runtime("RT(%IX100.2) => MOV(%IW100 -> %QW20)");
        let mut bank = RegisterBank::new();
        bank.set_word(Table::InputRegister, 100, 4242).unwrap();
        set_input(&mut bank, 802, true);
        rt.scan(&mut bank, 50);
        assert_eq!(bank.holding_registers[20], 4242);
        // value changes while the sensor stays high: no re-latch
        bank.set_word(Table::InputRegister, 100, 9).unwrap();
        rt.scan(&mut bank, 50);
        assert_eq!(bank.holding_registers[20], 4242);
    }

    #[test]
    fn scale_maps_volts_to_counts() {
        let mut rt = runtime("NO(%IX100.0) => SCL(%IW100, 32000, 10 -> %QW5)");
        let mut bank = RegisterBank::new();
        set_input(&mut bank, 800, true);
        bank.set_word(Table::InputRegister, 100, 16000).unwrap();
        rt.scan(&mut bank, 50);
        assert_eq!(bank.holding_registers[5], 5, "16000 counts -> 5 volts");
    }
}
