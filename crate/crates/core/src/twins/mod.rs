//! Physics-lite digital twins of the two factory scenes.
//!
//! Each twin owns a Modbus process image ([`RegisterBank`]): sensors are
//! published as discrete inputs / input registers, actuators are read from
//! coils. The soft PLC polls the twin over simulated Modbus; the twin never
//! touches PLC state directly.
//!
//! Scene geometry is millimetres; motion is `speed * dt` per physics tick.
//! Sensor bits are pure functions of item positions.

pub mod production;
pub mod sorter;

use thiserror::Error;

pub use production::{ProductionParams, ProductionScene};
pub use sorter::{SorterParams, SorterScene};

/// Scale factor between sensor volts (0–10 V) and register counts (0–32000).
pub const COUNTS_PER_VOLT: f64 = 3200.0;
/// Default sort thresholds in volts; boundary values classify upward.
pub const WEIGHT_THRESHOLD_LO_V: f64 = 4.0;
pub const WEIGHT_THRESHOLD_HI_V: f64 = 7.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwinError {
    #[error("sensor voltage {0} outside 0..=10 V")]
    VoltageOutOfRange(f64),
}

/// Operational events a scene emits during a tick; the world turns these
/// into historian telemetry.
#[derive(Debug, Clone, PartialEq)]
pub enum OpEvent {
    /// Time-series sample for one historian tag.
    Sample { tag: &'static str, value: f64 },
    /// Safety fault: overlapping items; the scene has halted itself.
    Fault { message: String },
}

/// True weight classifier: which exit conveyor an item of `weight_v` volts
/// belongs on. This is the ground-truth function the deployed ladder logic
/// is supposed to implement; the acceptance oracle compares actual item
/// routing against it.
pub fn classify_weight(weight_v: f64) -> Result<u8, TwinError> {
    classify_weight_with(weight_v, WEIGHT_THRESHOLD_LO_V, WEIGHT_THRESHOLD_HI_V)
}

pub fn classify_weight_with(weight_v: f64, lo_v: f64, hi_v: f64) -> Result<u8, TwinError> {
    if !(0.0..=10.0).contains(&weight_v) {
        return Err(TwinError::VoltageOutOfRange(weight_v));
    }
    Ok(if weight_v < lo_v {
        1
    } else if weight_v < hi_v {
        2
    } else {
        3
    })
}

pub fn counts_to_volts(counts: u16) -> f64 {
    counts as f64 / COUNTS_PER_VOLT
}

pub fn volts_to_counts(volts: f64) -> u16 {
    (volts * COUNTS_PER_VOLT).round() as u16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_thresholds() {
        assert_eq!(classify_weight(2.0).unwrap(), 1);
        assert_eq!(classify_weight(4.0).unwrap(), 2, "boundary goes upward");
        assert_eq!(classify_weight(6.99).unwrap(), 2);
        assert_eq!(classify_weight(7.0).unwrap(), 3);
        assert_eq!(classify_weight(9.5).unwrap(), 3);
        assert!(classify_weight(-0.1).is_err());
        assert!(classify_weight(10.5).is_err());
    }

    #[test]
    fn counts_grid_aligns_with_volt_thresholds() {
        // items carry integer counts; the 4.0/7.0 V thresholds fall exactly
        // on the counts grid so the two classifiers can never disagree
        assert_eq!(volts_to_counts(4.0), 12800);
        assert_eq!(volts_to_counts(7.0), 22400);
        assert_eq!(classify_weight(counts_to_volts(12799)).unwrap(), 1);
        assert_eq!(classify_weight(counts_to_volts(12800)).unwrap(), 2);
        assert_eq!(classify_weight(counts_to_volts(22399)).unwrap(), 2);
        assert_eq!(classify_weight(counts_to_volts(22400)).unwrap(), 3);
    }
}
