//! Comparison of simulated roadside concentrations with field measurements.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dispersion::MonitorSample;
use crate::pollutant::{PerPollutant, PollutantId};
use crate::units::ConcentrationUnit;

/// Guard on the relative-error denominator, in the measurement's own unit.
pub const EPS_DIV: f64 = 1e-12;
/// Largest overall relative error accepted as a calibrated model.
pub const CALIBRATION_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FieldMeasurement {
    pub pollutant: PollutantId,
    pub distance_m: f64,
    /// In `unit`.
    pub value: f64,
    pub unit: ConcentrationUnit,
}

/// One matched (pollutant, distance) pair. Values are in the measurement's unit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationRow {
    pub pollutant: PollutantId,
    pub distance_m: f64,
    pub unit: ConcentrationUnit,
    pub field: f64,
    pub sim_raw: f64,
    pub sim_adjusted: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    /// The field value was below [`EPS_DIV`] and the guard was used.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RowError {
    pub pollutant: PollutantId,
    pub distance_m: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationReport {
    pub rows: Vec<CalibrationRow>,
    pub errors: Vec<RowError>,
    pub per_pollutant_max: PerPollutant<Option<f64>>,
    pub overall_max: f64,
    pub within_threshold: bool,
}

pub fn relative_error(adjusted: f64, field: f64) -> f64 {
    (adjusted - field).abs() / field.abs().max(EPS_DIV)
}

/// Matches simulated samples to field rows by pollutant and distance.
pub fn calibrate(sim: &[MonitorSample], field: &[FieldMeasurement]) -> CalibrationReport {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for f in field {
        let Some(s) = sim.iter().find(|s| s.pollutant == f.pollutant && s.distance_m == f.distance_m) else {
            errors.push(RowError {
                pollutant: f.pollutant,
                distance_m: f.distance_m,
                message: format!("no simulated {} sample at {} m", f.pollutant, f.distance_m),
            });
            continue;
        };
        let sim_raw = f.unit.from_internal(s.raw);
        let sim_adjusted = f.unit.from_internal(s.adjusted);
        rows.push(CalibrationRow {
            pollutant: f.pollutant,
            distance_m: f.distance_m,
            unit: f.unit,
            field: f.value,
            sim_raw,
            sim_adjusted,
            abs_error: (sim_adjusted - f.value).abs(),
            rel_error: relative_error(sim_adjusted, f.value),
            degenerate: f.value.abs() < EPS_DIV,
        });
    }
    for s in sim {
        let matched = field.iter().any(|f| f.pollutant == s.pollutant && f.distance_m == s.distance_m);
        let pollutant_measured = field.iter().any(|f| f.pollutant == s.pollutant);
        if pollutant_measured && !matched {
            errors.push(RowError {
                pollutant: s.pollutant,
                distance_m: s.distance_m,
                message: format!("no field {} measurement at {} m", s.pollutant, s.distance_m),
            });
        }
    }
    let mut per_pollutant_max = PerPollutant::splat(None);
    let mut overall_max: f64 = 0.0;
    for r in &rows {
        let m: &mut Option<f64> = &mut per_pollutant_max[r.pollutant];
        *m = Some(m.map_or(r.rel_error, |v| v.max(r.rel_error)));
        overall_max = overall_max.max(r.rel_error);
    }
    CalibrationReport {
        within_threshold: !rows.is_empty() && overall_max <= CALIBRATION_THRESHOLD,
        rows,
        errors,
        per_pollutant_max,
        overall_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample(p: PollutantId, d: f64, raw: f64, bg: f64) -> MonitorSample {
        MonitorSample { pollutant: p, distance_m: d, height_m: 2.0, raw, background: bg, adjusted: raw + bg }
    }

    #[test]
    fn exact_match_has_zero_error() {
        let u = ConcentrationUnit::UgPerM3;
        let sim = vec![sample(PollutantId::Co, 30.0, u.to_internal(1.0), u.to_internal(2.0))];
        let field = vec![FieldMeasurement { pollutant: PollutantId::Co, distance_m: 30.0, value: 3.0, unit: u }];
        let r = calibrate(&sim, &field);
        assert!(r.rows[0].rel_error < 1e-15);
        assert!(r.within_threshold);
    }

    #[test]
    fn zero_field_uses_guard() {
        let u = ConcentrationUnit::KgPerM3;
        let sim = vec![sample(PollutantId::So2, 30.0, 1e-9, 0.0)];
        let field = vec![FieldMeasurement { pollutant: PollutantId::So2, distance_m: 30.0, value: 0.0, unit: u }];
        let r = calibrate(&sim, &field);
        assert!(r.rows[0].degenerate);
        assert_eq!(r.rows[0].rel_error, 1e-9 / EPS_DIV);
    }

    #[test]
    fn distance_mismatch_reported_per_row() {
        let u = ConcentrationUnit::KgPerM3;
        let sim = vec![sample(PollutantId::Co, 30.0, 1.0, 0.0), sample(PollutantId::Co, 100.0, 1.0, 0.0)];
        let field = vec![
            FieldMeasurement { pollutant: PollutantId::Co, distance_m: 30.0, value: 1.0, unit: u },
            FieldMeasurement { pollutant: PollutantId::Co, distance_m: 50.0, value: 1.0, unit: u },
        ];
        let r = calibrate(&sim, &field);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.errors.len(), 2);
    }

    #[test]
    fn threshold_boundary() {
        let u = ConcentrationUnit::KgPerM3;
        let f = [FieldMeasurement { pollutant: PollutantId::Co, distance_m: 30.0, value: 1.0, unit: u }];
        assert!(calibrate(&[sample(PollutantId::Co, 30.0, 1.099, 0.0)], &f).within_threshold);
        assert!(!calibrate(&[sample(PollutantId::Co, 30.0, 1.101, 0.0)], &f).within_threshold);
    }
}
