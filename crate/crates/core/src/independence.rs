//! Grid-independence study along a sampling line.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::{SampleLine, StructuredMesh};

/// Largest relative change between adjacent grid levels for independence.
pub const INDEPENDENCE_CRITERION: f64 = 0.05;
/// Denominator guard for relative deviations.
pub const DEVIATION_FLOOR: f64 = 1e-30;

/// Fields returned by the forward solve on one level.
#[derive(Debug, Clone)]
pub struct LevelFields {
    pub mesh: StructuredMesh,
    /// Velocity magnitude per cell, m/s.
    pub speed: Vec<f64>,
    /// Concentration of the tracked species per cell.
    pub concentration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSamples {
    pub label: String,
    pub cells: usize,
    pub speed: Vec<f64>,
    pub concentration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelResult {
    Solved(LevelSamples),
    Failed { label: String, error: Error },
}

impl LevelResult {
    pub fn label(&self) -> &str {
        match self {
            LevelResult::Solved(s) => &s.label,
            LevelResult::Failed { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDeviation {
    pub coarse: String,
    pub fine: String,
    pub max_speed_deviation: f64,
    pub max_concentration_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceReport {
    pub levels: Vec<LevelResult>,
    pub pairs: Vec<PairDeviation>,
    pub criterion: f64,
}

impl IndependenceReport {
    /// True when at least one pair was compared and every compared pair passed.
    pub fn pass(&self) -> bool {
        !self.pairs.is_empty() && self.pairs.iter().all(|p| p.pass)
    }
}

/// Samples a field at every point of the line.
pub fn sample_line(mesh: &StructuredMesh, field: &[f64], line: &SampleLine) -> Result<Vec<f64>> {
    line.iter().map(|p| mesh.interpolate(field, p)).collect()
}

/// `max_i |coarse_i - fine_i| / |fine_i|`, the fine level being the reference.
pub fn max_relative_deviation(coarse: &[f64], fine: &[f64]) -> f64 {
    coarse.iter().zip(fine).map(|(c, f)| (c - f).abs() / f.abs().max(DEVIATION_FLOOR)).fold(0.0, f64::max)
}

pub fn compare(coarse: &LevelSamples, fine: &LevelSamples, criterion: f64) -> PairDeviation {
    let s = max_relative_deviation(&coarse.speed, &fine.speed);
    let c = max_relative_deviation(&coarse.concentration, &fine.concentration);
    PairDeviation {
        coarse: coarse.label.clone(),
        fine: fine.label.clone(),
        max_speed_deviation: s,
        max_concentration_deviation: c,
        pass: s < criterion && c < criterion,
    }
}

/// Solves every level (ordered coarse to fine), samples the line and compares
/// adjacent solved levels. A failed level is recorded and its pairs skipped.
pub fn independence_study<L>(
    levels: &[(String, L)],
    mut solve: impl FnMut(&L) -> Result<LevelFields>,
    line: &SampleLine,
) -> Result<IndependenceReport> {
    if levels.len() < 2 {
        return Err(Error::validation("an independence study needs at least two levels"));
    }
    let mut results = Vec::with_capacity(levels.len());
    for (label, level) in levels {
        let r = solve(level).and_then(|f| {
            Ok(LevelSamples {
                label: label.clone(),
                cells: f.mesh.len(),
                speed: sample_line(&f.mesh, &f.speed, line)?,
                concentration: sample_line(&f.mesh, &f.concentration, line)?,
            })
        });
        results.push(match r {
            Ok(s) => LevelResult::Solved(s),
            Err(error) => LevelResult::Failed { label: label.clone(), error },
        });
    }
    let mut pairs = Vec::new();
    for w in results.windows(2) {
        if let (LevelResult::Solved(a), LevelResult::Solved(b)) = (&w[0], &w[1]) {
            pairs.push(compare(a, b, INDEPENDENCE_CRITERION));
        }
    }
    Ok(IndependenceReport { levels: results, pairs, criterion: INDEPENDENCE_CRITERION })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::RoadStrip;
    use alloc::vec;

    fn fields(scale: f64) -> LevelFields {
        let road = RoadStrip::new(10.0, 12.0, 0.0, 300.0, 0.3).unwrap();
        let mesh = StructuredMesh::uniform([20, 30, 4], [20.0, 300.0, 8.0], road).unwrap();
        let n = mesh.len();
        let speed = (0..n).map(|c| 1.0 + mesh.center(c)[2]).collect();
        LevelFields { mesh, speed, concentration: vec![scale; n] }
    }

    #[test]
    fn identical_levels_pass_with_zero_deviation() {
        let line = SampleLine { from: [11.0, 130.0, 2.0], to: [11.0, 170.0, 2.0], points: 41 };
        let levels = vec![("a".into(), 1.0), ("b".into(), 1.0)];
        let r = independence_study(&levels, |&s| Ok(fields(s)), &line).unwrap();
        assert_eq!(r.pairs[0].max_speed_deviation, 0.0);
        assert_eq!(r.pairs[0].max_concentration_deviation, 0.0);
        assert!(r.pass());
    }

    #[test]
    fn perturbed_level_fails() {
        let line = SampleLine { from: [11.0, 130.0, 2.0], to: [11.0, 170.0, 2.0], points: 41 };
        let levels = vec![("a".into(), 1.06), ("b".into(), 1.0)];
        let r = independence_study(&levels, |&s| Ok(fields(s)), &line).unwrap();
        assert!((r.pairs[0].max_concentration_deviation - 0.06).abs() < 1e-12);
        assert!(!r.pass());
    }

    #[test]
    fn failed_level_is_reported_and_skipped() {
        let line = SampleLine { from: [11.0, 130.0, 2.0], to: [11.0, 170.0, 2.0], points: 41 };
        let levels = vec![("a".into(), 1.0), ("b".into(), -1.0), ("c".into(), 1.0)];
        let r = independence_study(
            &levels,
            |&s| if s < 0.0 { Err(Error::Divergence { equation: "k", iteration: 3 }) } else { Ok(fields(s)) },
            &line,
        )
        .unwrap();
        assert!(matches!(r.levels[1], LevelResult::Failed { .. }));
        assert!(r.pairs.is_empty());
        assert!(!r.pass());
    }
}
