//! Inversion of roadside concentration ceilings into maximum annual traffic.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dispersion::MonitorSample;
use crate::error::{Error, Result};
use crate::fleet::FleetSpec;
use crate::math;
use crate::pollutant::{PerPollutant, PollutantId};
use crate::rans::{BoundarySet, TurbulenceModel};
use crate::units::ConcentrationUnit;

/// Current annual traffic volume on the section, vehicles/yr.
pub const G30_TRAFFIC_VOLUME: f64 = 2_661_896.0;
/// Average speed on the section, km/h.
pub const G30_AVERAGE_SPEED: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrafficState {
    /// Annual volume, vehicles/yr.
    pub q: f64,
    /// Average speed, km/h.
    pub v: f64,
    /// Average density, vehicles/km. Carried but unused.
    pub k: Option<f64>,
}

impl Default for TrafficState {
    fn default() -> Self {
        TrafficState { q: G30_TRAFFIC_VOLUME, v: G30_AVERAGE_SPEED, k: None }
    }
}

impl TrafficState {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0) || !self.q.is_finite() {
            return Err(Error::validation(format!("traffic volume must be >= 0, got {}", self.q)));
        }
        if !(self.v > 0.0) || !self.v.is_finite() {
            return Err(Error::validation(format!("average speed must be > 0, got {}", self.v)));
        }
        Ok(())
    }
}

/// Weights of the traffic output on the gas field and the transfer
/// coefficient between the two.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CouplingCoefficients {
    /// Control factor per pollutant; only class-factor pollutants use it.
    pub control: PerPollutant<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub transfer: f64,
}

impl Default for CouplingCoefficients {
    fn default() -> Self {
        CouplingCoefficients { control: PerPollutant::splat(1.0), alpha: 1.0, beta: 1.0, transfer: 1.0 }
    }
}

impl CouplingCoefficients {
    pub fn validate(&self) -> Result<()> {
        let all = self.control.0.iter().chain([&self.alpha, &self.beta, &self.transfer]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("coupling coefficients must be finite"));
        }
        Ok(())
    }
}

/// Environment parameter set of the forward solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentSpec {
    pub gravity: [f64; 3],
    pub temperature_c: f64,
    pub turbulence: TurbulenceModel,
    /// Reference wind speed, m/s.
    pub wind_speed: f64,
    pub boundaries: BoundarySet,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.wind_speed >= 0.0) {
            return Err(Error::validation(format!("wind speed must be >= 0, got {}", self.wind_speed)));
        }
        self.boundaries.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum StandardClass {
    /// GB 3095-2012, Class I areas.
    Gb3095ClassI,
}

impl StandardClass {
    pub const fn label(self) -> &'static str {
        match self {
            StandardClass::Gb3095ClassI => "GB3095-2012 Class I",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Constraint {
    /// Ceiling, kg/m^3.
    pub ceiling: f64,
    pub averaging_hours: f64,
    pub standard: StandardClass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConstraintSet {
    pub limits: PerPollutant<Constraint>,
}

impl ConstraintSet {
    /// Ceilings in the units they are published in.
    pub const DEFAULT_LIMITS: [(PollutantId, f64, ConcentrationUnit); 6] = [
        (PollutantId::Co, 4.0, ConcentrationUnit::MgPerM3),
        (PollutantId::Co2, 1500.0, ConcentrationUnit::MgPerM3),
        (PollutantId::No2, 40.0, ConcentrationUnit::UgPerM3),
        (PollutantId::So2, 20.0, ConcentrationUnit::UgPerM3),
        (PollutantId::Pm25, 35.0, ConcentrationUnit::UgPerM3),
        (PollutantId::Pm10, 40.0, ConcentrationUnit::UgPerM3),
    ];

    pub fn new(ceilings: PerPollutant<f64>) -> Result<Self> {
        let set = ConstraintSet {
            limits: ceilings.map(|_, &c| Constraint {
                ceiling: c,
                averaging_hours: 24.0,
                standard: StandardClass::Gb3095ClassI,
            }),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for (p, c) in self.limits.iter() {
            if !(c.ceiling > 0.0) || !c.ceiling.is_finite() {
                return Err(Error::validation(format!("ceiling for {p} must be > 0, got {}", c.ceiling)));
            }
        }
        Ok(())
    }

    pub fn ceilings(&self) -> PerPollutant<f64> {
        self.limits.map(|_, c| c.ceiling)
    }
}

impl Default for ConstraintSet {
    fn default() -> Self {
        let mut c = PerPollutant::splat(0.0);
        for (p, v, unit) in Self::DEFAULT_LIMITS {
            c[p] = unit.to_internal(v);
        }
        ConstraintSet::new(c).expect("default ceilings are positive")
    }
}

/// Background concentration added to simulated values.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BackgroundPolicy {
    /// Fixed fraction of each ceiling.
    FractionOfLimit(f64),
    /// Explicit values, kg/m^3.
    Explicit(PerPollutant<f64>),
    None,
}

/// Background share of the ceiling used during calibration, 70%.
pub const DEFAULT_BACKGROUND_FRACTION: f64 = 0.7;

impl Default for BackgroundPolicy {
    fn default() -> Self {
        BackgroundPolicy::FractionOfLimit(DEFAULT_BACKGROUND_FRACTION)
    }
}

impl BackgroundPolicy {
    pub fn background(&self, constraints: &ConstraintSet) -> Result<PerPollutant<f64>> {
        let b = match *self {
            BackgroundPolicy::FractionOfLimit(f) => {
                if !(f >= 0.0) || !f.is_finite() {
                    return Err(Error::validation(format!("background fraction must be >= 0, got {f}")));
                }
                constraints.limits.map(|_, c| f * c.ceiling)
            }
            BackgroundPolicy::Explicit(v) => v,
            BackgroundPolicy::None => PerPollutant::splat(0.0),
        };
        if b.0.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::validation("background concentrations must be >= 0"));
        }
        Ok(b)
    }
}

/// Concentration per unit annual traffic (kg/m^3 per vehicle/yr) at one
/// monitor, from samples taken at the reference traffic `q_ref`.
pub fn unit_concentration(
    samples: &[MonitorSample],
    q_ref: &TrafficState,
    monitor: (f64, f64),
) -> Result<PerPollutant<f64>> {
    q_ref.validate()?;
    if q_ref.q == 0.0 {
        return Err(Error::validation("reference traffic volume must be > 0"));
    }
    let mut out = PerPollutant::splat(f64::NAN);
    for s in samples {
        if s.distance_m == monitor.0 && s.height_m == monitor.1 {
            out[s.pollutant] = s.raw / q_ref.q;
        }
    }
    for (p, v) in out.iter() {
        if v.is_nan() {
            return Err(Error::Config(format!(
                "no {p} sample at the monitor {} m from the road, {} m high",
                monitor.0, monitor.1
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CapacityOutcome {
    /// Maximum annual volume, vehicles/yr (not rounded).
    Finite(f64),
    /// Traffic does not raise the concentration at the monitor.
    NotBinding,
    /// Background alone reaches the ceiling; no traffic is admissible.
    BackgroundExceeds,
}

impl CapacityOutcome {
    pub fn t_max(self) -> Option<f64> {
        match self {
            CapacityOutcome::Finite(t) => Some(t),
            CapacityOutcome::BackgroundExceeds => Some(0.0),
            CapacityOutcome::NotBinding => None,
        }
    }

    /// Whole vehicles per year. A relative guard of 1e-12 keeps round-off in
    /// `(C_r - b) / c_u` from dropping an exact integer by one.
    pub fn vehicles(self) -> Option<u64> {
        self.t_max().map(|t| math::floor(t * (1.0 + 1e-12)) as u64)
    }
}

/// `T_max = (C_r - background) / c_u` per pollutant.
pub fn invert_capacity(
    c_u: &PerPollutant<f64>,
    constraints: &ConstraintSet,
    policy: &BackgroundPolicy,
) -> Result<PerPollutant<CapacityOutcome>> {
    let background = policy.background(constraints)?;
    invert_with_background(c_u, constraints, &background)
}

pub fn invert_with_background(
    c_u: &PerPollutant<f64>,
    constraints: &ConstraintSet,
    background: &PerPollutant<f64>,
) -> Result<PerPollutant<CapacityOutcome>> {
    constraints.validate()?;
    for (p, &c) in c_u.iter() {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::validation(format!("unit concentration for {p} must be finite and >= 0, got {c}")));
        }
    }
    Ok(PerPollutant::from_fn(|p| {
        let net = constraints.limits[p].ceiling - background[p];
        if net <= 0.0 {
            CapacityOutcome::BackgroundExceeds
        } else if c_u[p] == 0.0 {
            CapacityOutcome::NotBinding
        } else {
            CapacityOutcome::Finite(net / c_u[p])
        }
    }))
}

/// Splits a total over the fleet by type ratio, rounding each class to the
/// nearest vehicle and giving the rounding residual to the largest class.
pub fn split_by_class(t_max: u64, fleet: &FleetSpec) -> Vec<u64> {
    let mut counts: Vec<i64> = fleet.classes.iter().map(|c| math::round(c.type_ratio * t_max as f64) as i64).collect();
    let residual = t_max as i64 - counts.iter().sum::<i64>();
    let big = fleet.largest_class();
    counts[big] += residual;
    counts.into_iter().map(|c| c.max(0) as u64).collect()
}

/// Standard-vehicle equivalents `sum(count * pce)`.
pub fn to_standard_vehicles(counts: &[u64], fleet: &FleetSpec) -> f64 {
    counts.iter().zip(&fleet.classes).map(|(&n, c)| n as f64 * c.pce).sum()
}

/// Pollutant with the smallest finite capacity, ties going to the earlier
/// pollutant in [`PollutantId::ALL`].
pub fn binding_constraint(outcomes: &PerPollutant<CapacityOutcome>) -> Option<PollutantId> {
    let mut best: Option<(PollutantId, f64)> = None;
    for (p, o) in outcomes.iter() {
        if let Some(t) = o.t_max() {
            if best.map_or(true, |(_, b)| t < b) {
                best = Some((p, t));
            }
        }
    }
    best.map(|(p, _)| p)
}

pub const BISECTION_MAX_ITERATIONS: usize = 64;

/// Solves `forward(Q) = target` on `[lo, hi]` for a nondecreasing `forward`.
pub fn bisection_invert(
    mut forward: impl FnMut(f64) -> f64,
    target: f64,
    bounds: (f64, f64),
    tolerance: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = bounds;
    if !(lo <= hi) {
        return Err(Error::validation(format!("bisection bounds out of order: [{lo}, {hi}]")));
    }
    let f_lo = forward(lo);
    let f_hi = forward(hi);
    if !(f_lo <= target && target <= f_hi) {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi, target });
    }
    if (f_lo - target).abs() <= tolerance {
        return Ok(lo);
    }
    if (f_hi - target).abs() <= tolerance {
        return Ok(hi);
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITERATIONS {
        mid = 0.5 * (lo + hi);
        let f = forward(mid);
        if (f - target).abs() <= tolerance {
            break;
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CapacityEntry {
    pub outcome: CapacityOutcome,
    /// Whole vehicles per year; `None` when not binding.
    pub t_max: Option<u64>,
    pub per_class: Vec<u64>,
    pub equivalents: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CapacityReport {
    pub monitor_distance_m: f64,
    pub monitor_height_m: f64,
    pub class_names: Vec<String>,
    pub type_ratios: Vec<f64>,
    pub pce: Vec<f64>,
    /// kg/m^3 per vehicle/yr.
    pub unit_concentration: PerPollutant<f64>,
    pub ceiling: PerPollutant<f64>,
    pub background: PerPollutant<f64>,
    pub entries: PerPollutant<CapacityEntry>,
    pub binding: Option<PollutantId>,
}

/// Builds a report from already inverted outcomes.
pub fn report_from_outcomes(
    outcomes: &PerPollutant<CapacityOutcome>,
    fleet: &FleetSpec,
    monitor: (f64, f64),
) -> CapacityReport {
    let entries = outcomes.map(|_, &outcome| {
        let t_max = outcome.vehicles();
        let per_class = split_by_class(t_max.unwrap_or(0), fleet);
        let equivalents = to_standard_vehicles(&per_class, fleet);
        CapacityEntry { outcome, t_max, per_class, equivalents }
    });
    CapacityReport {
        monitor_distance_m: monitor.0,
        monitor_height_m: monitor.1,
        class_names: fleet.classes.iter().map(|c| c.name.clone()).collect(),
        type_ratios: fleet.classes.iter().map(|c| c.type_ratio).collect(),
        pce: fleet.classes.iter().map(|c| c.pce).collect(),
        unit_concentration: PerPollutant::splat(f64::NAN),
        ceiling: PerPollutant::splat(f64::NAN),
        background: PerPollutant::splat(f64::NAN),
        entries,
        binding: binding_constraint(outcomes),
    }
}

/// Full capacity assessment at one monitor.
pub fn assess_capacity(
    c_u: &PerPollutant<f64>,
    constraints: &ConstraintSet,
    policy: &BackgroundPolicy,
    fleet: &FleetSpec,
    monitor: (f64, f64),
) -> Result<CapacityReport> {
    fleet.validate()?;
    let background = policy.background(constraints)?;
    let outcomes = invert_with_background(c_u, constraints, &background)?;
    let mut report = report_from_outcomes(&outcomes, fleet, monitor);
    report.unit_concentration = *c_u;
    report.ceiling = constraints.ceilings();
    report.background = background;
    Ok(report)
}
