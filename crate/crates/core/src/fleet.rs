//! Tier-2 traffic emission inventory and its conversion to a steady
//! road-surface source.
//!
//! Annual mass per class and pollutant is `stock x mileage x factor`. The
//! three selector routes (class factor, CO2 factor, SO2 factor) are kept
//! explicit in [`class_annual_mass`] even though each reduces to that product.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::capacity::{CouplingCoefficients, TrafficState};
use crate::error::{Error, Result};
use crate::mesh::RoadStrip;
use crate::pollutant::{EmissionRoute, PerPollutant, PollutantId};
use crate::SECONDS_PER_YEAR;

/// Tolerance on the fleet's type ratios summing to one.
pub const TYPE_RATIO_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Fuel {
    Petrol,
    Diesel,
}

impl core::str::FromStr for Fuel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "petrol" | "gasoline" => Ok(Fuel::Petrol),
            "diesel" => Ok(Fuel::Diesel),
            other => Err(Error::validation(format!("unknown fuel `{other}`"))),
        }
    }
}

impl Fuel {
    pub const fn label(self) -> &'static str {
        match self {
            Fuel::Petrol => "petrol",
            Fuel::Diesel => "diesel",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleClass {
    pub name: String,
    pub fuel: Fuel,
    /// Registered vehicles.
    pub stock: f64,
    /// Average annual distance per vehicle, km/yr.
    pub annual_mileage_km: f64,
    /// Share of this class in the traffic stream.
    pub type_ratio: f64,
    /// Passenger-car equivalent.
    pub pce: f64,
}

impl VehicleClass {
    /// Passenger cars are the PCE reference class.
    pub fn is_car(&self) -> bool {
        self.name.to_ascii_lowercase().trim_end().ends_with("car")
    }

    fn validate(&self) -> Result<()> {
        let n = &self.name;
        if !(self.stock >= 0.0) || !self.stock.is_finite() {
            return Err(Error::validation(format!("class `{n}`: stock must be >= 0, got {}", self.stock)));
        }
        if !(self.annual_mileage_km > 0.0) || !self.annual_mileage_km.is_finite() {
            return Err(Error::validation(format!(
                "class `{n}`: annual mileage must be > 0, got {}",
                self.annual_mileage_km
            )));
        }
        if !(0.0..=1.0).contains(&self.type_ratio) {
            return Err(Error::validation(format!(
                "class `{n}`: type ratio must lie in [0, 1], got {}",
                self.type_ratio
            )));
        }
        if self.is_car() {
            if self.pce != 1.0 {
                return Err(Error::validation(format!(
                    "class `{n}`: the car class must have pce = 1, got {}",
                    self.pce
                )));
            }
        } else if !(self.pce >= 1.0) {
            return Err(Error::validation(format!("class `{n}`: pce must be >= 1, got {}", self.pce)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FleetSpec {
    pub classes: Vec<VehicleClass>,
}

impl FleetSpec {
    pub fn new(classes: Vec<VehicleClass>) -> Result<Self> {
        let fleet = FleetSpec { classes };
        fleet.validate()?;
        Ok(fleet)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::validation("fleet has no vehicle classes"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            c.validate()?;
            if self.classes[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::validation(format!("duplicate vehicle class `{}`", c.name)));
            }
        }
        let sum: f64 = self.classes.iter().map(|c| c.type_ratio).sum();
        if (sum - 1.0).abs() > TYPE_RATIO_SUM_TOL {
            return Err(Error::validation(format!("type ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Same fleet with every class's stock multiplied by `factor`.
    pub fn scaled_stock(&self, factor: f64) -> FleetSpec {
        let mut out = self.clone();
        for c in &mut out.classes {
            c.stock *= factor;
        }
        out
    }

    /// Index of the class with the largest type ratio (first on ties).
    pub fn largest_class(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.classes.iter().enumerate() {
            if c.type_ratio > self.classes[best].type_ratio {
                best = i;
            }
        }
        best
    }

    /// The six-class G30 expressway fleet with its stock, mileage, traffic
    /// composition and passenger-car equivalents.
    pub fn g30() -> FleetSpec {
        let rows: [(&str, Fuel, f64, f64, f64, f64); 6] = [
            ("Medium-small Car", Fuel::Petrol, 328_361.0, 14_332.0, 0.62, 1.0),
            ("Small Truck", Fuel::Diesel, 3_986.0, 30_000.0, 0.065, 1.0),
            ("Medium Truck", Fuel::Diesel, 4_971.0, 35_000.0, 0.06, 1.5),
            ("Large Truck", Fuel::Diesel, 1_865.0, 58_000.0, 0.035, 2.0),
            ("Extra-large Truck", Fuel::Diesel, 119_503.0, 75_000.0, 0.195, 3.0),
            ("Coach", Fuel::Diesel, 1_752.0, 60_000.0, 0.025, 1.5),
        ];
        let classes = rows
            .iter()
            .map(|&(name, fuel, stock, annual_mileage_km, type_ratio, pce)| VehicleClass {
                name: name.into(),
                fuel,
                stock,
                annual_mileage_km,
                type_ratio,
                pce,
            })
            .collect();
        FleetSpec::new(classes).expect("bundled fleet is valid")
    }
}

/// Length of the expressway section the fleet inventory covers, m.
pub const G30_SECTION_LENGTH: f64 = 118_000.0;
/// Length of road inside the simulated domain, m.
pub const G30_MODELED_ROAD_LENGTH: f64 = 300.0;

/// Per-(class, pollutant) emission factors in g/km.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmissionFactorTable {
    entries: BTreeMap<(String, PollutantId), f64>,
}

impl EmissionFactorTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a factor. Each pair may appear only once.
    pub fn insert(&mut self, class: &str, pollutant: PollutantId, g_per_km: f64) -> Result<()> {
        if !(g_per_km >= 0.0) || !g_per_km.is_finite() {
            return Err(Error::validation(format!(
                "emission factor for ({class}, {pollutant}) must be >= 0, got {g_per_km}"
            )));
        }
        let key = (String::from(class), pollutant);
        if self.entries.contains_key(&key) {
            return Err(Error::validation(format!("duplicate emission factor for ({class}, {pollutant})")));
        }
        self.entries.insert(key, g_per_km);
        Ok(())
    }

    pub fn get(&self, class: &str, pollutant: PollutantId) -> Option<f64> {
        self.entries.get(&(String::from(class), pollutant)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn require(&self, class: &str, pollutant: PollutantId) -> Result<f64> {
        self.get(class, pollutant)
            .ok_or_else(|| Error::Config(format!("emission factor table has no entry for ({class}, {pollutant})")))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassEmissions {
    pub class: String,
    /// kg/yr per pollutant.
    pub kg_per_year: PerPollutant<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmissionInventory {
    pub per_class: Vec<ClassEmissions>,
    /// kg/yr per pollutant, summed over classes in fleet order.
    pub totals: PerPollutant<f64>,
    /// Transfer coefficient applied to the output set (1 for lossless transfer).
    pub transfer: f64,
    /// Traffic state the inventory describes.
    pub traffic: TrafficState,
}

/// Tier-2 selector weights `(class factor, CO2 factor, SO2 factor)` for a pollutant.
pub fn route_selectors(p: PollutantId) -> (f64, f64, f64) {
    match p.route() {
        EmissionRoute::ClassFactor => (1.0, 0.0, 0.0),
        EmissionRoute::Co2 => (0.0, 1.0, 0.0),
        EmissionRoute::So2 => (0.0, 0.0, 1.0),
    }
}

/// Annual mass (kg/yr) of one pollutant from one class.
pub fn class_annual_mass(class: &VehicleClass, ef: &EmissionFactorTable, p: PollutantId) -> Result<f64> {
    let (mu1, mu2, mu3) = route_selectors(p);
    let er = if mu1 != 0.0 { ef.require(&class.name, p)? } else { 0.0 };
    let e_co2 = if mu2 != 0.0 { ef.require(&class.name, PollutantId::Co2)? } else { 0.0 };
    let e_so2 = if mu3 != 0.0 { ef.require(&class.name, PollutantId::So2)? } else { 0.0 };
    let vehicle_km = class.stock * class.annual_mileage_km;
    let grams = vehicle_km * (mu1 * er + mu2 * e_co2 + mu3 * e_so2);
    Ok(grams / 1000.0)
}

pub fn compute_inventory(
    fleet: &FleetSpec,
    ef: &EmissionFactorTable,
    traffic: &TrafficState,
) -> Result<EmissionInventory> {
    compute_inventory_with_transfer(fleet, ef, traffic, CouplingCoefficients::default().transfer)
}

/// Inventory with an explicit transfer coefficient scaling every output.
pub fn compute_inventory_with_transfer(
    fleet: &FleetSpec,
    ef: &EmissionFactorTable,
    traffic: &TrafficState,
    transfer: f64,
) -> Result<EmissionInventory> {
    fleet.validate()?;
    traffic.validate()?;
    if !(transfer >= 0.0) || !transfer.is_finite() {
        return Err(Error::validation(format!("transfer coefficient must be finite and >= 0, got {transfer}")));
    }
    let mut per_class = Vec::with_capacity(fleet.classes.len());
    for class in &fleet.classes {
        let mut kg = PerPollutant::splat(0.0);
        for p in PollutantId::ALL {
            kg[p] = transfer * class_annual_mass(class, ef, p)?;
        }
        per_class.push(ClassEmissions { class: class.name.clone(), kg_per_year: kg });
    }
    let totals = PerPollutant::from_fn(|p| per_class.iter().map(|c| c.kg_per_year[p]).sum());
    Ok(EmissionInventory { per_class, totals, transfer, traffic: *traffic })
}

impl EmissionInventory {
    /// Per-pollutant sum of two inventories (classes concatenated).
    pub fn merged(&self, other: &EmissionInventory) -> EmissionInventory {
        let mut per_class = self.per_class.clone();
        per_class.extend(other.per_class.iter().cloned());
        let totals = PerPollutant::from_fn(|p| self.totals[p] + other.totals[p]);
        EmissionInventory { per_class, totals, transfer: self.transfer, traffic: self.traffic }
    }
}

/// Steady emission source on the road surface.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceSpec {
    /// kg/s per pollutant over the modelled road segment.
    pub rate_kg_s: PerPollutant<f64>,
    pub strip: RoadStrip,
    /// Injection speed of released particles, m/s.
    pub injection_speed: f64,
}

pub const DEFAULT_INJECTION_SPEED: f64 = 0.3;

impl SourceSpec {
    pub fn new(rate_kg_s: PerPollutant<f64>, strip: RoadStrip) -> Result<Self> {
        for (p, &r) in rate_kg_s.iter() {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::validation(format!("source rate for {p} must be >= 0, got {r}")));
            }
        }
        Ok(SourceSpec { rate_kg_s, strip, injection_speed: DEFAULT_INJECTION_SPEED })
    }

    pub fn scaled(&self, factor: f64) -> SourceSpec {
        let mut s = self.clone();
        for r in &mut s.rate_kg_s.0 {
            *r *= factor;
        }
        s
    }

    /// kg/yr over the whole network that this source represents.
    pub fn network_kg_per_year(&self, p: PollutantId, modeled_road_length: f64, network_length: f64) -> f64 {
        self.rate_kg_s[p] * SECONDS_PER_YEAR * (network_length / modeled_road_length)
    }
}

/// Spreads network-wide annual totals over the modelled road length and
/// converts kg/yr to kg/s.
pub fn inventory_to_source(
    inv: &EmissionInventory,
    modeled_road_length: f64,
    network_length: f64,
    strip: RoadStrip,
) -> Result<SourceSpec> {
    if !(network_length > 0.0) {
        return Err(Error::validation(format!("network length must be > 0, got {network_length}")));
    }
    if !(modeled_road_length > 0.0) {
        return Err(Error::validation(format!("modelled road length must be > 0, got {modeled_road_length}")));
    }
    if network_length < modeled_road_length {
        return Err(Error::validation(format!(
            "network length {network_length} is shorter than the modelled road {modeled_road_length}"
        )));
    }
    let share = modeled_road_length / network_length;
    SourceSpec::new(inv.totals.map(|_, &kg| kg * share / SECONDS_PER_YEAR), strip)
}

/// Weighted traffic pollutant output: class-factor pollutants weighted by
/// their control factors, plus alpha x CO2 and beta x SO2.
pub fn aggregate_q(inv: &EmissionInventory, coeffs: &CouplingCoefficients) -> Result<f64> {
    coeffs.validate()?;
    let mut q = 0.0;
    for p in PollutantId::ALL {
        if p.route() == EmissionRoute::ClassFactor {
            q += coeffs.control[p] * inv.totals[p];
        }
    }
    q += coeffs.alpha * inv.totals[PollutantId::Co2];
    q += coeffs.beta * inv.totals[PollutantId::So2];
    Ok(q)
}
