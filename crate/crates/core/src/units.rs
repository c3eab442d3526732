//! Concentration units accepted at the I/O boundary. Internally every
//! concentration is kg/m^3.

use core::fmt;
use core::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ConcentrationUnit {
    #[cfg_attr(feature = "serde", serde(rename = "kg/m3"))]
    KgPerM3,
    #[cfg_attr(feature = "serde", serde(rename = "mg/m3"))]
    MgPerM3,
    #[cfg_attr(feature = "serde", serde(rename = "ug/m3"))]
    UgPerM3,
}

impl ConcentrationUnit {
    /// Multiplier taking a value in this unit to kg/m^3.
    pub const fn to_kg_per_m3(self) -> f64 {
        match self {
            ConcentrationUnit::KgPerM3 => 1.0,
            ConcentrationUnit::MgPerM3 => 1e-6,
            ConcentrationUnit::UgPerM3 => 1e-9,
        }
    }

    pub fn to_internal(self, value: f64) -> f64 {
        value * self.to_kg_per_m3()
    }

    pub fn from_internal(self, kg_per_m3: f64) -> f64 {
        kg_per_m3 / self.to_kg_per_m3()
    }

    pub const fn label(self) -> &'static str {
        match self {
            ConcentrationUnit::KgPerM3 => "kg/m3",
            ConcentrationUnit::MgPerM3 => "mg/m3",
            ConcentrationUnit::UgPerM3 => "ug/m3",
        }
    }
}

impl fmt::Display for ConcentrationUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ConcentrationUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "kg/m3" | "kg/m^3" | "kg/m³" => Ok(ConcentrationUnit::KgPerM3),
            "mg/m3" | "mg/m^3" | "mg/m³" => Ok(ConcentrationUnit::MgPerM3),
            "ug/m3" | "ug/m^3" | "µg/m3" | "µg/m³" | "μg/m3" | "μg/m³" => Ok(ConcentrationUnit::UgPerM3),
            other => Err(Error::validation(alloc::format!(
                "unknown concentration unit `{other}` (expected kg/m3, mg/m3 or ug/m3)"
            ))),
        }
    }
}

/// kg/s to kg/yr over a 365-day year.
pub fn kg_per_year(kg_per_s: f64) -> f64 {
    kg_per_s * crate::SECONDS_PER_YEAR
}

pub fn kg_per_second(kg_per_yr: f64) -> f64 {
    kg_per_yr / crate::SECONDS_PER_YEAR
}

/// Annual traffic volume carrying `kg_per_yr`, given the mass emitted per
/// vehicle of annual volume (inventory total / reference volume).
pub fn vehicles_per_year(kg_per_yr: f64, kg_per_vehicle: f64) -> f64 {
    kg_per_yr / kg_per_vehicle
}

pub fn kg_per_year_from_vehicles(vehicles: f64, kg_per_vehicle: f64) -> f64 {
    vehicles * kg_per_vehicle
}
