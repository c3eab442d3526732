//! The six regulated traffic pollutants and a fixed-size map keyed by them.

use core::fmt;
use core::ops::{Index, IndexMut};
use core::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PollutantId {
    #[cfg_attr(feature = "serde", serde(rename = "CO"))]
    Co,
    #[cfg_attr(feature = "serde", serde(rename = "CO2"))]
    Co2,
    #[cfg_attr(feature = "serde", serde(rename = "NO2"))]
    No2,
    #[cfg_attr(feature = "serde", serde(rename = "SO2"))]
    So2,
    #[cfg_attr(feature = "serde", serde(rename = "PM2.5"))]
    Pm25,
    #[cfg_attr(feature = "serde", serde(rename = "PM10"))]
    Pm10,
}

/// How a pollutant's annual mass is routed through the Tier-2 activity sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionRoute {
    /// Class emission factor (CO, NO2, PM2.5, PM10).
    ClassFactor,
    /// Fuel-bound CO2 factor.
    Co2,
    /// Fuel-bound SO2 factor.
    So2,
}

impl PollutantId {
    /// Fixed ordering, also used to break ties deterministically.
    pub const ALL: [PollutantId; 6] =
        [PollutantId::Co, PollutantId::Co2, PollutantId::No2, PollutantId::So2, PollutantId::Pm25, PollutantId::Pm10];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            PollutantId::Co => "CO",
            PollutantId::Co2 => "CO2",
            PollutantId::No2 => "NO2",
            PollutantId::So2 => "SO2",
            PollutantId::Pm25 => "PM2.5",
            PollutantId::Pm10 => "PM10",
        }
    }

    pub const fn is_particulate(self) -> bool {
        matches!(self, PollutantId::Pm25 | PollutantId::Pm10)
    }

    /// Injected particle diameter in metres.
    ///
    /// PM10 is 1.0e-6 m as configured for the G30 study, even though the
    /// aerodynamic cut-off would suggest 1.0e-5 m. Override through
    /// [`Pollutant::with_diameter`] when the conventional size is wanted.
    pub const fn default_diameter(self) -> f64 {
        match self {
            PollutantId::Co => 3.76e-10,
            PollutantId::Co2 => 3.3e-10,
            PollutantId::No2 => 10.0e-10,
            PollutantId::So2 => 2.46e-10,
            PollutantId::Pm25 => 2.5e-6,
            PollutantId::Pm10 => 1.0e-6,
        }
    }

    pub const fn route(self) -> EmissionRoute {
        match self {
            PollutantId::Co2 => EmissionRoute::Co2,
            PollutantId::So2 => EmissionRoute::So2,
            _ => EmissionRoute::ClassFactor,
        }
    }
}

impl fmt::Display for PollutantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PollutantId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut buf = [0u8; 8];
        let mut n = 0;
        for b in s.trim().bytes() {
            if matches!(b, b'.' | b'_' | b' ' | b'-') {
                continue;
            }
            if n == buf.len() {
                return Err(Error::validation(alloc::format!("unknown pollutant `{s}`")));
            }
            buf[n] = b.to_ascii_uppercase();
            n += 1;
        }
        match &buf[..n] {
            b"CO" => Ok(PollutantId::Co),
            b"CO2" => Ok(PollutantId::Co2),
            b"NO2" => Ok(PollutantId::No2),
            b"SO2" => Ok(PollutantId::So2),
            b"PM25" => Ok(PollutantId::Pm25),
            b"PM10" => Ok(PollutantId::Pm10),
            _ => Err(Error::validation(alloc::format!("unknown pollutant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pollutant {
    pub id: PollutantId,
    /// Metres.
    pub particle_diameter: f64,
    pub is_particulate: bool,
}

impl Pollutant {
    pub const fn new(id: PollutantId) -> Self {
        Pollutant { id, particle_diameter: id.default_diameter(), is_particulate: id.is_particulate() }
    }

    pub fn with_diameter(mut self, diameter: f64) -> crate::Result<Self> {
        if !(diameter > 0.0) || !diameter.is_finite() {
            return Err(Error::validation(alloc::format!(
                "{} particle diameter must be positive, got {diameter}",
                self.id
            )));
        }
        self.particle_diameter = diameter;
        Ok(self)
    }
}

impl From<PollutantId> for Pollutant {
    fn from(id: PollutantId) -> Self {
        Pollutant::new(id)
    }
}

/// Dense map from every pollutant to a value, iterated in [`PollutantId::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerPollutant<T>(pub [T; 6]);

impl<T> PerPollutant<T> {
    pub fn from_fn(f: impl FnMut(PollutantId) -> T) -> Self {
        PerPollutant(PollutantId::ALL.map(f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (PollutantId, &T)> {
        PollutantId::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(PollutantId, &T) -> U) -> PerPollutant<U> {
        PerPollutant::from_fn(|p| f(p, &self[p]))
    }
}

impl<T: Copy> PerPollutant<T> {
    pub const fn splat(v: T) -> Self {
        PerPollutant([v; 6])
    }
}

impl<T> Index<PollutantId> for PerPollutant<T> {
    type Output = T;

    fn index(&self, p: PollutantId) -> &T {
        &self.0[p.index()]
    }
}

impl<T> IndexMut<PollutantId> for PerPollutant<T> {
    fn index_mut(&mut self, p: PollutantId) -> &mut T {
        &mut self.0[p.index()]
    }
}
