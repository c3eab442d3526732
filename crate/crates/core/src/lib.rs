//! Numerical core for highway traffic capacity under roadside air-quality
//! ceilings.
//!
//! The pipeline runs in three stages, each a module here:
//!
//! 1. [`fleet`] turns a vehicle fleet and per-class emission factors into an
//!    annual emission inventory and a steady road-surface source.
//! 2. [`mesh`], [`rans`] and [`dispersion`] build a graded Cartesian grid over
//!    the highway corridor, solve steady incompressible RANS with the standard
//!    k-epsilon closure (SIMPLE coupling, first-order upwind) and transport the
//!    pollutants through the converged wind field.
//! 3. [`capacity`] inverts roadside concentration ceilings into the maximum
//!    annual traffic volume per pollutant, split by vehicle class.
//!
//! The crate is `no_std` with `alloc`; all file formats and the command-line
//! driver live in the companion `roadcap` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod calibration;
pub mod capacity;
pub mod dispersion;
pub mod error;
pub mod fleet;
pub mod independence;
pub mod linsolve;
pub mod math;
pub mod mesh;
pub mod pollutant;
pub mod rans;
pub mod units;

pub use error::{Error, Result};
pub use pollutant::{PerPollutant, Pollutant, PollutantId};

/// Seconds in a 365-day year. The capacity unit chain (kg/s to kg/yr to
/// vehicles/yr) runs through this factor; it is the 31.536 x 10^6 conversion.
pub const SECONDS_PER_YEAR: f64 = 31_536_000.0;
