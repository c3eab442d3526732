//! Steady incompressible RANS with the standard k-epsilon closure.
//!
//! Collocated finite volumes on a [`StructuredMesh`], SIMPLE pressure-velocity
//! coupling with Rhie-Chow face fluxes, first-order upwind advection and
//! equilibrium log-law wall functions on a rough ground.

mod simple;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::mesh::StructuredMesh;

pub use simple::solve_flow;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FluidProperties {
    /// kg/m^3
    pub density: f64,
    /// Molecular dynamic viscosity, Pa s.
    pub viscosity: f64,
    /// m/s^2. Absorbed into the modified pressure for the constant-density
    /// flow; only particles feel it.
    pub gravity: [f64; 3],
    /// Diagnostic only, degrees Celsius.
    pub temperature_c: f64,
}

impl Default for FluidProperties {
    fn default() -> Self {
        FluidProperties { density: 1.225, viscosity: 1.7894e-5, gravity: [0.0, 0.0, -9.8], temperature_c: 32.0 }
    }
}

impl FluidProperties {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) || !(self.viscosity > 0.0) {
            return Err(Error::validation(alloc::format!(
                "density and viscosity must be positive, got {} and {}",
                self.density,
                self.viscosity
            )));
        }
        Ok(())
    }

    pub fn kinematic_viscosity(&self) -> f64 {
        self.viscosity / self.density
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TurbulenceConstants {
    pub c_mu: f64,
    pub c1_eps: f64,
    pub c2_eps: f64,
    pub sigma_k: f64,
    pub sigma_eps: f64,
    /// von Karman constant.
    pub kappa: f64,
}

impl Default for TurbulenceConstants {
    fn default() -> Self {
        TurbulenceConstants { c_mu: 0.09, c1_eps: 1.44, c2_eps: 1.92, sigma_k: 1.0, sigma_eps: 1.3, kappa: 0.41 }
    }
}

impl TurbulenceConstants {
    pub fn validate(&self) -> Result<()> {
        let v = [self.c_mu, self.c1_eps, self.c2_eps, self.sigma_k, self.sigma_eps, self.kappa];
        if v.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::validation("turbulence constants must all be positive"));
        }
        Ok(())
    }
}

/// Neutral atmospheric surface layer entering through the west face.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogLawInlet {
    /// Wind speed at `z_ref`, m/s.
    pub u_ref: f64,
    pub z_ref: f64,
    /// Aerodynamic roughness length, m.
    pub z0: f64,
    /// Friction velocity consistent with `u_ref` at `z_ref`.
    pub u_star: f64,
}

impl LogLawInlet {
    pub fn new(u_ref: f64, z_ref: f64, z0: f64, kappa: f64) -> Result<Self> {
        if !(z0 > 0.0) || !(z_ref > 0.0) || !(u_ref >= 0.0) {
            return Err(Error::validation(alloc::format!(
                "log-law inlet needs z0 > 0, z_ref > 0, u_ref >= 0 (got {z0}, {z_ref}, {u_ref})"
            )));
        }
        let u_star = kappa * u_ref / math::ln((z_ref + z0) / z0);
        Ok(LogLawInlet { u_ref, z_ref, z0, u_star })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InletSpec {
    LogLaw(LogLawInlet),
    /// Plug flow with fixed turbulence (used for verification cases).
    Uniform {
        speed: f64,
        k: f64,
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum GroundBoundary {
    /// No-slip wall bridged by rough-wall log-law functions.
    WallFunction,
    /// Resolved no-slip wall (laminar verification runs).
    NoSlip,
    Symmetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum OpenBoundary {
    Symmetry,
    PressureOutlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TopBoundary {
    Symmetry,
    PressureOutlet,
    NoSlip,
    /// Velocity, k and epsilon held at the inlet profile's top value; carries
    /// the surface-layer shear stress into the domain.
    InletProfile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundarySet {
    pub inlet: InletSpec,
    pub ground: GroundBoundary,
    pub top: TopBoundary,
    pub lateral: OpenBoundary,
}

/// Reference wind speed at the inlet, m/s.
pub const G30_WIND_SPEED: f64 = 3.4;
/// Height of the reference wind speed, m.
pub const G30_REFERENCE_HEIGHT: f64 = 10.0;
/// Roughness length of open flat terrain, m.
pub const G30_ROUGHNESS_LENGTH: f64 = 0.1;

impl BoundarySet {
    /// Log-law atmospheric inflow over a rough ground with lateral symmetry.
    pub fn atmospheric(u_ref: f64, z_ref: f64, z0: f64, tc: &TurbulenceConstants) -> Result<Self> {
        Ok(BoundarySet {
            inlet: InletSpec::LogLaw(LogLawInlet::new(u_ref, z_ref, z0, tc.kappa)?),
            ground: GroundBoundary::WallFunction,
            top: TopBoundary::InletProfile,
            lateral: OpenBoundary::Symmetry,
        })
    }

    pub fn g30(tc: &TurbulenceConstants) -> Self {
        Self::atmospheric(G30_WIND_SPEED, G30_REFERENCE_HEIGHT, G30_ROUGHNESS_LENGTH, tc)
            .expect("G30 inlet parameters are valid")
    }

    pub fn roughness_length(&self) -> f64 {
        match self.inlet {
            InletSpec::LogLaw(l) => l.z0,
            InletSpec::Uniform { .. } => G30_ROUGHNESS_LENGTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.inlet {
            InletSpec::LogLaw(l) => {
                if !(l.z0 > 0.0) {
                    return Err(Error::validation("roughness length must be > 0"));
                }
            }
            InletSpec::Uniform { speed, k, epsilon } => {
                if !speed.is_finite() || !(k >= 0.0) || !(epsilon >= 0.0) {
                    return Err(Error::validation("uniform inlet needs finite speed and k, epsilon >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// Inlet wind speed, k and epsilon at height `z`.
pub fn inlet_profile(z: f64, inlet: &LogLawInlet, tc: &TurbulenceConstants) -> (f64, f64, f64) {
    let z = z.max(0.0);
    let us = inlet.u_star;
    let u = us / tc.kappa * math::ln((z + inlet.z0) / inlet.z0);
    let k = us * us / math::sqrt(tc.c_mu);
    let eps = us * us * us / (tc.kappa * (z + inlet.z0));
    (u, k, eps)
}

/// Inflow `(u, k, epsilon)` at height `z` for any inlet kind.
pub fn inflow_at(z: f64, b: &BoundarySet, tc: &TurbulenceConstants) -> (f64, f64, f64) {
    match b.inlet {
        InletSpec::LogLaw(l) => inlet_profile(z, &l, tc),
        InletSpec::Uniform { speed, k, epsilon } => (speed, k, epsilon),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TurbulenceModel {
    StandardKEpsilon,
    /// Fixed molecular viscosity, no transport of k or epsilon.
    Laminar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Relaxation {
    pub velocity: f64,
    pub pressure: f64,
    pub k: f64,
    pub epsilon: f64,
}

impl Default for Relaxation {
    fn default() -> Self {
        Relaxation { velocity: 0.7, pressure: 0.3, k: 0.8, epsilon: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub relaxation: Relaxation,
    /// Convergence threshold applied to every scaled residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub turbulence: TurbulenceModel,
    /// Line Gauss-Seidel sweeps per outer iteration for transport equations.
    pub sweeps: usize,
    /// Relative residual reduction demanded of each pressure-correction solve.
    pub pressure_tolerance: f64,
    pub pressure_max_iterations: usize,
    pub k_floor: f64,
    pub epsilon_floor: f64,
    /// Reductions run in a fixed order. The solver is sequential, so this is
    /// always honoured; the flag is kept for the run record.
    pub deterministic_reductions: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            relaxation: Relaxation::default(),
            tolerance: 1e-5,
            max_iterations: 4000,
            turbulence: TurbulenceModel::StandardKEpsilon,
            sweeps: 2,
            pressure_tolerance: 1e-2,
            pressure_max_iterations: 400,
            k_floor: 1e-10,
            epsilon_floor: 1e-10,
            deterministic_reductions: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let r = self.relaxation;
        for (name, v) in [("velocity", r.velocity), ("pressure", r.pressure), ("k", r.k), ("epsilon", r.epsilon)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::validation(alloc::format!("{name} relaxation must lie in (0, 1], got {v}")));
            }
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 || self.sweeps == 0 {
            return Err(Error::validation("tolerance, iteration cap and sweep count must be positive"));
        }
        if !(self.k_floor > 0.0) || !(self.epsilon_floor > 0.0) {
            return Err(Error::validation("k and epsilon floors must be positive"));
        }
        Ok(())
    }
}

/// Scaled residuals of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Residuals {
    pub iteration: usize,
    pub continuity: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub k: f64,
    pub epsilon: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        [self.continuity, self.u, self.v, self.w, self.k, self.epsilon].into_iter().fold(0.0, f64::max)
    }
}

/// Converged (or last) flow field. Face mass fluxes are stored per axis with
/// `n_axis + 1` faces along that axis, positive in the +axis direction.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub dims: [usize; 3],
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub p: Vec<f64>,
    pub k: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub mu_t: Vec<f64>,
    /// kg/s through each face.
    pub mass_flux: [Vec<f64>; 3],
    pub density: f64,
    pub residuals: Vec<Residuals>,
    pub converged: bool,
    pub iterations: usize,
    /// Number of times k or epsilon was lifted to its floor.
    pub clamp_count: usize,
}

/// Index of face `(i, j, k)` normal to `axis` (the face index runs to `n` along `axis`).
#[inline]
pub fn face_index(dims: [usize; 3], axis: usize, i: usize, j: usize, k: usize) -> usize {
    let [nx, ny, _] = dims;
    match axis {
        0 => i + (nx + 1) * (j + ny * k),
        1 => i + nx * (j + (ny + 1) * k),
        _ => i + nx * (j + ny * k),
    }
}

pub fn face_count(dims: [usize; 3], axis: usize) -> usize {
    let mut d = dims;
    d[axis] += 1;
    d[0] * d[1] * d[2]
}

impl FlowState {
    /// Prescribed uniform flow with a given eddy viscosity; face fluxes are
    /// exactly divergence free. Used for analytic dispersion checks.
    pub fn uniform(mesh: &StructuredMesh, velocity: [f64; 3], mu_t: f64, density: f64) -> Self {
        let n = mesh.len();
        let dims = mesh.dims();
        let mut mass_flux = [0, 1, 2].map(|a| alloc::vec![0.0; face_count(dims, a)]);
        for (a, flux) in mass_flux.iter_mut().enumerate() {
            let mut fd = dims;
            fd[a] += 1;
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let (ci, cj, ck) = (i.min(dims[0] - 1), j.min(dims[1] - 1), k.min(dims[2] - 1));
                        flux[face_index(dims, a, i, j, k)] = density * velocity[a] * mesh.face_area(a, ci, cj, ck);
                    }
                }
            }
        }
        FlowState {
            dims,
            u: alloc::vec![velocity[0]; n],
            v: alloc::vec![velocity[1]; n],
            w: alloc::vec![velocity[2]; n],
            p: alloc::vec![0.0; n],
            k: alloc::vec![1e-10; n],
            epsilon: alloc::vec![1e-10; n],
            mu_t: alloc::vec![mu_t; n],
            mass_flux,
            density,
            residuals: Vec::new(),
            converged: true,
            iterations: 0,
            clamp_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn speed(&self) -> Vec<f64> {
        (0..self.len())
            .map(|c| math::sqrt(self.u[c] * self.u[c] + self.v[c] * self.v[c] + self.w[c] * self.w[c]))
            .collect()
    }

    pub fn final_residuals(&self) -> Residuals {
        self.residuals.last().copied().unwrap_or_default()
    }

    /// Net mass outflow of each cell, kg/s.
    pub fn mass_imbalance(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims;
        let mut out = alloc::vec![0.0; nx * ny * nz];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let f = &self.mass_flux;
                    let d = self.dims;
                    out[i + nx * (j + ny * k)] = f[0][face_index(d, 0, i + 1, j, k)] - f[0][face_index(d, 0, i, j, k)]
                        + f[1][face_index(d, 1, i, j + 1, k)]
                        - f[1][face_index(d, 1, i, j, k)]
                        + f[2][face_index(d, 2, i, j, k + 1)]
                        - f[2][face_index(d, 2, i, j, k)];
                }
            }
        }
        out
    }

    /// Total inflow and outflow through the domain boundary, kg/s.
    pub fn boundary_flows(&self) -> (f64, f64) {
        let [nx, ny, nz] = self.dims;
        let d = self.dims;
        let (mut inflow, mut outflow) = (0.0, 0.0);
        let mut add = |f: f64, outward_positive: bool| {
            let out = if outward_positive { f } else { -f };
            if out > 0.0 {
                outflow += out;
            } else {
                inflow -= out;
            }
        };
        for k in 0..nz {
            for j in 0..ny {
                add(self.mass_flux[0][face_index(d, 0, 0, j, k)], false);
                add(self.mass_flux[0][face_index(d, 0, nx, j, k)], true);
            }
            for i in 0..nx {
                add(self.mass_flux[1][face_index(d, 1, i, 0, k)], false);
                add(self.mass_flux[1][face_index(d, 1, i, ny, k)], true);
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                add(self.mass_flux[2][face_index(d, 2, i, j, 0)], false);
                add(self.mass_flux[2][face_index(d, 2, i, j, nz)], true);
            }
        }
        (inflow, outflow)
    }
}

/// `mu_t = rho C_mu k^2 / epsilon`, cell by cell.
pub fn eddy_viscosity(k: &[f64], epsilon: &[f64], fluid: &FluidProperties, tc: &TurbulenceConstants) -> Vec<f64> {
    k.iter().zip(epsilon).map(|(&k, &e)| fluid.density * tc.c_mu * k * k / e).collect()
}

/// Recomputes `state.mu_t` from its k and epsilon fields.
pub fn update_eddy_viscosity(state: &mut FlowState, fluid: &FluidProperties, tc: &TurbulenceConstants) {
    state.mu_t = eddy_viscosity(&state.k, &state.epsilon, fluid, tc);
}
