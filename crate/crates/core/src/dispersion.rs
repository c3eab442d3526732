//! Pollutant transport through a converged wind field.
//!
//! The Eulerian solver handles every species on the capacity path. The
//! Lagrangian tracker follows individual particles with drag, gravity and a
//! discrete random walk and estimates concentration from residence time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::capacity::{BackgroundPolicy, ConstraintSet};
use crate::error::{Error, Result};
use crate::fleet::SourceSpec;
use crate::linsolve::{Stencil, T};
use crate::math;
use crate::mesh::StructuredMesh;
use crate::pollutant::{PerPollutant, Pollutant, PollutantId};
use crate::rans::{face_index, FlowState, FluidProperties, TurbulenceConstants};

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesField {
    pub pollutant: Pollutant,
    /// kg/m^3 per cell.
    pub concentration: Vec<f64>,
    /// kg/m^3.
    pub background: f64,
    /// Source rate used, kg/s.
    pub source_rate: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DispersionConfig {
    pub schmidt_turbulent: f64,
    pub schmidt_molecular: f64,
    /// kg/m^3, used for settling.
    pub particle_density: f64,
    /// Apply gravitational settling to particulates.
    pub settling: bool,
    /// Threshold on the residual scaled by the source rate.
    pub tolerance: f64,
    pub max_iterations: usize,
}

pub const DEFAULT_SCHMIDT_TURBULENT: f64 = 0.7;
pub const DEFAULT_PARTICLE_DENSITY: f64 = 1000.0;

impl Default for DispersionConfig {
    fn default() -> Self {
        DispersionConfig {
            schmidt_turbulent: DEFAULT_SCHMIDT_TURBULENT,
            schmidt_molecular: 0.7,
            particle_density: DEFAULT_PARTICLE_DENSITY,
            settling: true,
            tolerance: 1e-7,
            max_iterations: 20_000,
        }
    }
}

impl DispersionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.schmidt_turbulent > 0.0) || !(self.schmidt_molecular > 0.0) {
            return Err(Error::validation("Schmidt numbers must be > 0"));
        }
        if !(self.particle_density > 0.0) {
            return Err(Error::validation("particle density must be > 0"));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::validation("scalar tolerance and iteration cap must be positive"));
        }
        Ok(())
    }
}

/// Stokes settling velocity and the particle Reynolds number it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settling {
    /// m/s, positive downwards.
    pub velocity: f64,
    pub reynolds: f64,
    /// False when the Reynolds number exceeds [`STOKES_REYNOLDS_LIMIT`].
    pub stokes_valid: bool,
}

pub const STOKES_REYNOLDS_LIMIT: f64 = 0.5;

/// `w_s = (rho_p - rho) g d^2 / (18 mu)`.
pub fn settling_velocity(p: &Pollutant, particle_density: f64, fluid: &FluidProperties) -> Result<Settling> {
    if !(particle_density > 0.0) {
        return Err(Error::validation(format!("particle density must be > 0, got {particle_density}")));
    }
    let g = math::sqrt(fluid.gravity.iter().map(|v| v * v).sum());
    let d = p.particle_diameter;
    let velocity = (particle_density - fluid.density) * g * d * d / (18.0 * fluid.viscosity);
    let reynolds = fluid.density * velocity.abs() * d / fluid.viscosity;
    Ok(Settling { velocity, reynolds, stokes_valid: reynolds <= STOKES_REYNOLDS_LIMIT })
}

fn check_dims(flow: &FlowState, mesh: &StructuredMesh) -> Result<()> {
    if flow.dims != mesh.dims() {
        return Err(Error::validation(format!("flow field {:?} does not match mesh {:?}", flow.dims, mesh.dims())));
    }
    Ok(())
}

/// Assembles the steady transport operator for one species with a unit
/// source distribution scaled by `rate`.
fn assemble_scalar(flow: &FlowState, mesh: &StructuredMesh, gamma: &[f64], settling: f64, rate: f64) -> Stencil {
    let dims = mesh.dims();
    let rho = flow.density;
    let mut m = Stencil::new(dims);
    let mut c = 0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let ijk = [i, j, k];
                let mut ap = 0.0;
                let mut anb = [0.0; 6];
                for axis in 0..3 {
                    let h = &mesh.spacing[axis];
                    let idx = ijk[axis];
                    let area = mesh.face_area(axis, i, j, k);
                    let stride = [1, dims[0], dims[0] * dims[1]][axis];
                    for side in 0..2 {
                        let mut f = ijk;
                        f[axis] += side;
                        let flux = flow.mass_flux[axis][face_index(dims, axis, f[0], f[1], f[2])] / rho;
                        let out = if side == 1 { flux } else { -flux };
                        let nb = if side == 1 { (idx + 1 < dims[axis]).then_some(idx + 1) } else { idx.checked_sub(1) };
                        match nb {
                            Some(n) => {
                                let cn = if side == 1 { c + stride } else { c - stride };
                                let wp = h[n] / (h[idx] + h[n]);
                                let g = wp * gamma[c] + (1.0 - wp) * gamma[cn];
                                let d = g * area / (0.5 * (h[idx] + h[n]));
                                anb[2 * axis + side] = d + (-out).max(0.0);
                                ap += d + out.max(0.0);
                            }
                            // Outflow leaves with the cell value; inflow is clean air.
                            None => ap += out.max(0.0),
                        }
                    }
                }
                if settling != 0.0 {
                    let area = mesh.face_area(2, i, j, k);
                    if k + 1 < dims[2] {
                        anb[T] += settling * area;
                    }
                    if k > 0 {
                        ap += settling * area;
                    }
                }
                m.ap[c] = ap;
                m.anb[c] = anb;
                c += 1;
            }
        }
    }
    for &(cell, w) in &mesh.road_cells {
        m.b[cell] += rate * w;
    }
    m
}

/// Steady advection-diffusion of one pollutant released from the road strip.
pub fn solve_scalar(
    flow: &FlowState,
    mesh: &StructuredMesh,
    source: &SourceSpec,
    p: Pollutant,
    fluid: &FluidProperties,
    cfg: &DispersionConfig,
) -> Result<SpeciesField> {
    check_dims(flow, mesh)?;
    cfg.validate()?;
    let rate = source.rate_kg_s[p.id];
    let rho = flow.density;
    let settling = if p.is_particulate && cfg.settling {
        settling_velocity(&p, cfg.particle_density, fluid)?.velocity.max(0.0)
    } else {
        0.0
    };
    let nu_m = fluid.viscosity / (rho * cfg.schmidt_molecular);
    let gamma: Vec<f64> = flow.mu_t.iter().map(|m| nu_m + m / (rho * cfg.schmidt_turbulent)).collect();
    let m = assemble_scalar(flow, mesh, &gamma, settling, rate);
    let mut conc = vec![0.0; mesh.len()];
    let mut field = SpeciesField {
        pollutant: p,
        concentration: Vec::new(),
        background: 0.0,
        source_rate: rate,
        converged: false,
        iterations: 0,
        residual: 0.0,
    };
    let scale = if rate > 0.0 { rate } else { 1.0 };
    for it in 0..=cfg.max_iterations {
        let r = m.residual_l1(&conc) / scale;
        field.residual = r;
        field.iterations = it;
        if r < cfg.tolerance {
            field.converged = true;
            break;
        }
        if it == cfg.max_iterations {
            break;
        }
        m.line_sweeps(&mut conc, 1);
    }
    if let Some(c) = conc.iter().position(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Internal(format!("concentration {} in cell {c} after transport", conc[c])));
    }
    field.concentration = conc;
    Ok(field)
}

/// Net mass leaving the domain boundaries, kg/s.
pub fn boundary_outflow(field: &SpeciesField, flow: &FlowState, mesh: &StructuredMesh) -> f64 {
    let dims = mesh.dims();
    let rho = flow.density;
    let c = &field.concentration;
    let mut out = 0.0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let cell = mesh.idx(i, j, k);
                let ijk = [i, j, k];
                for axis in 0..3 {
                    for side in 0..2 {
                        let on_boundary = if side == 0 { ijk[axis] == 0 } else { ijk[axis] + 1 == dims[axis] };
                        if !on_boundary {
                            continue;
                        }
                        let mut f = ijk;
                        f[axis] += side;
                        let flux = flow.mass_flux[axis][face_index(dims, axis, f[0], f[1], f[2])] / rho;
                        let o = if side == 1 { flux } else { -flux };
                        if o > 0.0 {
                            out += o * c[cell];
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DpmConfig {
    pub max_steps: usize,
    /// Integration steps per cell crossing.
    pub step_factor: f64,
    /// Flow-to-particle update interval in solver iterations. Recorded only:
    /// coupling is one-way, so particles never feed back into the flow.
    pub update_interval: usize,
    pub particles: usize,
    /// kg/m^3.
    pub particle_density: f64,
    pub random_walk: bool,
    pub gravity: bool,
    pub seed: u64,
    /// Upper bound on a single step, s.
    pub max_dt: f64,
    /// Used to match the random-walk diffusivity to the Eulerian one.
    pub schmidt_turbulent: f64,
    /// Number of leading particles whose trajectories are kept.
    pub record_trajectories: usize,
}

impl Default for DpmConfig {
    fn default() -> Self {
        DpmConfig {
            max_steps: 50_000,
            step_factor: 5.0,
            update_interval: 10,
            particles: 20_000,
            particle_density: DEFAULT_PARTICLE_DENSITY,
            random_walk: true,
            gravity: true,
            seed: 0,
            max_dt: 1.0,
            schmidt_turbulent: DEFAULT_SCHMIDT_TURBULENT,
            record_trajectories: 0,
        }
    }
}

impl DpmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.particles == 0 {
            return Err(Error::validation("particle count and step cap must be positive"));
        }
        if !(self.step_factor > 0.0) || !(self.max_dt > 0.0) || !(self.particle_density > 0.0) {
            return Err(Error::validation("step factor, max dt and particle density must be > 0"));
        }
        if !(self.schmidt_turbulent > 0.0) {
            return Err(Error::validation("turbulent Schmidt number must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub particle_id: u64,
    pub step: usize,
    pub position: [f64; 3],
    pub time: f64,
}

/// Partial results for one chunk of particles.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmTally {
    /// Accumulated residence time per cell, s.
    pub residence: Vec<f64>,
    pub particles: usize,
    pub escaped: usize,
    pub stuck: usize,
    pub steps: u64,
    pub final_velocity_sum: [f64; 3],
    pub trajectories: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpmResult {
    pub field: SpeciesField,
    pub particles: usize,
    pub escaped: usize,
    /// Particles still inside the domain when the step cap was reached.
    pub stuck: usize,
    pub steps: u64,
    pub mean_final_velocity: [f64; 3],
    pub trajectories: Vec<TrajectoryPoint>,
}

/// Particles per chunk. Tallies are merged in chunk order so results do not
/// depend on how chunks are scheduled.
pub const DPM_CHUNK: usize = 2048;

pub struct ParticleTracker<'a> {
    flow: &'a FlowState,
    mesh: &'a StructuredMesh,
    pollutant: Pollutant,
    fluid: FluidProperties,
    cfg: DpmConfig,
    rate: f64,
    c_mu: f64,
    strip: crate::mesh::RoadStrip,
    injection_speed: f64,
    /// Random-walk diffusivity `sigma^2 T_L` at cell centres. Its gradient is
    /// the drift that keeps a well-mixed tracer well mixed where turbulence is
    /// inhomogeneous.
    kp: Vec<f64>,
}

/// Interpolation bracket along one axis: lower and upper centre index, the
/// weight of the upper one and the inverse centre spacing.
#[derive(Clone, Copy)]
struct Bracket {
    lo: usize,
    hi: usize,
    w: f64,
    inv: f64,
}

fn bracket(centers: &[f64], x: f64, extrapolate: bool) -> Bracket {
    let n = centers.len();
    if n < 2 {
        return Bracket { lo: 0, hi: 0, w: 0.0, inv: 0.0 };
    }
    let lo = centers.partition_point(|&c| c <= x).saturating_sub(1).min(n - 2);
    let inv = 1.0 / (centers[lo + 1] - centers[lo]);
    let mut w = (x - centers[lo]) * inv;
    if !extrapolate {
        w = w.clamp(0.0, 1.0);
    }
    Bracket { lo, hi: lo + 1, w, inv }
}

/// Trilinear value and gradient of a cell-centred field.
fn trilinear(dims: [usize; 3], f: &[f64], b: &[Bracket; 3]) -> (f64, [f64; 3]) {
    let mut v = 0.0;
    let mut g = [0.0; 3];
    for corner in 0..8 {
        let s = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let idx = [0, 1, 2].map(|a| if s[a] == 1 { b[a].hi } else { b[a].lo });
        let wt = [0, 1, 2].map(|a| if s[a] == 1 { b[a].w } else { 1.0 - b[a].w });
        let dw = [0, 1, 2].map(|a| if s[a] == 1 { b[a].inv } else { -b[a].inv });
        let fv = f[idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])];
        v += wt[0] * wt[1] * wt[2] * fv;
        g[0] += dw[0] * wt[1] * wt[2] * fv;
        g[1] += wt[0] * dw[1] * wt[2] * fv;
        g[2] += wt[0] * wt[1] * dw[2] * fv;
    }
    (v, g)
}

#[inline]
fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl<'a> ParticleTracker<'a> {
    pub fn new(
        flow: &'a FlowState,
        mesh: &'a StructuredMesh,
        source: &SourceSpec,
        pollutant: Pollutant,
        fluid: &FluidProperties,
        tc: &TurbulenceConstants,
        cfg: &DpmConfig,
    ) -> Result<Self> {
        check_dims(flow, mesh)?;
        cfg.validate()?;
        fluid.validate()?;
        let cl = 1.5 * tc.c_mu / cfg.schmidt_turbulent;
        let kp = if cfg.random_walk {
            flow.k
                .iter()
                .zip(&flow.epsilon)
                .map(|(&k, &e)| if e > 0.0 { 2.0 / 3.0 * k * cl * k / e } else { 0.0 })
                .collect()
        } else {
            Vec::new()
        };
        Ok(ParticleTracker {
            flow,
            mesh,
            pollutant,
            fluid: *fluid,
            cfg: *cfg,
            rate: source.rate_kg_s[pollutant.id],
            c_mu: tc.c_mu,
            strip: source.strip,
            injection_speed: source.injection_speed,
            kp,
        })
    }

    pub fn chunk_count(&self) -> usize {
        self.cfg.particles.div_ceil(DPM_CHUNK)
    }

    /// Lagrangian time-scale constant giving the random walk the same
    /// diffusivity as the gradient-diffusion closure.
    pub fn time_scale_constant(&self) -> f64 {
        1.5 * self.c_mu / self.cfg.schmidt_turbulent
    }

    pub fn track_chunk(&self, chunk: usize) -> DpmTally {
        let mut tally = DpmTally {
            residence: vec![0.0; self.mesh.len()],
            particles: 0,
            escaped: 0,
            stuck: 0,
            steps: 0,
            final_velocity_sum: [0.0; 3],
            trajectories: Vec::new(),
        };
        let start = chunk * DPM_CHUNK;
        let end = (start + DPM_CHUNK).min(self.cfg.particles);
        for id in start..end {
            self.track_one(id as u64, &mut tally);
        }
        tally
    }

    /// Local turbulence seen by a particle: fluctuation variance `2k/3`,
    /// Lagrangian time scale and the drift `T_L grad(sigma^2)`.
    fn turbulence(&self, b: &[Bracket; 3]) -> (f64, f64, [f64; 3]) {
        let dims = self.mesh.dims();
        let (k, gk) = trilinear(dims, &self.flow.k, b);
        let (kp, _) = trilinear(dims, &self.kp, b);
        let var = 2.0 * k / 3.0;
        if !(var > 0.0) || !(kp > 0.0) {
            return (0.0, f64::INFINITY, [0.0; 3]);
        }
        let tl = kp / var;
        (var, tl, gk.map(|g| tl * 2.0 / 3.0 * g))
    }

    /// Fresh eddy velocity and a unit-exponential lifetime clock.
    fn eddy(&self, rng: &mut ChaCha8Rng, var: f64) -> ([f64; 3], f64) {
        let sigma = math::sqrt(var.max(0.0));
        let u = [0; 3].map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * sigma
        });
        (u, -math::ln(uniform01(rng).max(f64::MIN_POSITIVE)))
    }

    fn brackets(&self, x: [f64; 3], extrapolate: bool) -> [Bracket; 3] {
        [0, 1, 2].map(|a| bracket(&self.mesh.centers[a], x[a], extrapolate))
    }

    fn track_one(&self, id: u64, tally: &mut DpmTally) {
        let mesh = self.mesh;
        let flow = self.flow;
        let ext = mesh.extent();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(id);
        let s = self.strip;
        let mut x = [
            s.x_min + uniform01(&mut rng) * (s.x_max - s.x_min),
            s.y_min + uniform01(&mut rng) * (s.y_max - s.y_min),
            s.height,
        ];
        let theta = 2.0 * core::f64::consts::PI * uniform01(&mut rng);
        let mut up = [self.injection_speed * libm::cos(theta), self.injection_speed * libm::sin(theta), 0.0];
        let rho = self.fluid.density;
        let rho_p = self.cfg.particle_density;
        let mu = self.fluid.viscosity;
        let d = self.pollutant.particle_diameter;
        let buoy = if self.cfg.gravity { (rho_p - rho) / rho_p } else { 0.0 };
        let g = self.fluid.gravity;
        let tau0 = rho_p * d * d / (18.0 * mu);
        let dims = mesh.dims();
        let record = (id as usize) < self.cfg.record_trajectories;

        let mut ijk = [0, 1, 2].map(|a| mesh.axis_cell(a, x[a]));
        // Eddies end at unit rate in the time variable `t / T_L(x)`, so the
        // eddy lifetime follows the particle through changing turbulence.
        let (mut eddy_u, mut eddy_clock) = if self.cfg.random_walk {
            let (var, _, _) = self.turbulence(&self.brackets(x, true));
            self.eddy(&mut rng, var)
        } else {
            ([0.0; 3], f64::INFINITY)
        };
        let mut t = 0.0;
        let mut escaped = false;
        let mut steps = 0;
        if record {
            tally.trajectories.push(TrajectoryPoint { particle_id: id, step: 0, position: x, time: 0.0 });
        }
        while steps < self.cfg.max_steps {
            let bv = self.brackets(x, false);
            let mut uf = [
                trilinear(dims, &flow.u, &bv).0 + eddy_u[0],
                trilinear(dims, &flow.v, &bv).0 + eddy_u[1],
                trilinear(dims, &flow.w, &bv).0 + eddy_u[2],
            ];
            let mut tl = f64::INFINITY;
            if self.cfg.random_walk {
                let (_, t_l, drift) = self.turbulence(&self.brackets(x, true));
                tl = t_l;
                for a in 0..3 {
                    uf[a] += drift[a];
                }
            }
            let rel = math::sqrt((0..3).map(|a| (uf[a] - up[a]) * (uf[a] - up[a])).sum());
            let re = rho * d * rel / mu;
            let tau = tau0 / (1.0 + 0.15 * math::powf(re, 0.687));
            let u_inf = [0, 1, 2].map(|a| uf[a] + g[a] * tau * buoy);
            let rate: f64 = (0..3).map(|a| up[a].abs().max(u_inf[a].abs()) / mesh.spacing[a][ijk[a]]).sum();
            let mut dt = if rate > 0.0 { 1.0 / (rate * self.cfg.step_factor) } else { self.cfg.max_dt };
            dt = dt.min(self.cfg.max_dt);
            if eddy_clock.is_finite() && tl.is_finite() {
                dt = dt.min(eddy_clock * tl);
            }
            let e = if tau > 0.0 { math::exp(-dt / tau) } else { 0.0 };
            let one_minus = if tau > 0.0 { -math::expm1(-dt / tau) } else { 1.0 };
            let x0 = x;
            for a in 0..3 {
                x[a] += u_inf[a] * dt + (up[a] - u_inf[a]) * tau * one_minus;
                up[a] = u_inf[a] + (up[a] - u_inf[a]) * e;
            }
            t += dt;
            steps += 1;
            let mid = [0, 1, 2].map(|a| 0.5 * (x0[a] + x[a]));
            if mid[0] >= 0.0 && mid[0] <= ext[0] {
                let mc = [0, 1, 2].map(|a| mesh.axis_cell(a, mid[a]));
                tally.residence[mesh.idx(mc[0], mc[1], mc[2])] += dt;
            }
            if x[0] < 0.0 || x[0] > ext[0] {
                escaped = true;
            }
            for a in 1..3 {
                if x[a] < 0.0 || x[a] > ext[a] {
                    x[a] = if x[a] < 0.0 { -x[a] } else { 2.0 * ext[a] - x[a] };
                    up[a] = -up[a];
                    eddy_u[a] = -eddy_u[a];
                }
                x[a] = x[a].clamp(0.0, ext[a]);
            }
            if record {
                tally.trajectories.push(TrajectoryPoint { particle_id: id, step: steps, position: x, time: t });
            }
            if escaped {
                break;
            }
            ijk = [0, 1, 2].map(|a| mesh.axis_cell(a, x[a]));
            if self.cfg.random_walk {
                eddy_clock -= dt / tl;
                if eddy_clock <= 1e-12 {
                    let (var, _, _) = self.turbulence(&self.brackets(x, true));
                    (eddy_u, eddy_clock) = self.eddy(&mut rng, var);
                }
            }
        }
        tally.particles += 1;
        tally.steps += steps as u64;
        if escaped {
            tally.escaped += 1;
        } else {
            tally.stuck += 1;
        }
        for a in 0..3 {
            tally.final_velocity_sum[a] += up[a];
        }
    }

    /// Merges chunk tallies in the order given and converts residence time
    /// to concentration.
    pub fn finish(&self, tallies: impl IntoIterator<Item = DpmTally>) -> DpmResult {
        let n = self.mesh.len();
        let mut residence = vec![0.0; n];
        let mut out = DpmResult {
            field: SpeciesField {
                pollutant: self.pollutant,
                concentration: Vec::new(),
                background: 0.0,
                source_rate: self.rate,
                converged: true,
                iterations: 0,
                residual: 0.0,
            },
            particles: 0,
            escaped: 0,
            stuck: 0,
            steps: 0,
            mean_final_velocity: [0.0; 3],
            trajectories: Vec::new(),
        };
        let mut vsum = [0.0; 3];
        for t in tallies {
            for (r, v) in residence.iter_mut().zip(&t.residence) {
                *r += v;
            }
            out.particles += t.particles;
            out.escaped += t.escaped;
            out.stuck += t.stuck;
            out.steps += t.steps;
            for a in 0..3 {
                vsum[a] += t.final_velocity_sum[a];
            }
            out.trajectories.extend(t.trajectories);
        }
        let per_particle = if out.particles > 0 { self.rate / out.particles as f64 } else { 0.0 };
        let vol = self.mesh.volumes();
        out.field.concentration = residence.iter().zip(&vol).map(|(r, v)| per_particle * r / v).collect();
        if out.particles > 0 {
            out.mean_final_velocity = vsum.map(|s| s / out.particles as f64);
        }
        out
    }
}

/// Tracks every particle on the calling thread.
pub fn track_particles(
    flow: &FlowState,
    mesh: &StructuredMesh,
    source: &SourceSpec,
    p: Pollutant,
    fluid: &FluidProperties,
    tc: &TurbulenceConstants,
    cfg: &DpmConfig,
) -> Result<DpmResult> {
    let tracker = ParticleTracker::new(flow, mesh, source, p, fluid, tc, cfg)?;
    let tallies = (0..tracker.chunk_count()).map(|c| tracker.track_chunk(c));
    Ok(tracker.finish(tallies))
}

/// Monitor location relative to the downwind road edge.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Monitor {
    pub distance_m: f64,
    pub height_m: f64,
}

/// Roadside sampling distances, m.
pub const DEFAULT_MONITOR_DISTANCES: [f64; 6] = [30.0, 100.0, 200.0, 300.0, 400.0, 600.0];
pub const DEFAULT_MONITOR_HEIGHT: f64 = 2.0;

pub fn default_monitors() -> Vec<Monitor> {
    DEFAULT_MONITOR_DISTANCES.iter().map(|&d| Monitor { distance_m: d, height_m: DEFAULT_MONITOR_HEIGHT }).collect()
}

impl Monitor {
    /// Downwind of the road's east edge, level with the middle of the road.
    pub fn position(&self, mesh: &StructuredMesh) -> [f64; 3] {
        let r = mesh.road;
        [r.x_max + self.distance_m, 0.5 * (r.y_min + r.y_max), self.height_m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonitorSample {
    pub pollutant: PollutantId,
    pub distance_m: f64,
    pub height_m: f64,
    /// kg/m^3.
    pub raw: f64,
    pub background: f64,
    pub adjusted: f64,
}

/// Trilinear samples of a species field; points outside the domain give a
/// per-point error.
pub fn sample_monitors(
    field: &SpeciesField,
    mesh: &StructuredMesh,
    monitors: &[Monitor],
) -> Vec<Result<MonitorSample>> {
    monitors
        .iter()
        .map(|m| {
            let raw = mesh.interpolate(&field.concentration, m.position(mesh))?;
            Ok(MonitorSample {
                pollutant: field.pollutant.id,
                distance_m: m.distance_m,
                height_m: m.height_m,
                raw,
                background: field.background,
                adjusted: raw + field.background,
            })
        })
        .collect()
}

/// Sets each sample's background from explicit values and recomputes the
/// adjusted value.
pub fn add_background_values(samples: &[MonitorSample], background: &PerPollutant<f64>) -> Vec<MonitorSample> {
    samples
        .iter()
        .map(|s| {
            let b = background[s.pollutant];
            MonitorSample { background: b, adjusted: s.raw + b, ..*s }
        })
        .collect()
}

pub fn add_background(
    samples: &[MonitorSample],
    policy: &BackgroundPolicy,
    constraints: &ConstraintSet,
) -> Result<Vec<MonitorSample>> {
    Ok(add_background_values(samples, &policy.background(constraints)?))
}
