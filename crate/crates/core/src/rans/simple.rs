use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::linsolve::{dic_pcg, Stencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Inlet,
    Outlet,
    Symmetry,
    NoSlip,
    WallFunction,
    Profile,
}

#[derive(Clone, Copy)]
struct FaceGeo {
    axis: usize,
    high: bool,
    nb: Option<usize>,
    area: f64,
    /// Centre to centre, or centre to face on the boundary.
    delta: f64,
    /// Interpolation weight of the owner cell.
    wp: f64,
    flux: usize,
}

impl FaceGeo {
    #[inline]
    fn outward(&self, f: f64) -> f64 {
        if self.high {
            f
        } else {
            -f
        }
    }
}

struct Env<'a> {
    mesh: &'a StructuredMesh,
    fluid: &'a FluidProperties,
    tc: &'a TurbulenceConstants,
    bc: &'a BoundarySet,
    dims: [usize; 3],
    stride: [usize; 3],
    kinds: [Kind; 6],
    top: (f64, f64, f64),
    z0: f64,
    laminar: bool,
    c_mu_quarter: f64,
}

impl<'a> Env<'a> {
    fn new(
        mesh: &'a StructuredMesh,
        fluid: &'a FluidProperties,
        bc: &'a BoundarySet,
        tc: &'a TurbulenceConstants,
        cfg: &SolverConfig,
    ) -> Self {
        let laminar = cfg.turbulence == TurbulenceModel::Laminar;
        let lateral = match bc.lateral {
            OpenBoundary::Symmetry => Kind::Symmetry,
            OpenBoundary::PressureOutlet => Kind::Outlet,
        };
        let ground = match bc.ground {
            GroundBoundary::WallFunction if laminar => Kind::NoSlip,
            GroundBoundary::WallFunction => Kind::WallFunction,
            GroundBoundary::NoSlip => Kind::NoSlip,
            GroundBoundary::Symmetry => Kind::Symmetry,
        };
        let top = match bc.top {
            TopBoundary::Symmetry => Kind::Symmetry,
            TopBoundary::PressureOutlet => Kind::Outlet,
            TopBoundary::NoSlip => Kind::NoSlip,
            TopBoundary::InletProfile => Kind::Profile,
        };
        let dims = mesh.dims();
        let height = mesh.extent()[2];
        Env {
            mesh,
            fluid,
            tc,
            bc,
            dims,
            stride: [1, dims[0], dims[0] * dims[1]],
            kinds: [Kind::Inlet, Kind::Outlet, lateral, lateral, ground, top],
            top: inflow_at(height, bc, tc),
            z0: bc.roughness_length(),
            laminar,
            c_mu_quarter: math::powf(tc.c_mu, 0.25),
        }
    }

    #[inline]
    fn face(&self, c: usize, ijk: [usize; 3], dir: usize) -> FaceGeo {
        let axis = dir / 2;
        let high = dir % 2 == 1;
        let idx = ijk[axis];
        let h = &self.mesh.spacing[axis];
        let area = self.mesh.face_area(axis, ijk[0], ijk[1], ijk[2]);
        let mut f = ijk;
        if high {
            f[axis] += 1;
        }
        let flux = face_index(self.dims, axis, f[0], f[1], f[2]);
        let nb = if high { (idx + 1 < self.dims[axis]).then_some(idx + 1) } else { idx.checked_sub(1) };
        match nb {
            Some(m) => FaceGeo {
                axis,
                high,
                nb: Some(if high { c + self.stride[axis] } else { c - self.stride[axis] }),
                area,
                delta: 0.5 * (h[idx] + h[m]),
                wp: h[m] / (h[idx] + h[m]),
                flux,
            },
            None => FaceGeo { axis, high, nb: None, area, delta: 0.5 * h[idx], wp: 1.0, flux },
        }
    }

    fn inflow(&self, z: f64) -> (f64, f64, f64) {
        inflow_at(z, self.bc, self.tc)
    }

    /// Wall shear per unit tangential velocity from the rough-wall log law.
    #[inline]
    fn wall_lambda(&self, k: f64, zp: f64) -> f64 {
        self.fluid.density * self.tc.kappa * self.c_mu_quarter * math::sqrt(k.max(0.0))
            / math::ln((zp + self.z0) / self.z0)
    }

    fn has_dirichlet_pressure(&self) -> bool {
        self.kinds.contains(&Kind::Outlet)
    }
}

#[inline]
fn for_each_cell(dims: [usize; 3], mut f: impl FnMut(usize, [usize; 3])) {
    let mut c = 0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                f(c, [i, j, k]);
                c += 1;
            }
        }
    }
}

fn component(st: &FlowState, comp: usize) -> &Vec<f64> {
    match comp {
        0 => &st.u,
        1 => &st.v,
        _ => &st.w,
    }
}

fn component_mut(st: &mut FlowState, comp: usize) -> &mut Vec<f64> {
    match comp {
        0 => &mut st.u,
        1 => &mut st.v,
        _ => &mut st.w,
    }
}

/// Green-Gauss cell gradient; `bval` gives the boundary face value.
fn green_gauss(env: &Env, phi: &[f64], bval: impl Fn(usize, [usize; 3], usize, Kind) -> f64, out: &mut [Vec<f64>; 3]) {
    for_each_cell(env.dims, |c, ijk| {
        for axis in 0..3 {
            let mut fv = [0.0; 2];
            for side in 0..2 {
                let dir = 2 * axis + side;
                let f = env.face(c, ijk, dir);
                fv[side] = match f.nb {
                    Some(nb) => f.wp * phi[c] + (1.0 - f.wp) * phi[nb],
                    None => bval(c, ijk, dir, env.kinds[dir]),
                };
            }
            out[axis][c] = (fv[1] - fv[0]) / env.mesh.spacing[axis][ijk[axis]];
        }
    });
}

fn velocity_boundary(env: &Env, st: &FlowState, comp: usize, c: usize, ijk: [usize; 3], dir: usize, kind: Kind) -> f64 {
    let phi = component(st, comp)[c];
    match kind {
        Kind::Inlet => {
            if comp == 0 {
                env.inflow(env.mesh.centers[2][ijk[2]]).0
            } else {
                0.0
            }
        }
        Kind::Outlet => phi,
        Kind::Symmetry => {
            if comp == dir / 2 {
                0.0
            } else {
                phi
            }
        }
        Kind::NoSlip | Kind::WallFunction => 0.0,
        Kind::Profile => {
            if comp == 0 {
                env.top.0
            } else {
                0.0
            }
        }
    }
}

fn initial_state(env: &Env) -> FlowState {
    let mesh = env.mesh;
    let n = mesh.len();
    let dims = env.dims;
    let rho = env.fluid.density;
    let mut u = vec![0.0; n];
    let mut k = vec![0.0; n];
    let mut eps = vec![0.0; n];
    for_each_cell(dims, |c, ijk| {
        let (uu, kk, ee) = env.inflow(mesh.centers[2][ijk[2]]);
        u[c] = uu;
        k[c] = kk.max(1e-10);
        eps[c] = ee.max(1e-10);
    });
    let mu_t = if env.laminar { vec![0.0; n] } else { eddy_viscosity(&k, &eps, env.fluid, env.tc) };
    let mut st = FlowState {
        dims,
        u,
        v: vec![0.0; n],
        w: vec![0.0; n],
        p: vec![0.0; n],
        k,
        epsilon: eps,
        mu_t,
        mass_flux: [0, 1, 2].map(|a| vec![0.0; face_count(dims, a)]),
        density: rho,
        residuals: Vec::new(),
        converged: false,
        iterations: 0,
        clamp_count: 0,
    };
    let mut flux = core::mem::take(&mut st.mass_flux);
    for_each_cell(dims, |c, ijk| {
        for dir in [0, 1, 3, 5] {
            let f = env.face(c, ijk, dir);
            // West and south/bottom faces are owned by the lower neighbour except on the boundary.
            if f.high || f.nb.is_none() {
                let vel = match f.nb {
                    Some(nb) => {
                        let phi = component(&st, f.axis);
                        f.wp * phi[c] + (1.0 - f.wp) * phi[nb]
                    }
                    None => match env.kinds[dir] {
                        Kind::Inlet => env.inflow(mesh.centers[2][ijk[2]]).0,
                        Kind::Outlet => component(&st, f.axis)[c],
                        _ => 0.0,
                    },
                };
                flux[f.axis][f.flux] = rho * vel * f.area;
            }
        }
        for dir in [2, 4] {
            let f = env.face(c, ijk, dir);
            if f.nb.is_none() && env.kinds[dir] == Kind::Outlet {
                flux[f.axis][f.flux] = rho * component(&st, f.axis)[c] * f.area;
            }
        }
    });
    st.mass_flux = flux;
    st
}

fn relax(m: &mut Stencil, phi: &[f64], alpha: f64) {
    for c in 0..m.len() {
        m.ap[c] /= alpha;
        m.b[c] += (1.0 - alpha) * m.ap[c] * phi[c];
    }
}

fn check_finite(phi: &[f64], equation: &'static str, iteration: usize) -> Result<()> {
    if phi.iter().all(|v| v.is_finite() && v.abs() < 1e12) {
        Ok(())
    } else {
        Err(Error::Divergence { equation, iteration })
    }
}

#[inline]
fn scaled(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn assemble_momentum(
    env: &Env,
    st: &FlowState,
    gamma: &[f64],
    grad_p: &[Vec<f64>; 3],
    vol: &[f64],
    comp: usize,
    m: &mut Stencil,
) {
    let phi = component(st, comp);
    for_each_cell(env.dims, |c, ijk| {
        let mut ap = 0.0;
        let mut anb = [0.0; 6];
        let mut b = -grad_p[comp][c] * vol[c];
        for (dir, a_dir) in anb.iter_mut().enumerate() {
            let f = env.face(c, ijk, dir);
            let fout = f.outward(st.mass_flux[f.axis][f.flux]);
            if let Some(nb) = f.nb {
                let g = f.wp * gamma[c] + (1.0 - f.wp) * gamma[nb];
                let d = g * f.area / f.delta;
                *a_dir = d + (-fout).max(0.0);
                ap += d + fout.max(0.0);
                continue;
            }
            let d = gamma[c] * f.area / f.delta;
            match env.kinds[dir] {
                Kind::Inlet => {
                    let val = if comp == 0 { env.inflow(env.mesh.centers[2][ijk[2]]).0 } else { 0.0 };
                    ap += d + fout.max(0.0);
                    b += (d + (-fout).max(0.0)) * val;
                }
                Kind::Outlet => {
                    if fout >= 0.0 {
                        ap += fout;
                    } else {
                        b -= fout * phi[c];
                    }
                }
                Kind::Symmetry => {
                    if comp == f.axis {
                        ap += d;
                    }
                }
                Kind::NoSlip => ap += d,
                Kind::WallFunction => {
                    if comp == f.axis {
                        ap += d;
                    } else {
                        ap += env.wall_lambda(st.k[c], env.mesh.centers[2][ijk[2]]) * f.area;
                    }
                }
                Kind::Profile => {
                    let val = if comp == 0 { env.top.0 } else { 0.0 };
                    ap += d;
                    b += d * val;
                }
            }
        }
        m.ap[c] = ap;
        m.anb[c] = anb;
        m.b[c] = b;
    });
}

/// Rhie-Chow face fluxes from the predicted velocities.
fn face_fluxes(env: &Env, st: &mut FlowState, d: &[Vec<f64>; 3], grad_p: &[Vec<f64>; 3]) {
    let rho = env.fluid.density;
    let mut flux = core::mem::take(&mut st.mass_flux);
    for_each_cell(env.dims, |c, ijk| {
        for dir in 0..6 {
            let f = env.face(c, ijk, dir);
            let a = f.axis;
            let vel = component(st, a);
            match f.nb {
                Some(nb) if f.high => {
                    let df = f.wp * d[a][c] + (1.0 - f.wp) * d[a][nb];
                    let gbar = f.wp * grad_p[a][c] + (1.0 - f.wp) * grad_p[a][nb];
                    let uf = f.wp * vel[c] + (1.0 - f.wp) * vel[nb] - df * ((st.p[nb] - st.p[c]) / f.delta - gbar);
                    flux[a][f.flux] = rho * uf * f.area;
                }
                Some(_) => {}
                None => match env.kinds[dir] {
                    Kind::Inlet => {}
                    Kind::Outlet => {
                        let dp = if f.high { -st.p[c] } else { st.p[c] } / f.delta;
                        let uf = vel[c] - d[a][c] * (dp - grad_p[a][c]);
                        flux[a][f.flux] = rho * uf * f.area;
                    }
                    _ => flux[a][f.flux] = 0.0,
                },
            }
        }
    });
    st.mass_flux = flux;
}

fn assemble_pressure_correction(env: &Env, d: &[Vec<f64>; 3], imbalance: &[f64], m: &mut Stencil) {
    let rho = env.fluid.density;
    for_each_cell(env.dims, |c, ijk| {
        let mut ap = 0.0;
        let mut anb = [0.0; 6];
        for (dir, a_dir) in anb.iter_mut().enumerate() {
            let f = env.face(c, ijk, dir);
            let a = f.axis;
            match f.nb {
                Some(nb) => {
                    let coef = rho * (f.wp * d[a][c] + (1.0 - f.wp) * d[a][nb]) * f.area / f.delta;
                    *a_dir = coef;
                    ap += coef;
                }
                None => {
                    if env.kinds[dir] == Kind::Outlet {
                        ap += rho * d[a][c] * f.area / f.delta;
                    }
                }
            }
        }
        m.ap[c] = ap;
        m.anb[c] = anb;
        m.b[c] = -imbalance[c];
    });
    if !env.has_dirichlet_pressure() && !m.is_empty() {
        m.ap[0] *= 2.0;
    }
}

fn apply_correction(
    env: &Env,
    st: &mut FlowState,
    d: &[Vec<f64>; 3],
    pc: &[f64],
    alpha_p: f64,
    grad: &mut [Vec<f64>; 3],
) {
    let rho = env.fluid.density;
    let mut flux = core::mem::take(&mut st.mass_flux);
    for_each_cell(env.dims, |c, ijk| {
        for dir in 0..6 {
            let f = env.face(c, ijk, dir);
            let a = f.axis;
            match f.nb {
                Some(nb) if f.high => {
                    let df = f.wp * d[a][c] + (1.0 - f.wp) * d[a][nb];
                    flux[a][f.flux] -= rho * df * f.area * (pc[nb] - pc[c]) / f.delta;
                }
                None if env.kinds[dir] == Kind::Outlet => {
                    let dp = if f.high { -pc[c] } else { pc[c] } / f.delta;
                    flux[a][f.flux] -= rho * d[a][c] * f.area * dp;
                }
                _ => {}
            }
        }
    });
    st.mass_flux = flux;
    green_gauss(env, pc, |c, _, _, kind| if kind == Kind::Outlet { 0.0 } else { pc[c] }, grad);
    for comp in 0..3 {
        let phi = component_mut(st, comp);
        for c in 0..phi.len() {
            phi[c] -= d[comp][c] * grad[comp][c];
        }
    }
    for c in 0..st.p.len() {
        st.p[c] += alpha_p * pc[c];
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TurbVar {
    K,
    Epsilon,
}

fn assemble_turbulence(
    env: &Env,
    st: &FlowState,
    var: TurbVar,
    gamma: &[f64],
    src_b: &[f64],
    src_ap: &[f64],
    m: &mut Stencil,
) {
    let phi = match var {
        TurbVar::K => &st.k,
        TurbVar::Epsilon => &st.epsilon,
    };
    let pick = |t: (f64, f64, f64)| match var {
        TurbVar::K => t.1,
        TurbVar::Epsilon => t.2,
    };
    for_each_cell(env.dims, |c, ijk| {
        let mut ap = src_ap[c];
        let mut anb = [0.0; 6];
        let mut b = src_b[c];
        for (dir, a_dir) in anb.iter_mut().enumerate() {
            let f = env.face(c, ijk, dir);
            let fout = f.outward(st.mass_flux[f.axis][f.flux]);
            if let Some(nb) = f.nb {
                let g = f.wp * gamma[c] + (1.0 - f.wp) * gamma[nb];
                let d = g * f.area / f.delta;
                *a_dir = d + (-fout).max(0.0);
                ap += d + fout.max(0.0);
                continue;
            }
            let d = gamma[c] * f.area / f.delta;
            match env.kinds[dir] {
                Kind::Inlet => {
                    let val = pick(env.inflow(env.mesh.centers[2][ijk[2]]));
                    ap += d + fout.max(0.0);
                    b += (d + (-fout).max(0.0)) * val;
                }
                Kind::Outlet => {
                    if fout >= 0.0 {
                        ap += fout;
                    } else {
                        b -= fout * phi[c];
                    }
                }
                Kind::Profile => {
                    ap += d;
                    b += d * pick(env.top);
                }
                Kind::Symmetry | Kind::NoSlip | Kind::WallFunction => {}
            }
        }
        m.ap[c] = ap;
        m.anb[c] = anb;
        m.b[c] = b;
    });
}

fn masked_residual(m: &Stencil, phi: &[f64], fixed: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..m.len() {
        if fixed[c] {
            continue;
        }
        num += (m.b[c] + m.neighbour_sum(phi, c) - m.ap[c] * phi[c]).abs();
        den += (m.ap[c] * phi[c]).abs();
    }
    scaled(num, den)
}

struct Work {
    mom: [Stencil; 3],
    d: [Vec<f64>; 3],
    grad: [Vec<f64>; 3],
    pc_eq: Stencil,
    pc: Vec<f64>,
    turb: Stencil,
    vol: Vec<f64>,
}

/// Runs SIMPLE outer iterations until every scaled residual falls below the
/// tolerance or the iteration cap is reached. Non-convergence is reported
/// through [`FlowState::converged`]; NaN or runaway values are an error.
pub fn solve_flow(
    mesh: &StructuredMesh,
    fluid: &FluidProperties,
    bc: &BoundarySet,
    tc: &TurbulenceConstants,
    cfg: &SolverConfig,
) -> Result<FlowState> {
    fluid.validate()?;
    tc.validate()?;
    bc.validate()?;
    cfg.validate()?;
    let env = Env::new(mesh, fluid, bc, tc, cfg);
    let mut st = initial_state(&env);
    let n = mesh.len();
    let dims = env.dims;
    let mut w = Work {
        mom: [Stencil::new(dims), Stencil::new(dims), Stencil::new(dims)],
        d: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        grad: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        pc_eq: Stencil::new(dims),
        pc: vec![0.0; n],
        turb: Stencil::new(dims),
        vol: mesh.volumes(),
    };
    for it in 1..=cfg.max_iterations {
        let res = iterate(&env, cfg, &mut st, &mut w, it)?;
        st.residuals.push(res);
        st.iterations = it;
        if res.max() < cfg.tolerance {
            st.converged = true;
            break;
        }
    }
    Ok(st)
}

fn iterate(env: &Env, cfg: &SolverConfig, st: &mut FlowState, w: &mut Work, it: usize) -> Result<Residuals> {
    let n = st.len();
    let mu = env.fluid.viscosity;
    let mut res = Residuals { iteration: it, ..Residuals::default() };

    let gamma: Vec<f64> = st.mu_t.iter().map(|m| mu + m).collect();
    let mut grad_p = core::mem::take(&mut w.grad);
    green_gauss(env, &st.p, |c, _, _, kind| if kind == Kind::Outlet { 0.0 } else { st.p[c] }, &mut grad_p);
    let speed = st.speed();
    for comp in 0..3 {
        let m = &mut w.mom[comp];
        assemble_momentum(env, st, &gamma, &grad_p, &w.vol, comp, m);
        let phi = component(st, comp);
        let num = m.residual_l1(phi);
        let den: f64 = (0..n).map(|c| m.ap[c] * speed[c]).sum();
        let r = scaled(num, den);
        match comp {
            0 => res.u = r,
            1 => res.v = r,
            _ => res.w = r,
        }
        relax(m, phi, cfg.relaxation.velocity);
        for c in 0..n {
            w.d[comp][c] = w.vol[c] / m.ap[c];
        }
        let phi = component_mut(st, comp);
        m.line_sweeps(phi, cfg.sweeps);
        check_finite(phi, ["x-momentum", "y-momentum", "z-momentum"][comp], it)?;
    }

    face_fluxes(env, st, &w.d, &grad_p);
    let imbalance = st.mass_imbalance();
    let (inflow, _) = st.boundary_flows();
    res.continuity = scaled(imbalance.iter().map(|v| v.abs()).sum(), inflow);

    assemble_pressure_correction(env, &w.d, &imbalance, &mut w.pc_eq);
    w.pc.iter_mut().for_each(|v| *v = 0.0);
    dic_pcg(&w.pc_eq, &mut w.pc, cfg.pressure_tolerance, cfg.pressure_max_iterations);
    check_finite(&w.pc, "pressure-correction", it)?;
    apply_correction(env, st, &w.d, &w.pc, cfg.relaxation.pressure, &mut grad_p);
    check_finite(&st.p, "pressure", it)?;
    w.grad = grad_p;

    if !env.laminar {
        turbulence_step(env, cfg, st, w, it, &mut res)?;
    }
    Ok(res)
}

fn turbulence_step(
    env: &Env,
    cfg: &SolverConfig,
    st: &mut FlowState,
    w: &mut Work,
    it: usize,
    res: &mut Residuals,
) -> Result<()> {
    let n = st.len();
    let tc = env.tc;
    let rho = env.fluid.density;
    let mu = env.fluid.viscosity;
    let dims = env.dims;

    // Velocity gradient tensor, g[comp][axis].
    let mut g: [[Vec<f64>; 3]; 3] = core::array::from_fn(|_| [vec![0.0; n], vec![0.0; n], vec![0.0; n]]);
    for (comp, gc) in g.iter_mut().enumerate() {
        let phi = component(st, comp).clone();
        green_gauss(env, &phi, |c, ijk, dir, kind| velocity_boundary(env, st, comp, c, ijk, dir, kind), gc);
    }
    let mut prod = vec![0.0; n];
    for c in 0..n {
        let (ux, uy, uz) = (g[0][0][c], g[0][1][c], g[0][2][c]);
        let (vx, vy, vz) = (g[1][0][c], g[1][1][c], g[1][2][c]);
        let (wx, wy, wz) = (g[2][0][c], g[2][1][c], g[2][2][c]);
        let s2 =
            2.0 * (ux * ux + vy * vy + wz * wz) + (uy + vx) * (uy + vx) + (uz + wx) * (uz + wx) + (vz + wy) * (vz + wy);
        prod[c] = st.mu_t[c] * s2;
    }

    let wall = env.kinds[4] == Kind::WallFunction;
    let mut fixed = vec![false; n];
    let mut eps_wall = vec![0.0; n];
    if wall {
        let zp = env.mesh.centers[2][0];
        let denom = tc.kappa * (zp + env.z0);
        for c in 0..dims[0] * dims[1] {
            let k = st.k[c];
            let ustar = env.c_mu_quarter * math::sqrt(k);
            let ut = math::sqrt(st.u[c] * st.u[c] + st.v[c] * st.v[c]);
            let tau = env.wall_lambda(k, zp) * ut;
            prod[c] = tau * ustar / denom;
            eps_wall[c] = ustar * ustar * ustar / denom;
            fixed[c] = true;
        }
    }

    let vol = &w.vol;
    // k
    let gamma_k: Vec<f64> = st.mu_t.iter().map(|m| mu + m / tc.sigma_k).collect();
    let src_b: Vec<f64> = (0..n).map(|c| prod[c] * vol[c]).collect();
    let src_ap: Vec<f64> = (0..n)
        .map(|c| {
            let e = if fixed[c] { eps_wall[c] } else { st.epsilon[c] };
            rho * e / st.k[c] * vol[c]
        })
        .collect();
    let m = &mut w.turb;
    assemble_turbulence(env, st, TurbVar::K, &gamma_k, &src_b, &src_ap, m);
    res.k = masked_residual(m, &st.k, &vec![false; n]);
    relax(m, &st.k, cfg.relaxation.k);
    let k_old = st.k.clone();
    m.line_sweeps(&mut st.k, cfg.sweeps);
    check_finite(&st.k, "k", it)?;

    // epsilon, with source terms from the k and epsilon of the previous iteration
    let gamma_e: Vec<f64> = st.mu_t.iter().map(|m| mu + m / tc.sigma_eps).collect();
    let src_b: Vec<f64> = (0..n).map(|c| tc.c1_eps * prod[c] * st.epsilon[c] / k_old[c] * vol[c]).collect();
    let src_ap: Vec<f64> = (0..n).map(|c| tc.c2_eps * rho * st.epsilon[c] / k_old[c] * vol[c]).collect();
    assemble_turbulence(env, st, TurbVar::Epsilon, &gamma_e, &src_b, &src_ap, m);
    for c in 0..n {
        if fixed[c] {
            m.ap[c] = 1.0;
            m.anb[c] = [0.0; 6];
            m.b[c] = eps_wall[c];
        }
    }
    res.epsilon = masked_residual(m, &st.epsilon, &fixed);
    relax(m, &st.epsilon, cfg.relaxation.epsilon);
    for c in 0..n {
        if fixed[c] {
            // Fixed rows are not under-relaxed.
            m.ap[c] = 1.0;
            m.b[c] = eps_wall[c];
        }
    }
    m.line_sweeps(&mut st.epsilon, cfg.sweeps);
    check_finite(&st.epsilon, "epsilon", it)?;

    for c in 0..n {
        if st.k[c] < cfg.k_floor {
            st.k[c] = cfg.k_floor;
            st.clamp_count += 1;
        }
        if st.epsilon[c] < cfg.epsilon_floor {
            st.epsilon[c] = cfg.epsilon_floor;
            st.clamp_count += 1;
        }
    }
    update_eddy_viscosity(st, env.fluid, tc);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::RoadStrip;

    fn strip() -> RoadStrip {
        RoadStrip::new(0.0, 1.0, 0.0, 1.0, 0.3).unwrap()
    }

    #[test]
    fn uniform_plug_flow_is_preserved() {
        let mesh = StructuredMesh::uniform([12, 4, 6], [24.0, 8.0, 12.0], strip()).unwrap();
        let fluid = FluidProperties::default();
        let tc = TurbulenceConstants::default();
        let bc = BoundarySet {
            inlet: InletSpec::Uniform { speed: 2.0, k: 0.0, epsilon: 0.0 },
            ground: GroundBoundary::Symmetry,
            top: TopBoundary::Symmetry,
            lateral: OpenBoundary::Symmetry,
        };
        let cfg = SolverConfig { turbulence: TurbulenceModel::Laminar, max_iterations: 200, ..SolverConfig::default() };
        let st = solve_flow(&mesh, &fluid, &bc, &tc, &cfg).unwrap();
        assert!(st.converged, "{:?}", st.final_residuals());
        for c in 0..st.len() {
            assert!((st.u[c] - 2.0).abs() < 1e-9);
            assert!(st.v[c].abs() < 1e-9 && st.w[c].abs() < 1e-9);
        }
    }

    #[test]
    fn quiescent_stays_at_rest() {
        let mesh = StructuredMesh::uniform([6, 3, 5], [6.0, 3.0, 5.0], strip()).unwrap();
        let fluid = FluidProperties::default();
        let tc = TurbulenceConstants::default();
        let bc = BoundarySet {
            inlet: InletSpec::Uniform { speed: 0.0, k: 0.0, epsilon: 0.0 },
            ground: GroundBoundary::NoSlip,
            top: TopBoundary::Symmetry,
            lateral: OpenBoundary::Symmetry,
        };
        let cfg = SolverConfig { turbulence: TurbulenceModel::Laminar, max_iterations: 20, ..SolverConfig::default() };
        let st = solve_flow(&mesh, &fluid, &bc, &tc, &cfg).unwrap();
        assert!(st.converged);
        assert!(st.u.iter().chain(&st.v).chain(&st.w).all(|&v| v == 0.0));
        assert!(st.p.iter().all(|&v| v == 0.0));
    }
}
