//! Linear solvers for 7-point structured stencils.
//!
//! Equations are stored in the finite-volume form
//! `a_p * phi_P = sum(a_nb * phi_nb) + b` with non-negative neighbour
//! coefficients.

use alloc::vec;
use alloc::vec::Vec;

/// Neighbour slots in the order west, east, south, north, bottom, top.
pub const W: usize = 0;
pub const E: usize = 1;
pub const S: usize = 2;
pub const N: usize = 3;
pub const B: usize = 4;
pub const T: usize = 5;

#[derive(Debug, Clone)]
pub struct Stencil {
    pub dims: [usize; 3],
    pub ap: Vec<f64>,
    pub anb: Vec<[f64; 6]>,
    pub b: Vec<f64>,
}

impl Stencil {
    pub fn new(dims: [usize; 3]) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        Stencil { dims, ap: vec![0.0; n], anb: vec![[0.0; 6]; n], b: vec![0.0; n] }
    }

    pub fn reset(&mut self) {
        self.ap.iter_mut().for_each(|v| *v = 0.0);
        self.anb.iter_mut().for_each(|v| *v = [0.0; 6]);
        self.b.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ap.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ap.is_empty()
    }

    /// `sum(a_nb * phi_nb)` for cell `c`.
    #[inline]
    pub fn neighbour_sum(&self, phi: &[f64], c: usize) -> f64 {
        let [nx, ny, nz] = self.dims;
        let sx = 1;
        let sy = nx;
        let sz = nx * ny;
        let i = c % nx;
        let j = (c / nx) % ny;
        let k = c / sz;
        let a = &self.anb[c];
        let mut s = 0.0;
        if i > 0 {
            s += a[W] * phi[c - sx];
        }
        if i + 1 < nx {
            s += a[E] * phi[c + sx];
        }
        if j > 0 {
            s += a[S] * phi[c - sy];
        }
        if j + 1 < ny {
            s += a[N] * phi[c + sy];
        }
        if k > 0 {
            s += a[B] * phi[c - sz];
        }
        if k + 1 < nz {
            s += a[T] * phi[c + sz];
        }
        s
    }

    /// Cell residuals `b + sum(a_nb phi_nb) - a_p phi_P`.
    pub fn residual(&self, phi: &[f64], out: &mut [f64]) {
        for c in 0..self.len() {
            out[c] = self.b[c] + self.neighbour_sum(phi, c) - self.ap[c] * phi[c];
        }
    }

    /// `sum |residual|` computed in fixed cell order.
    pub fn residual_l1(&self, phi: &[f64]) -> f64 {
        let mut s = 0.0;
        for c in 0..self.len() {
            s += (self.b[c] + self.neighbour_sum(phi, c) - self.ap[c] * phi[c]).abs();
        }
        s
    }

    /// Matrix-vector product `y = A x` where `A = diag(a_p) - offdiag(a_nb)`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.len() {
            y[c] = self.ap[c] * x[c] - self.neighbour_sum(x, c);
        }
    }

    /// Vertical-line Gauss-Seidel: each z-column is solved exactly with the
    /// Thomas algorithm, columns visited west-to-east then east-to-west.
    pub fn line_sweeps(&self, phi: &mut [f64], sweeps: usize) {
        let [nx, ny, nz] = self.dims;
        let mut p = vec![0.0; nz];
        let mut q = vec![0.0; nz];
        for s in 0..sweeps {
            for jj in 0..ny {
                let j = if s % 2 == 0 { jj } else { ny - 1 - jj };
                for ii in 0..nx {
                    let i = if s % 2 == 0 { ii } else { nx - 1 - ii };
                    self.solve_column(phi, i, j, &mut p, &mut q);
                }
            }
        }
    }

    fn solve_column(&self, phi: &mut [f64], i: usize, j: usize, p: &mut [f64], q: &mut [f64]) {
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            let c = i + nx * (j + ny * k);
            let a = &self.anb[c];
            let mut d = self.b[c];
            if i > 0 {
                d += a[W] * phi[c - 1];
            }
            if i + 1 < nx {
                d += a[E] * phi[c + 1];
            }
            if j > 0 {
                d += a[S] * phi[c - nx];
            }
            if j + 1 < ny {
                d += a[N] * phi[c + nx];
            }
            let lower = if k > 0 { a[B] } else { 0.0 };
            let upper = if k + 1 < nz { a[T] } else { 0.0 };
            let (pp, qp) = if k > 0 { (p[k - 1], q[k - 1]) } else { (0.0, 0.0) };
            let denom = self.ap[c] - lower * pp;
            p[k] = upper / denom;
            q[k] = (d + lower * qp) / denom;
        }
        let mut next = 0.0;
        for k in (0..nz).rev() {
            let v = if k + 1 < nz { p[k] * next + q[k] } else { q[k] };
            phi[i + nx * (j + ny * k)] = v;
            next = v;
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final residual norm relative to the initial one.
    pub relative_residual: f64,
}

/// Conjugate gradients with a diagonal incomplete-Cholesky preconditioner.
/// The stencil must be symmetric positive definite.
pub fn dic_pcg(m: &Stencil, x: &mut [f64], rel_tol: f64, max_iter: usize) -> SolveStats {
    let n = m.len();
    let [nx, ny, _] = m.dims;
    let sz = nx * ny;
    // D_c = a_p - sum over lower neighbours of a^2 / D_nb.
    let mut rd = vec![0.0; n];
    for c in 0..n {
        let i = c % nx;
        let j = (c / nx) % ny;
        let k = c / sz;
        let mut d = m.ap[c];
        if i > 0 {
            d -= m.anb[c][W] * m.anb[c - 1][E] * rd[c - 1];
        }
        if j > 0 {
            d -= m.anb[c][S] * m.anb[c - nx][N] * rd[c - nx];
        }
        if k > 0 {
            d -= m.anb[c][B] * m.anb[c - sz][T] * rd[c - sz];
        }
        rd[c] = 1.0 / d;
    }
    let precondition = |r: &[f64], z: &mut [f64]| {
        for c in 0..n {
            let i = c % nx;
            let j = (c / nx) % ny;
            let k = c / sz;
            let mut v = r[c];
            if i > 0 {
                v += m.anb[c][W] * z[c - 1];
            }
            if j > 0 {
                v += m.anb[c][S] * z[c - nx];
            }
            if k > 0 {
                v += m.anb[c][B] * z[c - sz];
            }
            z[c] = v * rd[c];
        }
        for c in (0..n).rev() {
            let i = c % nx;
            let j = (c / nx) % ny;
            let k = c / sz;
            let mut v = 0.0;
            if i + 1 < nx {
                v += m.anb[c][E] * z[c + 1];
            }
            if j + 1 < ny {
                v += m.anb[c][N] * z[c + nx];
            }
            if k + 1 < m.dims[2] {
                v += m.anb[c][T] * z[c + sz];
            }
            z[c] += v * rd[c];
        }
    };
    let mut r = vec![0.0; n];
    m.residual(x, &mut r);
    let r0 = norm(&r);
    if r0 == 0.0 {
        return SolveStats { iterations: 0, relative_residual: 0.0 };
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    let mut rel = 1.0;
    while it < max_iter {
        m.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for c in 0..n {
            x[c] += alpha * p[c];
            r[c] -= alpha * ap[c];
        }
        it += 1;
        rel = norm(&r) / r0;
        if rel <= rel_tol {
            break;
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for c in 0..n {
            p[c] = z[c] + beta * p[c];
        }
    }
    SolveStats { iterations: it, relative_residual: rel }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    crate::math::sqrt(dot(a, a))
}
