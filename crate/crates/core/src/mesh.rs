//! Graded structured Cartesian finite-volume grids over the highway corridor.
//!
//! Axes: `x` across the road (wind direction), `y` along the road, `z` up.
//! Cell `(i, j, k)` has linear index `i + nx * (j + ny * k)`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Spacing specification for one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradedAxis {
    pub extent: f64,
    pub min_spacing: f64,
    pub max_spacing: f64,
    pub growth_ratio: f64,
    /// Interval where `min_spacing` applies. `None` gives a uniform axis at
    /// `max_spacing`.
    pub refined_band: Option<(f64, f64)>,
}

impl GradedAxis {
    pub fn uniform(extent: f64, spacing: f64) -> Self {
        GradedAxis { extent, min_spacing: spacing, max_spacing: spacing, growth_ratio: 1.2, refined_band: None }
    }

    fn validate(&self) -> Result<()> {
        let GradedAxis { extent, min_spacing, max_spacing, growth_ratio, refined_band } = *self;
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::validation(format!("axis extent must be > 0, got {extent}")));
        }
        if !(min_spacing > 0.0) || !(min_spacing <= max_spacing) {
            return Err(Error::validation(format!(
                "axis spacings must satisfy 0 < min <= max, got min {min_spacing}, max {max_spacing}"
            )));
        }
        if !(growth_ratio >= 1.0) || !growth_ratio.is_finite() {
            return Err(Error::validation(format!("growth ratio must be >= 1, got {growth_ratio}")));
        }
        if let Some((a, b)) = refined_band {
            if !(a <= b) || a < 0.0 || b > extent {
                return Err(Error::validation(format!(
                    "refined band [{a}, {b}] does not fit inside the axis extent {extent}"
                )));
            }
            if !(extent > 2.0 * min_spacing) {
                return Err(Error::validation(format!(
                    "axis extent {extent} must exceed twice the minimum spacing {min_spacing}"
                )));
            }
        }
        Ok(())
    }
}

/// Sum of `n` capped geometric cells growing from `h` with ratio `r`.
fn capped_series(h: f64, r: f64, cap: f64, n: usize) -> f64 {
    let mut c = h;
    let mut s = 0.0;
    for _ in 0..n {
        c = (c * r).min(cap);
        s += c;
    }
    s
}

/// Fewest cells of the capped geometric series (ratio `g`) covering `len`.
fn side_count(len: f64, h: f64, g: f64, cap: f64) -> usize {
    if len <= 0.0 {
        return 0;
    }
    let mut c = h;
    let mut s = 0.0;
    let mut n = 0;
    while s < len * (1.0 - 1e-12) {
        c = (c * g).min(cap);
        s += c;
        n += 1;
    }
    n
}

/// Cells growing away from a band of spacing `h`, filling `len` exactly.
fn grow_side(len: f64, h: f64, g: f64, cap: f64) -> Vec<f64> {
    let n = side_count(len, h, g, cap);
    if n == 0 {
        return Vec::new();
    }
    let full = capped_series(h, g, cap, n);
    let r = if (full - len).abs() <= 1e-12 * len {
        g
    } else {
        // S(n; r) increases monotonically in r, from n*h <= len to S(n; g) >= len.
        let (mut lo, mut hi) = (1.0, g);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if capped_series(h, mid, cap, n) < len {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 {
                break;
            }
        }
        lo
    };
    let mut cells = Vec::with_capacity(n);
    let mut c = h;
    for _ in 0..n {
        c = (c * r).min(cap);
        cells.push(c);
    }
    let s: f64 = cells.iter().sum();
    *cells.last_mut().unwrap() += len - s;
    cells
}

/// Realises a graded axis as a list of cell spacings.
pub fn build_axis(spec: &GradedAxis) -> Result<Vec<f64>> {
    spec.validate()?;
    let GradedAxis { extent, min_spacing, max_spacing, growth_ratio, refined_band } = *spec;
    let Some((mut a, mut b)) = refined_band else {
        let n = math::ceil(extent / max_spacing - 1e-9).max(1.0) as usize;
        let h = extent / n as f64;
        return Ok(alloc::vec![h; n]);
    };
    if b - a < min_spacing {
        let mid = 0.5 * (a + b);
        a = (mid - 0.5 * min_spacing).max(0.0);
        b = (a + min_spacing).min(extent);
        a = b - min_spacing;
    }
    // A side too short to hold a monotone graded run is folded into the band.
    loop {
        let nb = math::ceil((b - a) / min_spacing - 1e-9).max(1.0);
        let h = (b - a) / nb;
        let left_ok = a <= 0.0 || side_count(a, h, growth_ratio, max_spacing) as f64 * h <= a;
        let right = extent - b;
        let right_ok = right <= 0.0 || side_count(right, h, growth_ratio, max_spacing) as f64 * h <= right;
        if left_ok && right_ok {
            let mut cells = grow_side(a, h, growth_ratio, max_spacing);
            cells.reverse();
            cells.extend(core::iter::repeat(h).take(nb as usize));
            cells.extend(grow_side(right, h, growth_ratio, max_spacing));
            return Ok(cells);
        }
        if !left_ok {
            a = 0.0;
        }
        if !right_ok {
            b = extent;
        }
    }
}

/// Axis-aligned road surface on which traffic emissions are released.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoadStrip {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Emission height above ground, m.
    pub height: f64,
}

/// Default release height of tailpipe emissions, m.
pub const EMISSION_HEIGHT: f64 = 0.3;

impl RoadStrip {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, height: f64) -> Result<Self> {
        if !(x_min < x_max) || !(y_min < y_max) || !(height >= 0.0) {
            return Err(Error::validation(format!(
                "degenerate road strip x [{x_min}, {x_max}], y [{y_min}, {y_max}], height {height}"
            )));
        }
        Ok(RoadStrip { x_min, x_max, y_min, y_max, height })
    }

    /// The G30 corridor: a 25.5 m carriageway centred in a 1225.5 m cross-section, 300 m long.
    pub fn g30() -> Self {
        RoadStrip { x_min: 600.0, x_max: 625.5, y_min: 0.0, y_max: 300.0, height: EMISSION_HEIGHT }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn length(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> [f64; 3] {
        [0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max), self.height]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeshSpec {
    /// Axis specifications in x, y, z order.
    pub axes: [GradedAxis; 3],
    pub road: RoadStrip,
    pub cell_budget: usize,
}

pub const DEFAULT_CELL_BUDGET: usize = 4_000_000;

/// Extent of the modelled corridor (x across the road, y along it, z up), m.
pub const G30_DOMAIN: [f64; 3] = [1225.5, 300.0, 300.0];

/// Cell count of the production mesh the desk presets stand in for.
pub const PAPER_CELL_COUNT: usize = 1_778_130;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MeshPreset {
    /// About 6e4 cells; the CI workhorse.
    Coarse,
    /// About 2.5e5 cells.
    Medium,
    /// About 1.8e6 cells at 0.5 m / 5 m / 1.2 grading. Not run in CI.
    Paper,
}

impl MeshPreset {
    pub const ALL: [MeshPreset; 3] = [MeshPreset::Coarse, MeshPreset::Medium, MeshPreset::Paper];

    pub fn label(self) -> &'static str {
        match self {
            MeshPreset::Coarse => "coarse",
            MeshPreset::Medium => "medium",
            MeshPreset::Paper => "paper",
        }
    }

    pub fn spec(self) -> MeshSpec {
        let road = RoadStrip::g30();
        let band_x = Some((road.x_min, road.x_max));
        let ground = Some((0.0, 0.5));
        let [lx, ly, lz] = G30_DOMAIN;
        let axes = match self {
            MeshPreset::Coarse => [
                GradedAxis { extent: lx, min_spacing: 2.0, max_spacing: 15.0, growth_ratio: 1.2, refined_band: band_x },
                GradedAxis::uniform(ly, 17.0),
                GradedAxis { extent: lz, min_spacing: 0.5, max_spacing: 20.0, growth_ratio: 1.2, refined_band: ground },
            ],
            MeshPreset::Medium => [
                GradedAxis { extent: lx, min_spacing: 1.0, max_spacing: 8.0, growth_ratio: 1.2, refined_band: band_x },
                GradedAxis::uniform(ly, 8.6),
                GradedAxis { extent: lz, min_spacing: 0.5, max_spacing: 12.0, growth_ratio: 1.2, refined_band: ground },
            ],
            MeshPreset::Paper => [
                GradedAxis { extent: lx, min_spacing: 0.5, max_spacing: 5.0, growth_ratio: 1.2, refined_band: band_x },
                GradedAxis {
                    extent: ly,
                    min_spacing: 1.5,
                    max_spacing: 5.0,
                    growth_ratio: 1.2,
                    refined_band: Some((130.0, 170.0)),
                },
                GradedAxis { extent: lz, min_spacing: 0.5, max_spacing: 5.0, growth_ratio: 1.2, refined_band: ground },
            ],
        };
        MeshSpec { axes, road, cell_budget: DEFAULT_CELL_BUDGET }
    }
}

impl core::str::FromStr for MeshPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coarse" => Ok(MeshPreset::Coarse),
            "medium" => Ok(MeshPreset::Medium),
            "paper" => Ok(MeshPreset::Paper),
            other => Err(Error::validation(format!("unknown mesh preset `{other}` (coarse, medium, paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeshQuality {
    pub cells: usize,
    pub min_spacing: f64,
    pub max_spacing: f64,
    pub max_aspect_ratio: f64,
    pub max_adjacent_ratio: f64,
    /// Ideal (0) on an orthogonal Cartesian grid.
    pub skewness: f64,
    /// Ideal (1) on an orthogonal Cartesian grid.
    pub orthogonal_quality: f64,
    /// Fraction of the inlet plane blocked by obstacles; none are modelled.
    pub blockage_ratio: f64,
}

/// Maximum blockage ratio before a warning is raised.
pub const BLOCKAGE_RATIO_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell spacings per axis.
    pub spacing: [Vec<f64>; 3],
    /// Node coordinates per axis (length n + 1).
    pub nodes: [Vec<f64>; 3],
    /// Cell-centre coordinates per axis.
    pub centers: [Vec<f64>; 3],
    pub road: RoadStrip,
    /// Cells receiving road emissions with their share of the strip area.
    pub road_cells: Vec<(usize, f64)>,
}

fn nodes_of(spacing: &[f64]) -> Vec<f64> {
    let mut nodes = Vec::with_capacity(spacing.len() + 1);
    let mut x = 0.0;
    nodes.push(x);
    for &h in spacing {
        x += h;
        nodes.push(x);
    }
    nodes
}

pub fn build_mesh(spec: &MeshSpec) -> Result<StructuredMesh> {
    let counts = [0, 1, 2].map(|a| build_axis(&spec.axes[a]).map(|s| s.len()));
    let mut n = 1usize;
    for c in &counts {
        n = n.saturating_mul(*c.as_ref().map_err(Clone::clone)?);
    }
    if n > spec.cell_budget {
        return Err(Error::Resource { what: "mesh cell count", requested: n, budget: spec.cell_budget });
    }
    let spacing = [build_axis(&spec.axes[0])?, build_axis(&spec.axes[1])?, build_axis(&spec.axes[2])?];
    StructuredMesh::from_spacings(spacing, spec.road)
}

impl StructuredMesh {
    /// Mesh from explicit spacings; the road strip must lie inside the footprint.
    pub fn from_spacings(spacing: [Vec<f64>; 3], road: RoadStrip) -> Result<Self> {
        for (a, s) in spacing.iter().enumerate() {
            if s.is_empty() || s.iter().any(|&h| !(h > 0.0)) {
                return Err(Error::validation(format!("axis {a} has an empty or non-positive spacing list")));
            }
        }
        let nodes = [nodes_of(&spacing[0]), nodes_of(&spacing[1]), nodes_of(&spacing[2])];
        let centers = [0, 1, 2].map(|a| nodes[a].windows(2).map(|w| 0.5 * (w[0] + w[1])).collect::<Vec<_>>());
        let (lx, ly, lz) = (nodes[0][spacing[0].len()], nodes[1][spacing[1].len()], nodes[2][spacing[2].len()]);
        let tol = 1e-9;
        if road.x_min < -tol || road.x_max > lx + tol || road.y_min < -tol || road.y_max > ly + tol || road.height > lz
        {
            return Err(Error::validation(format!(
                "road strip x [{}, {}], y [{}, {}] at {} m lies outside the {lx} x {ly} x {lz} domain",
                road.x_min, road.x_max, road.y_min, road.y_max, road.height
            )));
        }
        let mut mesh = StructuredMesh {
            nx: spacing[0].len(),
            ny: spacing[1].len(),
            nz: spacing[2].len(),
            spacing,
            nodes,
            centers,
            road,
            road_cells: Vec::new(),
        };
        mesh.road_cells = mesh.tag_road();
        Ok(mesh)
    }

    /// Uniform mesh, mostly for tests and analytic verification cases.
    pub fn uniform(n: [usize; 3], extent: [f64; 3], road: RoadStrip) -> Result<Self> {
        let spacing = [0, 1, 2].map(|a| alloc::vec![extent[a] / n[a] as f64; n[a]]);
        Self::from_spacings(spacing, road)
    }

    fn tag_road(&self) -> Vec<(usize, f64)> {
        let r = self.road;
        let k = self.axis_cell(2, r.height.min(self.extent()[2]));
        let area = r.area();
        let mut out = Vec::new();
        for j in 0..self.ny {
            let oy = overlap(self.nodes[1][j], self.nodes[1][j + 1], r.y_min, r.y_max);
            if oy <= 0.0 {
                continue;
            }
            for i in 0..self.nx {
                let ox = overlap(self.nodes[0][i], self.nodes[0][i + 1], r.x_min, r.x_max);
                if ox > 0.0 {
                    out.push((self.idx(i, j, k), ox * oy / area));
                }
            }
        }
        // Renormalise so the weights sum to one exactly in floating point.
        let total: f64 = out.iter().map(|c| c.1).sum();
        for c in &mut out {
            c.1 /= total;
        }
        out
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn ijk(&self, c: usize) -> (usize, usize, usize) {
        let i = c % self.nx;
        let r = c / self.nx;
        (i, r % self.ny, r / self.ny)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| *self.nodes[a].last().unwrap())
    }

    #[inline]
    pub fn volume(&self, i: usize, j: usize, k: usize) -> f64 {
        self.spacing[0][i] * self.spacing[1][j] * self.spacing[2][k]
    }

    pub fn volumes(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    v.push(self.volume(i, j, k));
                }
            }
        }
        v
    }

    pub fn center(&self, c: usize) -> [f64; 3] {
        let (i, j, k) = self.ijk(c);
        [self.centers[0][i], self.centers[1][j], self.centers[2][k]]
    }

    /// Area of a face normal to `axis` for the cell with transverse indices.
    #[inline]
    pub fn face_area(&self, axis: usize, i: usize, j: usize, k: usize) -> f64 {
        match axis {
            0 => self.spacing[1][j] * self.spacing[2][k],
            1 => self.spacing[0][i] * self.spacing[2][k],
            _ => self.spacing[0][i] * self.spacing[1][j],
        }
    }

    /// Sum of the outward face-area vectors of a cell (zero for a closed cell).
    pub fn face_vector_sum(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (axis, v) in s.iter_mut().enumerate() {
            let high = self.face_area(axis, i, j, k);
            let low = self.face_area(axis, i, j, k);
            *v = high - low;
        }
        s
    }

    /// Index of the cell along `axis` containing coordinate `x` (clamped).
    pub fn axis_cell(&self, axis: usize, x: f64) -> usize {
        let nodes = &self.nodes[axis];
        let n = nodes.len() - 1;
        if x <= nodes[0] {
            return 0;
        }
        if x >= nodes[n] {
            return n - 1;
        }
        match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(p) => p.min(n - 1),
            Err(p) => p - 1,
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let e = self.extent();
        (0..3).all(|a| p[a] >= -1e-9 && p[a] <= e[a] + 1e-9)
    }

    /// Cell containing the point, or `None` outside the domain.
    pub fn locate(&self, p: [f64; 3]) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        Some(self.idx(self.axis_cell(0, p[0]), self.axis_cell(1, p[1]), self.axis_cell(2, p[2])))
    }

    /// Bracketing cell-centre indices and weight along one axis; clamps
    /// beyond the first/last centre (zero-gradient extrapolation).
    fn bracket(&self, axis: usize, x: f64) -> (usize, usize, f64) {
        let c = &self.centers[axis];
        let n = c.len();
        if n == 1 || x <= c[0] {
            return (0, 0, 0.0);
        }
        if x >= c[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = c.partition_point(|&v| v <= x);
        let lo = hi - 1;
        (lo, hi, (x - c[lo]) / (c[hi] - c[lo]))
    }

    /// Trilinear interpolation of a cell-centred field.
    pub fn interpolate(&self, field: &[f64], p: [f64; 3]) -> Result<f64> {
        if field.len() != self.len() {
            return Err(Error::validation(format!("field has {} values for {} cells", field.len(), self.len())));
        }
        if !self.contains(p) {
            return Err(Error::validation(format!("point ({}, {}, {}) lies outside the domain", p[0], p[1], p[2])));
        }
        let (i0, i1, tx) = self.bracket(0, p[0]);
        let (j0, j1, ty) = self.bracket(1, p[1]);
        let (k0, k1, tz) = self.bracket(2, p[2]);
        let f = |i, j, k| field[self.idx(i, j, k)];
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(f(i0, j0, k0), f(i1, j0, k0), tx);
        let c10 = lerp(f(i0, j1, k0), f(i1, j1, k0), tx);
        let c01 = lerp(f(i0, j0, k1), f(i1, j0, k1), tx);
        let c11 = lerp(f(i0, j1, k1), f(i1, j1, k1), tx);
        Ok(lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz))
    }

    /// Distinct cells crossed by `samples` equally spaced points on a segment.
    pub fn cells_along_line(&self, from: [f64; 3], to: [f64; 3], samples: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for s in 0..samples {
            let t = if samples > 1 { s as f64 / (samples - 1) as f64 } else { 0.0 };
            let p = [0, 1, 2].map(|a| from[a] + (to[a] - from[a]) * t);
            if let Some(c) = self.locate(p) {
                if out.last() != Some(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn quality(&self) -> MeshQuality {
        let all = self.spacing.iter().flatten();
        let min_spacing = all.clone().copied().fold(f64::INFINITY, f64::min);
        let max_spacing = all.copied().fold(0.0, f64::max);
        let mut max_adjacent_ratio: f64 = 1.0;
        for s in &self.spacing {
            for w in s.windows(2) {
                max_adjacent_ratio = max_adjacent_ratio.max(w[0] / w[1]).max(w[1] / w[0]);
            }
        }
        let extremes =
            |s: &Vec<f64>| (s.iter().copied().fold(f64::INFINITY, f64::min), s.iter().copied().fold(0.0, f64::max));
        let e = [extremes(&self.spacing[0]), extremes(&self.spacing[1]), extremes(&self.spacing[2])];
        let mut max_aspect_ratio: f64 = 1.0;
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    // Worst pairing of the largest spacing on one axis with the smallest on another.
                    max_aspect_ratio = max_aspect_ratio.max(e[a].1 / e[b].0);
                }
            }
        }
        MeshQuality {
            cells: self.len(),
            min_spacing,
            max_spacing,
            max_aspect_ratio,
            max_adjacent_ratio,
            skewness: 0.0,
            orthogonal_quality: 1.0,
            blockage_ratio: 0.0,
        }
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Straight sampling line with equally spaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleLine {
    pub from: [f64; 3],
    pub to: [f64; 3],
    pub points: usize,
}

impl SampleLine {
    /// 41 points along the road axis from y = 130 m to 170 m at 2 m height
    /// over the road centreline.
    pub fn road_centerline(road: &RoadStrip) -> Self {
        let xc = 0.5 * (road.x_min + road.x_max);
        SampleLine { from: [xc, 130.0, 2.0], to: [xc, 170.0, 2.0], points: 41 }
    }

    pub fn point(&self, s: usize) -> [f64; 3] {
        let t = if self.points > 1 { s as f64 / (self.points - 1) as f64 } else { 0.0 };
        [0, 1, 2].map(|a| self.from[a] + (self.to[a] - self.from[a]) * t)
    }

    pub fn iter(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.points).map(move |s| self.point(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_axis() {
        let s = build_axis(&GradedAxis {
            extent: 10.0,
            min_spacing: 1.0,
            max_spacing: 1.0,
            growth_ratio: 1.2,
            refined_band: None,
        })
        .unwrap();
        assert_eq!(s, alloc::vec![1.0; 10]);
        let s = build_axis(&GradedAxis {
            extent: 10.0,
            min_spacing: 1.0,
            max_spacing: 1.0,
            growth_ratio: 1.2,
            refined_band: Some((0.0, 1.0)),
        })
        .unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|&h| (h - 1.0).abs() < 1e-12));
    }

    #[test]
    fn geometric_leading_spacings() {
        // Band [0, 0.5] followed by exactly 0.6 + 0.72 + 0.864 + 1.0368.
        let extent = 0.5 + 0.6 + 0.72 + 0.864 + 1.0368;
        let s = build_axis(&GradedAxis {
            extent,
            min_spacing: 0.5,
            max_spacing: 5.0,
            growth_ratio: 1.2,
            refined_band: Some((0.0, 0.5)),
        })
        .unwrap();
        let expect = [0.5, 0.6, 0.72, 0.864, 1.0368];
        assert_eq!(s.len(), 5);
        for (a, b) in s.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn caps_at_max_spacing() {
        let s = build_axis(&GradedAxis {
            extent: 300.0,
            min_spacing: 0.5,
            max_spacing: 5.0,
            growth_ratio: 1.2,
            refined_band: Some((0.0, 0.5)),
        })
        .unwrap();
        assert!(s.iter().all(|&h| h <= 5.0 + 1e-12));
        assert!((s.iter().sum::<f64>() - 300.0).abs() < 1e-9 * 300.0);
        assert_eq!(s[0], 0.5);
    }

    #[test]
    fn rejects_band_outside_extent() {
        let bad = GradedAxis {
            extent: 10.0,
            min_spacing: 1.0,
            max_spacing: 2.0,
            growth_ratio: 1.2,
            refined_band: Some((5.0, 12.0)),
        };
        assert!(matches!(build_axis(&bad), Err(Error::Validation(_))));
        let tiny = GradedAxis {
            extent: 1.5,
            min_spacing: 1.0,
            max_spacing: 2.0,
            growth_ratio: 1.2,
            refined_band: Some((0.0, 1.0)),
        };
        assert!(build_axis(&tiny).is_err());
    }

    #[test]
    fn unit_cube() {
        let m = StructuredMesh::uniform([10, 10, 10], [10.0; 3], RoadStrip::new(2.0, 4.0, 0.0, 10.0, 0.3).unwrap())
            .unwrap();
        assert_eq!(m.len(), 1000);
        assert!(m.volumes().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        // strip covers 2 x 10 cells in the ground layer
        assert_eq!(m.road_cells.len(), 20);
        assert!(m.road_cells.iter().all(|&(c, _)| m.ijk(c).2 == 0));
        assert!((m.road_cells.iter().map(|c| c.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn budget_exceeded_reports_count() {
        let mut spec = MeshPreset::Coarse.spec();
        spec.cell_budget = 1000;
        match build_mesh(&spec) {
            Err(Error::Resource { requested, budget, .. }) => {
                assert_eq!(budget, 1000);
                assert!(requested > 50_000);
            }
            other => panic!("expected a resource error, got {other:?}"),
        }
    }

    #[test]
    fn road_outside_domain_rejected() {
        let r = RoadStrip::new(5.0, 20.0, 0.0, 1.0, 0.3).unwrap();
        assert!(StructuredMesh::uniform([4, 4, 4], [10.0; 3], r).is_err());
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let mesh = build_mesh(&MeshPreset::Coarse.spec()).unwrap();
        let f: Vec<f64> = (0..mesh.len()).map(|c| mesh.center(c)[0]).collect();
        let v = mesh.interpolate(&f, [100.0, 150.0, 2.0]).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
        let c = alloc::vec![3.5; mesh.len()];
        assert_eq!(mesh.interpolate(&c, [1000.0, 3.0, 40.0]).unwrap(), 3.5);
        assert!(mesh.interpolate(&c, [1300.0, 3.0, 40.0]).is_err());
    }

    #[test]
    fn closure_and_quality() {
        let mesh = build_mesh(&MeshPreset::Coarse.spec()).unwrap();
        for c in [0, mesh.len() / 2, mesh.len() - 1] {
            let (i, j, k) = mesh.ijk(c);
            assert!(mesh.face_vector_sum(i, j, k).iter().all(|v| v.abs() <= 1e-12));
        }
        let q = mesh.quality();
        assert_eq!(q.cells, mesh.len());
        assert!(q.max_adjacent_ratio <= 1.2 * (1.0 + 1e-6));
        assert_eq!(q.skewness, 0.0);
        assert_eq!(q.orthogonal_quality, 1.0);
        assert!(q.blockage_ratio < BLOCKAGE_RATIO_LIMIT);
    }

    #[test]
    fn sample_line_has_41_points() {
        let l = SampleLine::road_centerline(&RoadStrip::g30());
        let pts: Vec<_> = l.iter().collect();
        assert_eq!(pts.len(), 41);
        assert_eq!(pts[0][1], 130.0);
        assert_eq!(pts[40][1], 170.0);
        assert!((pts[1][1] - 131.0).abs() < 1e-12);
    }

    fn arb_axis() -> impl Strategy<Value = GradedAxis> {
        (10.0f64..2000.0, 0.1f64..2.0, 1.0f64..20.0, 1.01f64..1.2, 0.0f64..1.0, 0.0f64..0.3).prop_map(
            |(extent, min, max_mul, g, a_frac, w_frac)| {
                let a = a_frac * extent * 0.7;
                let b = (a + w_frac * extent).min(extent);
                GradedAxis {
                    extent,
                    min_spacing: min,
                    max_spacing: min * max_mul,
                    growth_ratio: g,
                    refined_band: Some((a, b)),
                }
            },
        )
    }

    proptest! {
        #[test]
        fn axis_invariants(spec in arb_axis()) {
            prop_assume!(spec.extent > 2.0 * spec.min_spacing);
            let s = build_axis(&spec).unwrap();
            let sum: f64 = s.iter().sum();
            prop_assert!((sum - spec.extent).abs() <= 1e-9 * spec.extent);
            prop_assert!(s.iter().all(|&h| h > 0.0 && h <= spec.max_spacing * (1.0 + 1e-9)));
            for w in s.windows(2) {
                let r = (w[1] / w[0]).max(w[0] / w[1]);
                prop_assert!(r <= spec.growth_ratio * (1.0 + 1e-6), "ratio {} in {:?}", r, s);
            }
            // unimodal: non-increasing then non-decreasing
            let mut phase_up = false;
            for w in s.windows(2) {
                if w[1] > w[0] * (1.0 + 1e-9) { phase_up = true; }
                if phase_up { prop_assert!(w[1] >= w[0] * (1.0 - 1e-9), "not unimodal {:?}", s); }
            }
            prop_assert_eq!(&s, &build_axis(&spec).unwrap());
        }
    }
}
