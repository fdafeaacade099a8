//! Cubes, parabolic cylinders, uniform space-time grids and the family of
//! shrinking cylinders used by the De Giorgi iteration.
//!
//! A cylinder `[(x0, t0) + Q(θ, ρ)]` is the open box `[x0 + K_ρ] × (t0 − θ, t0)`,
//! where `K_ρ = (−ρ, ρ)ⁿ`. Membership is always strict, and snapping a
//! cylinder onto a grid only keeps nodes lying strictly inside it, so every
//! discrete measure is an under-approximation of the continuous one.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("sigma must lie in (0, 1), got {0}")]
    InvalidSigma(f64),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("extent {extent} along axis {axis} is not an integer multiple of h = {h}")]
    NotGridAligned { axis: usize, extent: f64, h: f64 },
    #[error("grid needs at least one spatial dimension")]
    EmptyDimension,
    #[error("axis {axis} needs at least {min} cells, got {got}")]
    TooFewCells { axis: usize, min: usize, got: usize },
    #[error("measure ratio bound violated at j = {j}: {which} = {ratio} >= {bound}")]
    RatioViolation {
        j: usize,
        which: &'static str,
        ratio: f64,
        bound: f64,
    },
}

fn check_positive(name: &'static str, value: f64) -> Result<(), GeometryError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::NonPositive { name, value })
    }
}

/// Open cube `[center + K_ρ]` in the max-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl Cube {
    pub fn new(center: Vec<f64>, half_width: f64) -> Result<Self, GeometryError> {
        if center.is_empty() {
            return Err(GeometryError::EmptyDimension);
        }
        check_positive("rho", half_width)?;
        Ok(Self { center, half_width })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .all(|(xi, ci)| (xi - ci).abs() < self.half_width)
    }

    /// Max-norm distance from the center.
    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .fold(0.0_f64, |acc, (xi, ci)| acc.max((xi - ci).abs()))
    }

    pub fn measure(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim() as i32)
    }
}

/// Backward parabolic cylinder with vertex `(x0, t0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub vertex: Vec<f64>,
    pub t0: f64,
    pub theta: f64,
    pub rho: f64,
}

impl Cylinder {
    pub fn new(vertex: Vec<f64>, t0: f64, theta: f64, rho: f64) -> Result<Self, GeometryError> {
        if vertex.is_empty() {
            return Err(GeometryError::EmptyDimension);
        }
        check_positive("theta", theta)?;
        check_positive("rho", rho)?;
        if !t0.is_finite() || vertex.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonPositive {
                name: "vertex (finite)",
                value: t0,
            });
        }
        Ok(Self {
            vertex,
            t0,
            theta,
            rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.vertex.len()
    }

    pub fn cube(&self) -> Cube {
        Cube {
            center: self.vertex.clone(),
            half_width: self.rho,
        }
    }

    pub fn t_bottom(&self) -> f64 {
        self.t0 - self.theta
    }

    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        t > self.t_bottom() && t < self.t0 && self.cube().contains(x)
    }

    /// Same vertex, scaled extents `Q(σθ, σρ)`.
    pub fn scaled(&self, sigma: f64) -> Self {
        Self {
            vertex: self.vertex.clone(),
            t0: self.t0,
            theta: sigma * self.theta,
            rho: sigma * self.rho,
        }
    }

    pub fn is_subset_of(&self, other: &Cylinder) -> bool {
        let shift = self
            .vertex
            .iter()
            .zip(&other.vertex)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        shift + self.rho <= other.rho
            && self.t0 <= other.t0
            && self.t_bottom() >= other.t_bottom()
    }
}

/// `(2ρ)ⁿ θ`.
pub fn cylinder_measure(c: &Cylinder) -> f64 {
    (2.0 * c.rho).powi(c.dim() as i32) * c.theta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Dirichlet,
    Periodic,
}

/// Uniform tensor-product space-time grid.
///
/// Along axis `i` the nodes sit at `origin[i] + m·h`. A Dirichlet axis with
/// `N` cells carries `N + 1` nodes (both ends included); a periodic axis
/// carries `N` nodes and wraps. Time levels are `t_start + m·τ`,
/// `m = 0..=steps`. Linear node indices are row-major with the last axis
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    origin: Vec<f64>,
    cells: Vec<usize>,
    h: f64,
    tau: f64,
    steps: usize,
    t_start: f64,
    boundary: BoundaryKind,
}

impl Grid {
    /// Builds a grid from per-axis extents, which must be integer multiples
    /// of `h` (relative tolerance 1e-9).
    pub fn new(
        origin: Vec<f64>,
        extents: &[f64],
        h: f64,
        tau: f64,
        steps: usize,
        boundary: BoundaryKind,
    ) -> Result<Self, GeometryError> {
        if origin.len() != extents.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: origin.len(),
                got: extents.len(),
            });
        }
        check_positive("h", h)?;
        let mut cells = Vec::with_capacity(extents.len());
        for (axis, &extent) in extents.iter().enumerate() {
            check_positive("extent", extent)?;
            let ratio = extent / h;
            let rounded = ratio.round();
            if (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) || rounded < 1.0 {
                return Err(GeometryError::NotGridAligned { axis, extent, h });
            }
            cells.push(rounded as usize);
        }
        Self::from_cells(origin, cells, h, tau, steps, boundary)
    }

    pub fn from_cells(
        origin: Vec<f64>,
        cells: Vec<usize>,
        h: f64,
        tau: f64,
        steps: usize,
        boundary: BoundaryKind,
    ) -> Result<Self, GeometryError> {
        if origin.is_empty() {
            return Err(GeometryError::EmptyDimension);
        }
        if origin.len() != cells.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: origin.len(),
                got: cells.len(),
            });
        }
        check_positive("h", h)?;
        check_positive("tau", tau)?;
        let min = match boundary {
            BoundaryKind::Dirichlet => 1,
            BoundaryKind::Periodic => 2,
        };
        for (axis, &c) in cells.iter().enumerate() {
            if c < min {
                return Err(GeometryError::TooFewCells { axis, min, got: c });
            }
        }
        Ok(Self {
            origin,
            cells,
            h,
            tau,
            steps,
            t_start: 0.0,
            boundary,
        })
    }

    pub fn with_t_start(mut self, t_start: f64) -> Self {
        self.t_start = t_start;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn time(&self, level: usize) -> f64 {
        self.t_start + level as f64 * self.tau
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn extents(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| c as f64 * self.h).collect()
    }

    /// `hⁿ`, the volume carried by one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.cells
            .iter()
            .map(|&c| match self.boundary {
                BoundaryKind::Dirichlet => c + 1,
                BoundaryKind::Periodic => c,
            })
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let counts = self.nodes_per_axis();
        let mut strides = vec![1; counts.len()];
        for axis in (0..counts.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * counts[axis + 1];
        }
        strides
    }

    pub fn coord(&self, axis: usize, m: usize) -> f64 {
        self.origin[axis] + m as f64 * self.h
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let counts = self.nodes_per_axis();
        let mut out = vec![0; counts.len()];
        for axis in (0..counts.len()).rev() {
            out[axis] = idx % counts[axis];
            idx /= counts[axis];
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        let counts = self.nodes_per_axis();
        multi
            .iter()
            .zip(&counts)
            .fold(0, |acc, (&m, &c)| acc * c + m)
    }

    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(axis, &m)| self.coord(axis, m))
            .collect()
    }

    /// All node coordinates, flattened with stride `dim()`.
    pub fn all_coords(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(self.node_count() * n);
        for idx in 0..self.node_count() {
            out.extend(self.node_coords(idx));
        }
        out
    }

    pub fn is_boundary_node(&self, idx: usize) -> bool {
        match self.boundary {
            BoundaryKind::Periodic => false,
            BoundaryKind::Dirichlet => self
                .multi_index(idx)
                .iter()
                .zip(&self.cells)
                .any(|(&m, &c)| m == 0 || m == c),
        }
    }

    /// Neighbor one step forward along `axis`, wrapping on periodic grids.
    pub fn forward(&self, idx: usize, axis: usize) -> Option<usize> {
        let m = self.multi_index(idx)[axis];
        let count = self.nodes_per_axis()[axis];
        let stride = self.strides()[axis];
        if m + 1 < count {
            Some(idx + stride)
        } else if self.boundary == BoundaryKind::Periodic {
            Some(idx - m * stride)
        } else {
            None
        }
    }

    /// Neighbor one step backward along `axis`, wrapping on periodic grids.
    pub fn backward(&self, idx: usize, axis: usize) -> Option<usize> {
        let m = self.multi_index(idx)[axis];
        let count = self.nodes_per_axis()[axis];
        let stride = self.strides()[axis];
        if m > 0 {
            Some(idx - stride)
        } else if self.boundary == BoundaryKind::Periodic {
            Some(idx + (count - 1) * stride)
        } else {
            None
        }
    }

    /// Closed spatial bounding box `[lo, hi]` of the node set per axis.
    pub fn spatial_bounds(&self) -> Vec<(f64, f64)> {
        self.origin
            .iter()
            .zip(&self.cells)
            .map(|(&o, &c)| (o, o + c as f64 * self.h))
            .collect()
    }

    /// Whether the closure of `c` lies inside the closed space-time domain.
    pub fn contains_cylinder(&self, c: &Cylinder) -> bool {
        let eps = 1e-12 * (1.0 + self.h);
        c.dim() == self.dim()
            && self
                .spatial_bounds()
                .iter()
                .zip(&c.vertex)
                .all(|(&(lo, hi), &x)| x - c.rho >= lo - eps && x + c.rho <= hi + eps)
            && c.t_bottom() >= self.t_start - 1e-12
            && c.t0 <= self.t_end() + 1e-12 * (1.0 + self.t_end().abs())
    }
}

/// Strict open-interval node range `{m : lo < origin + m·step < hi}`.
fn open_range(origin: f64, step: f64, count: usize, lo: f64, hi: f64) -> Range<usize> {
    if count == 0 || hi <= lo {
        return 0..0;
    }
    let mut first = ((lo - origin) / step).floor().max(0.0) as usize;
    while first < count && origin + first as f64 * step <= lo {
        first += 1;
    }
    while first > 0 && origin + (first - 1) as f64 * step > lo {
        first -= 1;
    }
    let mut end = (((hi - origin) / step).ceil().max(0.0) as usize).min(count);
    while end > 0 && origin + (end - 1) as f64 * step >= hi {
        end -= 1;
    }
    while end < count && origin + end as f64 * step < hi {
        end += 1;
    }
    if first >= end {
        0..0
    } else {
        first..end
    }
}

/// Node-index window of a cylinder on a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapped {
    pub space: Vec<Range<usize>>,
    pub time: Range<usize>,
}

impl Snapped {
    pub fn is_empty(&self) -> bool {
        self.time.is_empty() || self.space.iter().any(|r| r.is_empty())
    }

    pub fn spatial_len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            self.space.iter().map(|r| r.len()).product()
        }
    }

    pub fn len(&self) -> usize {
        self.spatial_len() * self.time.len()
    }

    /// Linear indices of the spatial nodes, in grid order.
    pub fn spatial_nodes(&self, grid: &Grid) -> Vec<usize> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.spatial_len());
        let mut multi: Vec<usize> = self.space.iter().map(|r| r.start).collect();
        loop {
            out.push(grid.linear_index(&multi));
            let mut axis = multi.len();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                multi[axis] += 1;
                if multi[axis] < self.space[axis].end {
                    break;
                }
                multi[axis] = self.space[axis].start;
            }
        }
    }

    pub fn contains_all(&self, other: &Snapped) -> bool {
        if other.is_empty() {
            return true;
        }
        fn within(a: &Range<usize>, b: &Range<usize>) -> bool {
            a.start <= b.start && b.end <= a.end
        }
        within(&self.time, &other.time)
            && self
                .space
                .iter()
                .zip(&other.space)
                .all(|(a, b)| within(a, b))
    }
}

/// Maximal set of grid nodes lying strictly inside `c`.
pub fn snap_cylinder(c: &Cylinder, g: &Grid) -> Snapped {
    let space = g
        .nodes_per_axis()
        .iter()
        .enumerate()
        .map(|(axis, &count)| {
            let x0 = c.vertex.get(axis).copied().unwrap_or(f64::NAN);
            open_range(g.origin[axis], g.h, count, x0 - c.rho, x0 + c.rho)
        })
        .collect();
    let time = open_range(g.t_start, g.tau, g.levels(), c.t_bottom(), c.t0);
    Snapped { space, time }
}

/// The shrinking cylinders `Q_j = Q(θ_j, ρ_j)` and intermediate boxes
/// `Q̃_j = Q(θ̃_j, ρ̃_j)` with common vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkFamily {
    pub sigma: f64,
    pub theta: f64,
    pub rho: f64,
    pub vertex: Vec<f64>,
    pub t0: f64,
}

pub fn make_shrinking_family(
    sigma: f64,
    theta: f64,
    rho: f64,
    vertex: Vec<f64>,
    t0: f64,
) -> Result<ShrinkFamily, GeometryError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(GeometryError::InvalidSigma(sigma));
    }
    Cylinder::new(vertex.clone(), t0, theta, rho)?;
    Ok(ShrinkFamily {
        sigma,
        theta,
        rho,
        vertex,
        t0,
    })
}

impl ShrinkFamily {
    pub fn from_cylinder(c: &Cylinder, sigma: f64) -> Result<Self, GeometryError> {
        make_shrinking_family(sigma, c.theta, c.rho, c.vertex.clone(), c.t0)
    }

    fn seq(&self, base: f64, j: usize) -> f64 {
        self.sigma * base + (1.0 - self.sigma) * base / 2f64.powi(j as i32)
    }

    fn seq_tilde(&self, base: f64, j: usize) -> f64 {
        self.sigma * base + 3.0 * (1.0 - self.sigma) * base / 2f64.powi(j as i32 + 2)
    }

    pub fn rho_j(&self, j: usize) -> f64 {
        self.seq(self.rho, j)
    }

    pub fn theta_j(&self, j: usize) -> f64 {
        self.seq(self.theta, j)
    }

    pub fn rho_tilde(&self, j: usize) -> f64 {
        self.seq_tilde(self.rho, j)
    }

    pub fn theta_tilde(&self, j: usize) -> f64 {
        self.seq_tilde(self.theta, j)
    }

    pub fn q(&self, j: usize) -> Cylinder {
        Cylinder {
            vertex: self.vertex.clone(),
            t0: self.t0,
            theta: self.theta_j(j),
            rho: self.rho_j(j),
        }
    }

    pub fn q_tilde(&self, j: usize) -> Cylinder {
        Cylinder {
            vertex: self.vertex.clone(),
            t0: self.t0,
            theta: self.theta_tilde(j),
            rho: self.rho_tilde(j),
        }
    }

    /// `Q_∞ = Q(σθ, σρ)`.
    pub fn q_limit(&self) -> Cylinder {
        self.q(0).scaled(self.sigma)
    }

    pub fn dim(&self) -> usize {
        self.vertex.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRatios {
    pub j: usize,
    /// `|Q̃_j| / |Q_{j+1}|`.
    pub tilde_over_next: f64,
    /// `|Q_j| / |Q̃_j|`.
    pub current_over_tilde: f64,
}

/// Checks `|Q̃_j|/|Q_{j+1}| < (3/2)^{n+1}` and `|Q_j|/|Q̃_j| < 4^{n+1}` for
/// `j = 0..=j_max`, with the cylinders taken in dimension `n`.
pub fn measure_ratio_check(
    f: &ShrinkFamily,
    n: usize,
    j_max: usize,
) -> Result<Vec<MeasureRatios>, GeometryError> {
    let measure = |rho: f64, theta: f64| (2.0 * rho).powi(n as i32) * theta;
    let bound_a = 1.5f64.powi(n as i32 + 1);
    let bound_b = 4f64.powi(n as i32 + 1);
    let mut out = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let q_j = measure(f.rho_j(j), f.theta_j(j));
        let q_next = measure(f.rho_j(j + 1), f.theta_j(j + 1));
        let q_tilde = measure(f.rho_tilde(j), f.theta_tilde(j));
        let a = q_tilde / q_next;
        let b = q_j / q_tilde;
        if a >= bound_a || a <= 1.0 {
            return Err(GeometryError::RatioViolation {
                j,
                which: "|Q~_j|/|Q_j+1|",
                ratio: a,
                bound: bound_a,
            });
        }
        if b >= bound_b || b <= 1.0 {
            return Err(GeometryError::RatioViolation {
                j,
                which: "|Q_j|/|Q~_j|",
                ratio: b,
                bound: bound_b,
            });
        }
        out.push(MeasureRatios {
            j,
            tilde_over_next: a,
            current_over_tilde: b,
        });
    }
    Ok(out)
}
