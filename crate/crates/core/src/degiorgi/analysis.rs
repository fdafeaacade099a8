//! Steklov averages, the parabolic interpolation inequality, and weak-form
//! residuals against smooth bump test functions.

use serde::{Deserialize, Serialize};

use super::DegiorgiError;
use crate::flux::DegeneracyParams;
use crate::geometry::{BoundaryKind, Grid};
use crate::solver::{Field, Stencil};

/// Result of [`steklov_average`].
#[derive(Debug, Clone)]
pub struct SteklovAverage {
    pub field: Field,
    /// Window actually used: the requested one snapped down to a multiple of `τ`.
    pub h_used: f64,
    pub snapped: bool,
    /// Levels `0..valid_levels` carry averages; the rest are zero.
    pub valid_levels: usize,
}

/// Trapezoid weights of `(1/h)∫_{t_m}^{t_m+h}` over `width` steps.
fn trapezoid(width: usize) -> Vec<f64> {
    let mut w = vec![1.0 / width as f64; width + 1];
    w[0] *= 0.5;
    w[width] *= 0.5;
    w
}

fn window_steps(grid: &Grid, h: f64) -> Result<(usize, bool), DegiorgiError> {
    let tau = grid.tau();
    let extent = grid.t_end() - grid.t_start();
    if !(h < extent) {
        return Err(DegiorgiError::WindowTooLong { h, extent });
    }
    let ratio = h / tau;
    let steps = (ratio + 1e-9).floor();
    if steps < 1.0 {
        return Err(DegiorgiError::WindowTooShort { h, tau });
    }
    Ok((steps as usize, (ratio - steps).abs() > 1e-9))
}

/// Forward running mean `[v]_h(t) = (1/h)∫_t^{t+h} v`, set to zero where
/// `t + h` passes the last level.
pub fn steklov_average(field: &Field, h: f64) -> Result<SteklovAverage, DegiorgiError> {
    let grid = field.grid();
    let (width, snapped) = window_steps(grid, h)?;
    let weights = trapezoid(width);
    let levels = grid.levels();
    let valid_levels = levels - width;
    let mut out = Field::zeros(grid.clone());
    for m in 0..valid_levels {
        let target = out.slice_mut(m);
        for (offset, w) in weights.iter().enumerate() {
            for (o, v) in target.iter_mut().zip(field.slice(m + offset)) {
                *o += w * v;
            }
        }
    }
    Ok(SteklovAverage {
        field: out,
        h_used: width as f64 * grid.tau(),
        snapped,
        valid_levels,
    })
}

/// Discrete `L²` distance between `[v]_h` and `v` over the levels with
/// `t <= t_max` (which must lie in the valid range of the average).
pub fn steklov_l2_error(field: &Field, h: f64, t_max: f64) -> Result<f64, DegiorgiError> {
    let avg = steklov_average(field, h)?;
    let grid = field.grid();
    let mut acc = 0.0;
    for m in 0..avg.valid_levels {
        if grid.time(m) > t_max + 1e-12 {
            break;
        }
        for (a, v) in avg.field.slice(m).iter().zip(field.slice(m)) {
            acc += (a - v) * (a - v);
        }
    }
    Ok((acc * grid.cell_volume() * grid.tau()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub q: f64,
    /// `∬|v|^q`.
    pub lhs: f64,
    /// `(∬|Dv|^s)(sup_t ∫|v|^r)^{s/n}`.
    pub rhs_without_c: f64,
    /// `(lhs / rhs_without_c)^{1/q}`.
    pub fitted_c: f64,
    pub degenerate: bool,
}

/// Evaluates both sides of `∬|v|^q <= C^q (∬|Dv|^s)(sup_t ∫|v|^r)^{s/n}`,
/// `q = s(n+r)/n`, for `v` vanishing on the lateral boundary.
pub fn interpolation_check(v: &Field, r: f64, s: f64) -> Result<InterpolationReport, DegiorgiError> {
    if !(r >= 1.0 && s >= 1.0) {
        return Err(DegiorgiError::Invalid(format!("need r, s >= 1, got r={r}, s={s}")));
    }
    let grid = v.grid();
    if grid.boundary() != BoundaryKind::Dirichlet {
        return Err(DegiorgiError::Invalid("interpolation check needs a bounded domain".into()));
    }
    let scale = v.max_abs();
    let mut boundary_max = 0.0_f64;
    for m in 0..grid.levels() {
        for (i, x) in v.slice(m).iter().enumerate() {
            if grid.is_boundary_node(i) {
                boundary_max = boundary_max.max(x.abs());
            }
        }
    }
    if boundary_max > 1e-12 * scale {
        return Err(DegiorgiError::NotVanishing(boundary_max));
    }
    let n = grid.dim() as f64;
    let q = s * (n + r) / n;
    let stencil = Stencil::new(grid);
    let mut grad = vec![0.0; grid.dim()];
    let hn = grid.cell_volume();
    let tau = grid.tau();

    let mut lhs = 0.0;
    let mut grad_term = 0.0;
    let mut sup_r = 0.0_f64;
    for m in 0..grid.levels() {
        let slice = v.slice(m);
        let mut level_r = 0.0;
        for x in slice {
            lhs += x.abs().powf(q);
            level_r += x.abs().powf(r);
        }
        for &c in stencil.cells() {
            stencil.cell_gradient(slice, c, &mut grad);
            grad_term += grad.iter().map(|g| g * g).sum::<f64>().sqrt().powf(s);
        }
        sup_r = sup_r.max(level_r * hn);
    }
    let lhs = lhs * hn * tau;
    let rhs = grad_term * hn * tau * sup_r.powf(s / n);
    if lhs == 0.0 || rhs == 0.0 {
        return Ok(InterpolationReport {
            q,
            lhs,
            rhs_without_c: rhs,
            fitted_c: 0.0,
            degenerate: true,
        });
    }
    Ok(InterpolationReport {
        q,
        lhs,
        rhs_without_c: rhs,
        fitted_c: (lhs / rhs).powf(1.0 / q),
        degenerate: false,
    })
}

/// `φ(x, t) = Π_i ψ((x_i − c_i)/r) · ψ((t − t_c)/r_t)` with the smooth bump
/// `ψ(s) = e · exp(−1/(1 − s²))` on `|s| < 1`, so `φ` peaks at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpTest {
    pub center: Vec<f64>,
    pub radius: f64,
    pub t_center: f64,
    pub t_radius: f64,
}

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

impl BumpTest {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let space: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(xi, ci)| bump((xi - ci) / self.radius))
            .product();
        space * bump((t - self.t_center) / self.t_radius)
    }

    fn inside(&self, grid: &Grid) -> bool {
        let eps = 1e-12;
        self.center.len() == grid.dim()
            && self.radius > 0.0
            && self.t_radius > 0.0
            && grid
                .spatial_bounds()
                .iter()
                .zip(&self.center)
                .all(|(&(lo, hi), &c)| c - self.radius > lo + eps && c + self.radius < hi - eps)
            && self.t_center - self.t_radius > grid.t_start() - eps
            && self.t_center + self.t_radius < grid.t_end() + eps
    }

    /// A bump centered in the domain covering the middle half of each axis
    /// and of the time interval.
    pub fn centered(grid: &Grid) -> Self {
        let bounds = grid.spatial_bounds();
        let radius = bounds
            .iter()
            .map(|(lo, hi)| 0.25 * (hi - lo))
            .fold(f64::INFINITY, f64::min);
        Self {
            center: bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
            radius,
            t_center: 0.5 * (grid.t_start() + grid.t_end()),
            t_radius: 0.25 * (grid.t_end() - grid.t_start()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    pub max: f64,
    pub per_test: Vec<f64>,
}

/// `|Σ_m Σ_x u^m (φ^{m+1} − φ^m) hⁿ − τ Σ_m Σ_cells ⟨A(D_h u^m), D_h φ^m⟩ hⁿ|`
/// for each test function, the discrete form of `∬ u ∂_t φ − ⟨A(Du), Dφ⟩`.
///
/// With `steklov = Some(h)` both `u` and the flux are replaced by their
/// Steklov averages; test functions must then vanish for `t > t_end − h`.
pub fn weak_form_residual(
    u: &Field,
    params: &DegeneracyParams,
    tests: &[BumpTest],
    steklov: Option<f64>,
) -> Result<WeakResidual, DegiorgiError> {
    let grid = u.grid();
    for (idx, t) in tests.iter().enumerate() {
        let inside = t.inside(grid)
            && steklov.map_or(true, |h| t.t_center + t.t_radius <= grid.t_end() - h + 1e-12);
        if !inside {
            return Err(DegiorgiError::SupportOutsideDomain(idx));
        }
    }
    let n = grid.dim();
    let nodes = grid.node_count();
    let levels = grid.levels();
    let stencil = Stencil::new(grid);

    // Nodal flux per level, then optionally its running mean.
    let mut flux = vec![0.0; levels * nodes * n];
    for m in 0..levels {
        stencil.flux_field(u.slice(m), params, &mut flux[m * nodes * n..(m + 1) * nodes * n]);
    }
    let (values, flux) = match steklov {
        None => (u.clone(), flux),
        Some(h) => {
            let avg = steklov_average(u, h)?;
            let width = window_steps(grid, h)?.0;
            let weights = trapezoid(width);
            let mut averaged = vec![0.0; flux.len()];
            for m in 0..avg.valid_levels {
                let target = &mut averaged[m * nodes * n..(m + 1) * nodes * n];
                for (offset, w) in weights.iter().enumerate() {
                    let src = &flux[(m + offset) * nodes * n..(m + offset + 1) * nodes * n];
                    for (o, f) in target.iter_mut().zip(src) {
                        *o += w * f;
                    }
                }
            }
            (avg.field, averaged)
        }
    };

    let coords = grid.all_coords();
    let hn = grid.cell_volume();
    let tau = grid.tau();
    let mut per_test = Vec::with_capacity(tests.len());
    let mut phi = vec![0.0; levels * nodes];
    let mut grad_phi = vec![0.0; n];
    for test in tests {
        for m in 0..levels {
            let t = grid.time(m);
            for i in 0..nodes {
                phi[m * nodes + i] = test.eval(&coords[i * n..(i + 1) * n], t);
            }
        }
        let mut time_part = 0.0;
        let mut flux_part = 0.0;
        for m in 0..levels {
            let phi_m = &phi[m * nodes..(m + 1) * nodes];
            if m + 1 < levels {
                let phi_next = &phi[(m + 1) * nodes..(m + 2) * nodes];
                for ((v, a), b) in values.slice(m).iter().zip(phi_next).zip(phi_m) {
                    time_part += v * (a - b);
                }
            }
            let fm = &flux[m * nodes * n..(m + 1) * nodes * n];
            for &c in stencil.cells() {
                stencil.cell_gradient(phi_m, c, &mut grad_phi);
                flux_part += fm[c * n..(c + 1) * n]
                    .iter()
                    .zip(&grad_phi)
                    .map(|(a, g)| a * g)
                    .sum::<f64>();
            }
        }
        per_test.push(((time_part - tau * flux_part) * hn).abs());
    }
    let max = per_test.iter().copied().fold(0.0, f64::max);
    Ok(WeakResidual { max, per_test })
}
