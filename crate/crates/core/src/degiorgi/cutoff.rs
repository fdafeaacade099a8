//! Piecewise linear cut-off functions for the shrinking cylinders.
//!
//! `ζ_j = ζ_space · ζ_time` ramps linearly in max-norm distance from 0 on
//! the lateral boundary of `Q_j` to 1 on `Q̃_j`, and linearly in time from 0
//! at the bottom of `Q_j` to 1 at the bottom of `Q̃_j`. The ramp widths are
//! `(1−σ)ρ/2^{j+2}` and `(1−σ)θ/2^{j+2}`, so the slope bounds
//! `2^{j+2}/((1−σ)ρ)` and `2^{j+2}/((1−σ)θ)` are attained.

use serde::{Deserialize, Serialize};

use crate::geometry::{snap_cylinder, Grid, ShrinkFamily};
use crate::solver::Field;

fn max_norm_distance(x: &[f64], center: &[f64]) -> f64 {
    x.iter()
        .zip(center)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn ramp(gap: f64, width: f64) -> f64 {
    (gap.max(0.0) / width).min(1.0)
}

pub fn cutoff_zeta(f: &ShrinkFamily, j: usize, grid: &Grid) -> Field {
    let rho_j = f.rho_j(j);
    let width_x = rho_j - f.rho_tilde(j);
    let bottom = f.t0 - f.theta_j(j);
    let width_t = f.theta_j(j) - f.theta_tilde(j);
    let center = f.vertex.clone();
    Field::from_fn(grid.clone(), move |x, t| {
        let space = ramp(rho_j - max_norm_distance(x, &center), width_x);
        let time = ramp(t - bottom, width_t);
        space * time
    })
}

/// Spatial cut-off `ζ̃_j`: 1 on `K_{ρ_{j+1}}`, 0 on the lateral boundary of
/// `K_{ρ̃_j}`. Node-indexed.
pub fn cutoff_zeta_tilde(f: &ShrinkFamily, j: usize, grid: &Grid) -> Vec<f64> {
    let outer = f.rho_tilde(j);
    let width = outer - f.rho_j(j + 1);
    (0..grid.node_count())
        .map(|i| ramp(outer - max_norm_distance(&grid.node_coords(i), &f.vertex), width))
        .collect()
}

/// Pointwise checks of the cut-off constraints on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub min: f64,
    pub max: f64,
    /// Largest `|ζ|` at nodes outside the open cylinder (lateral or below).
    pub outside_max: f64,
    /// Smallest `ζ` at nodes of `Q̃_j`.
    pub inner_min: f64,
    /// Largest per-axis difference quotient.
    pub space_slope: f64,
    pub space_bound: f64,
    pub time_slope_min: f64,
    pub time_slope_max: f64,
    pub time_bound: f64,
}

impl CutoffReport {
    pub fn constraints_hold(&self) -> bool {
        let slack = 1.0 + 1e-9;
        self.min >= 0.0
            && self.max <= 1.0
            && self.outside_max == 0.0
            && self.inner_min == 1.0
            && self.space_slope <= self.space_bound * slack
            && self.time_slope_min >= 0.0
            && self.time_slope_max <= self.time_bound * slack
    }

    pub fn space_attainment(&self) -> f64 {
        self.space_slope / self.space_bound
    }

    pub fn time_attainment(&self) -> f64 {
        self.time_slope_max / self.time_bound
    }
}

/// Checks `zeta` against the constraints for `Q_j` of `f` by discrete
/// differencing over the time levels up to the top of the cylinder.
///
/// Space slopes are per-axis difference quotients; the Euclidean norm of
/// the forward-difference vector may exceed the bound by up to `√n` at the
/// corners of the max-norm ramp, where two axes change at once.
pub fn check_cutoff(f: &ShrinkFamily, j: usize, zeta: &Field) -> CutoffReport {
    let grid = zeta.grid();
    let n = grid.dim();
    let coords = grid.all_coords();
    let rho_j = f.rho_j(j);
    let bottom = f.t0 - f.theta_j(j);
    let top_level = (0..grid.levels())
        .take_while(|&m| grid.time(m) <= f.t0 + 1e-12 * (1.0 + f.t0.abs()))
        .last()
        .unwrap_or(0);

    let mut report = CutoffReport {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        outside_max: 0.0,
        inner_min: f64::INFINITY,
        space_slope: 0.0,
        space_bound: 2f64.powi(j as i32 + 2) / ((1.0 - f.sigma) * f.rho),
        time_slope_min: f64::INFINITY,
        time_slope_max: f64::NEG_INFINITY,
        time_bound: 2f64.powi(j as i32 + 2) / ((1.0 - f.sigma) * f.theta),
    };

    for m in 0..=top_level {
        let t = grid.time(m);
        let slice = zeta.slice(m);
        for (i, &z) in slice.iter().enumerate() {
            report.min = report.min.min(z);
            report.max = report.max.max(z);
            let x = &coords[i * n..(i + 1) * n];
            if max_norm_distance(x, &f.vertex) >= rho_j || t <= bottom {
                report.outside_max = report.outside_max.max(z.abs());
            }
            for axis in 0..n {
                if let Some(next) = grid.forward(i, axis) {
                    let q = (slice[next] - z).abs() / grid.h();
                    report.space_slope = report.space_slope.max(q);
                }
            }
            if m < top_level {
                let q = (zeta.at(m + 1, i) - z) / grid.tau();
                report.time_slope_min = report.time_slope_min.min(q);
                report.time_slope_max = report.time_slope_max.max(q);
            }
        }
    }

    let inner = snap_cylinder(&f.q_tilde(j), grid);
    if !inner.is_empty() {
        let nodes = inner.spatial_nodes(grid);
        for m in inner.time.clone() {
            for &i in &nodes {
                report.inner_min = report.inner_min.min(zeta.at(m, i));
            }
        }
    }
    report
}
