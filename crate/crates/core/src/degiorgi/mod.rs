//! Quantitative objects of the De Giorgi iteration, rebuilt on a discrete
//! solution: truncations, cut-offs, the energy estimate, the level/cylinder
//! recursion, the fast geometric convergence lemma, and local sup bounds.
//!
//! Quadrature conventions: every integral over a cylinder is a sum over the
//! grid nodes strictly inside it, weighted by `hⁿτ`; measures are node
//! counts times `hⁿτ`; `ess sup` is the nodal maximum.

mod analysis;
mod bounds;
mod cutoff;
mod energy;
mod trace;

use std::ops::Range;

use thiserror::Error;

use crate::geometry::{snap_cylinder, Cylinder, GeometryError, Grid};
use crate::solver::Field;

pub use analysis::{
    interpolation_check, steklov_average, steklov_l2_error, weak_form_residual, BumpTest,
    InterpolationReport, SteklovAverage, WeakResidual,
};
pub use bounds::{
    giusti_check, linfty_required_constant, select_k_threshold, verify_linfty, GiustiReport,
    KChoice, LinftyVerdict,
};
pub use cutoff::{check_cutoff, cutoff_zeta, cutoff_zeta_tilde, CutoffReport};
pub use energy::{energy_estimate_report, EnergyReport};
pub use trace::{
    compute_trace, manufactured_trace, recursion_constants, refinement_stability,
    verify_recursion, IterationTrace, RecursionConstants, RecursionFit, RowChecks, Stability,
    TraceRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DegiorgiError {
    #[error("level k must be > 0, got {0}")]
    NonPositiveLevel(f64),
    #[error("level k = {k} is below the radius rho = {rho}")]
    LevelBelowRadius { k: f64, rho: f64 },
    #[error("cylinder Q_{j} contains no grid nodes; refine the grid or lower j_max")]
    EmptyCylinder { j: usize },
    #[error("cylinder does not fit inside the grid domain")]
    OutsideGrid,
    #[error("iteration overflowed at index {j}")]
    Diverged { j: usize },
    #[error("averaging window {h} is shorter than one time step {tau}")]
    WindowTooShort { h: f64, tau: f64 },
    #[error("averaging window {h} is not shorter than the time extent {extent}")]
    WindowTooLong { h: f64, extent: f64 },
    #[error("field must vanish on the lateral boundary, found |v| = {0:e}")]
    NotVanishing(f64),
    #[error("test function {0} is not compactly supported inside the domain")]
    SupportOutsideDomain(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `(u − k)₊` pointwise.
pub fn truncate_plus(field: &Field, k: f64) -> Field {
    field.map(|v| (v - k).max(0.0))
}

/// Increasing levels `k_j = k − k/2^j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelLadder {
    k: f64,
}

impl LevelLadder {
    pub fn new(k: f64) -> Result<Self, DegiorgiError> {
        if k > 0.0 && k.is_finite() {
            Ok(Self { k })
        } else {
            Err(DegiorgiError::NonPositiveLevel(k))
        }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn level(&self, j: usize) -> f64 {
        self.k - self.k / 2f64.powi(j as i32)
    }
}

/// Nodes and levels of a snapped cylinder with the quadrature weight.
#[derive(Debug, Clone)]
pub(crate) struct Window {
    pub nodes: Vec<usize>,
    pub levels: Range<usize>,
    /// `hⁿτ`.
    pub weight: f64,
}

impl Window {
    pub fn new(cyl: &Cylinder, grid: &Grid) -> Self {
        let snapped = snap_cylinder(cyl, grid);
        let empty = snapped.is_empty();
        Self {
            nodes: if empty { Vec::new() } else { snapped.spatial_nodes(grid) },
            levels: if empty { 0..0 } else { snapped.time.clone() },
            weight: grid.cell_volume() * grid.tau(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() || self.levels.is_empty()
    }

    pub fn count(&self) -> usize {
        self.nodes.len() * self.levels.len()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.weight
    }

    /// `Σ g(u)` over the window (unweighted).
    pub fn sum(&self, u: &Field, g: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for m in self.levels.clone() {
            let slice = u.slice(m);
            for &i in &self.nodes {
                acc += g(slice[i]);
            }
        }
        acc
    }

    pub fn average(&self, u: &Field, g: impl Fn(f64) -> f64) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.sum(u, g) / self.count() as f64
        }
    }

    pub fn max(&self, u: &Field, g: impl Fn(f64) -> f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for m in self.levels.clone() {
            let slice = u.slice(m);
            for &i in &self.nodes {
                best = best.max(g(slice[i]));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryKind;

    #[test]
    fn ladder_example() {
        let l = LevelLadder::new(8.0).unwrap();
        assert_eq!((l.level(0), l.level(1), l.level(2)), (0.0, 4.0, 6.0));
        assert!(LevelLadder::new(0.0).is_err());
        assert!(LevelLadder::new(-1.0).is_err());
    }

    #[test]
    fn truncation_examples() {
        let g = Grid::from_cells(vec![0.0], vec![4], 0.25, 0.1, 2, BoundaryKind::Dirichlet).unwrap();
        let five = Field::from_fn(g.clone(), |_, _| 5.0);
        assert!(truncate_plus(&five, 3.0).values().iter().all(|&v| v == 2.0));
        assert!(truncate_plus(&five, 5.0).values().iter().all(|&v| v == 0.0));
        let wave = Field::from_fn(g, |x, t| (7.0 * x[0] + 3.0 * t).sin());
        let mut sorted = wave.values().to_vec();
        sorted.sort_by(f64::total_cmp);
        let k = sorted[sorted.len() / 2];
        let plus = truncate_plus(&wave, k);
        for (pv, v) in plus.values().iter().zip(wave.values()) {
            assert_eq!(pv - (v - k), (k - v).max(0.0));
        }
    }
}
