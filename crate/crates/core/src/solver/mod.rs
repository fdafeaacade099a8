//! Time marching for the degenerate equation on a uniform grid.
//!
//! The implicit scheme treats each step as the convex minimization
//!
//! ```text
//! J(v) = hⁿ [ Σ_nodes (v − prev)²/(2τ) + Σ_cells E(D_h v) − Σ_nodes f v ]
//! ```
//!
//! over the free nodes, with `E` the orthotropic or isotropic energy
//! density. Its stationarity condition is the backward Euler step
//! `(v − prev)/τ = div_h A(D_h v) + f`. The explicit scheme evaluates the
//! same right-hand side at the previous level.

mod field;
mod ops;
pub mod scenario;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flux::DegeneracyParams;
use crate::geometry::{BoundaryKind, Grid};

pub use field::Field;
pub use ops::{discrete_divergence, discrete_gradient, CellGradient, Stencil};
pub use scenario::{Scenario, ScenarioError, ScenarioSpec, SpaceTimeFn};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("inner solver stopped after {iterations} iterations with residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("explicit step violates the CFL bound: tau must be <= {tau_max:e}")]
    CflViolation { tau_max: f64 },
    #[error("time step {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: Box<SolverError>,
    },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scheme {
    Implicit {
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "default_max_iterations")]
        max_iterations: usize,
    },
    Explicit {
        #[serde(default = "default_cfl")]
        cfl_safety: f64,
    },
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

fn default_cfl() -> f64 {
    0.9
}

impl Default for Scheme {
    fn default() -> Self {
        Self::Implicit {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl Scheme {
    pub fn explicit() -> Self {
        Self::Explicit {
            cfl_safety: default_cfl(),
        }
    }

    pub fn is_explicit(&self) -> bool {
        matches!(self, Self::Explicit { .. })
    }
}

/// Everything a run needs: grid, equation, data, and stepping scheme.
#[derive(Clone)]
pub struct Problem {
    pub grid: Grid,
    pub params: DegeneracyParams,
    pub initial: Vec<f64>,
    /// Dirichlet data; `None` means homogeneous. Ignored on periodic grids.
    pub boundary: Option<SpaceTimeFn>,
    pub source: Option<SpaceTimeFn>,
    pub scheme: Scheme,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("grid", &self.grid)
            .field("params", &self.params)
            .field("boundary", &self.boundary.is_some())
            .field("source", &self.source.is_some())
            .field("scheme", &self.scheme)
            .finish()
    }
}

impl Problem {
    pub fn new(grid: Grid, params: DegeneracyParams, initial: Vec<f64>, scheme: Scheme) -> Self {
        Self {
            grid,
            params,
            initial,
            boundary: None,
            source: None,
            scheme,
        }
    }

    pub fn from_scenario(
        grid: Grid,
        params: DegeneracyParams,
        scenario: &Scenario,
        scheme: Scheme,
    ) -> Self {
        let initial = scenario.initial_slice(&grid);
        Self {
            grid,
            params,
            initial,
            boundary: Some(scenario.boundary.clone()),
            source: scenario.source.clone(),
            scheme,
        }
    }

    pub fn with_boundary(mut self, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary = Some(Arc::new(f));
        self
    }

    pub fn with_source(mut self, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Some(Arc::new(f));
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Same problem with `(u₀, g, f) → (−u₀, −g, −f)`.
    pub fn negated(&self) -> Self {
        let neg = |f: &SpaceTimeFn| -> SpaceTimeFn {
            let f = f.clone();
            Arc::new(move |x: &[f64], t: f64| -f(x, t))
        };
        Self {
            grid: self.grid.clone(),
            params: self.params.clone(),
            initial: self.initial.iter().map(|v| -v).collect(),
            boundary: self.boundary.as_ref().map(neg),
            source: self.source.as_ref().map(neg),
            scheme: self.scheme,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidProblem(msg));
        if let Err(e) = self.params.validate() {
            return bad(e.to_string());
        }
        if let Some(n) = self.params.required_dim() {
            if n != self.grid.dim() {
                return bad(format!(
                    "{} thresholds given for a {}-dimensional grid",
                    n,
                    self.grid.dim()
                ));
            }
        }
        if self.initial.len() != self.grid.node_count() {
            return bad(format!(
                "initial data has {} values, grid has {} nodes",
                self.initial.len(),
                self.grid.node_count()
            ));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return bad("initial data is not finite".into());
        }
        match self.scheme {
            Scheme::Implicit {
                tolerance,
                max_iterations,
            } => {
                if !(tolerance > 0.0 && tolerance.is_finite()) {
                    return bad(format!("tolerance must be > 0, got {tolerance}"));
                }
                if max_iterations == 0 {
                    return bad("max_iterations must be >= 1".into());
                }
            }
            Scheme::Explicit { cfl_safety } => {
                if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
                    return bad(format!("cfl_safety must lie in (0, 1], got {cfl_safety}"));
                }
            }
        }
        Ok(())
    }
}

/// Per-step record emitted by [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub iterations: usize,
    pub residual: f64,
    pub objective_start: f64,
    pub objective_end: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// `‖∇J‖_∞ / hⁿ` at the returned iterate.
    pub residual: f64,
    pub objective_start: f64,
    pub objective_end: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: Field,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Reusable buffers and data for one time step.
struct StepContext<'a> {
    problem: &'a Problem,
    stencil: Stencil,
    coords: Vec<f64>,
    flux: Vec<f64>,
    div: Vec<f64>,
    source: Vec<f64>,
}

impl<'a> StepContext<'a> {
    fn new(problem: &'a Problem) -> Self {
        let grid = &problem.grid;
        let nodes = grid.node_count();
        Self {
            problem,
            stencil: Stencil::new(grid),
            coords: grid.all_coords(),
            flux: vec![0.0; nodes * grid.dim()],
            div: vec![0.0; nodes],
            source: vec![0.0; nodes],
        }
    }

    fn coord(&self, node: usize) -> &[f64] {
        let n = self.stencil.dim();
        &self.coords[node * n..(node + 1) * n]
    }

    fn load_source(&mut self, t: f64) {
        match &self.problem.source {
            Some(f) => {
                for node in 0..self.source.len() {
                    let n = self.stencil.dim();
                    self.source[node] = f(&self.coords[node * n..(node + 1) * n], t);
                }
            }
            None => self.source.iter_mut().for_each(|s| *s = 0.0),
        }
    }

    /// Overwrites the Dirichlet boundary nodes of `v` with data at time `t`.
    fn pin_boundary(&self, v: &mut [f64], t: f64) {
        if self.problem.grid.boundary() == BoundaryKind::Periodic {
            return;
        }
        for (node, value) in v.iter_mut().enumerate() {
            if !self.stencil.is_free(node) {
                *value = match &self.problem.boundary {
                    Some(g) => g(self.coord(node), t),
                    None => 0.0,
                };
            }
        }
    }

    /// Objective without the `hⁿ` weight.
    fn objective(&self, v: &[f64], prev: &[f64]) -> f64 {
        let tau = self.problem.grid.tau();
        let mut kinetic = 0.0;
        let mut work = 0.0;
        for ((vi, pi), fi) in v.iter().zip(prev).zip(&self.source) {
            let d = vi - pi;
            kinetic += d * d;
            work += fi * vi;
        }
        kinetic / (2.0 * tau) + self.stencil.energy_sum(v, &self.problem.params) - work
    }

    /// Writes `(v − prev)/τ − div_h A(D_h v) − f` at free nodes (zero
    /// elsewhere) and returns its max norm.
    fn residual(&mut self, v: &[f64], prev: &[f64], out: &mut [f64]) -> f64 {
        let tau = self.problem.grid.tau();
        self.stencil.flux_field(v, &self.problem.params, &mut self.flux);
        let mut norm = 0.0_f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        for &node in self.stencil.free() {
            let r = (v[node] - prev[node]) / tau
                - self.stencil.divergence_at(&self.flux, node)
                - self.source[node];
            out[node] = r;
            norm = norm.max(r.abs());
        }
        norm
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `J(v)` for the step `prev → v` ending at time `t_new`, including the
/// `hⁿ` weight. Boundary values of `v` are used as given.
pub fn step_objective(problem: &Problem, v: &[f64], prev: &[f64], t_new: f64) -> f64 {
    let mut ctx = StepContext::new(problem);
    ctx.load_source(t_new);
    ctx.objective(v, prev) * problem.grid.cell_volume()
}

/// Residual `(v − prev)/τ − div_h A(D_h v) − f(t_new)` at every node (zero
/// at pinned boundary nodes). Equals `∇J / hⁿ`.
pub fn step_residual(problem: &Problem, v: &[f64], prev: &[f64], t_new: f64) -> Vec<f64> {
    let mut ctx = StepContext::new(problem);
    ctx.load_source(t_new);
    let mut out = vec![0.0; v.len()];
    ctx.residual(v, prev, &mut out);
    out
}

const HISTORY: usize = 10;
const ARMIJO: f64 = 1e-4;

/// One backward Euler step, `prev` at time `t_new − τ`.
///
/// Minimizes `J` by gradient descent with Barzilai–Borwein trial steps and
/// a nonmonotone backtracking line search; stops once the scaled gradient
/// satisfies `‖∇J‖_∞/hⁿ <= tolerance · max(1, ‖prev‖_∞)`.
pub fn step_implicit(problem: &Problem, prev: &[f64], t_new: f64) -> Result<StepOutcome, SolverError> {
    let (tolerance, max_iterations) = match problem.scheme {
        Scheme::Implicit {
            tolerance,
            max_iterations,
        } => (tolerance, max_iterations),
        Scheme::Explicit { .. } => {
            return Err(SolverError::InvalidProblem(
                "step_implicit called with an explicit scheme".into(),
            ))
        }
    };
    let mut ctx = StepContext::new(problem);
    ctx.load_source(t_new);
    step_implicit_with(&mut ctx, prev, t_new, tolerance, max_iterations)
}

fn step_implicit_with(
    ctx: &mut StepContext<'_>,
    prev: &[f64],
    t_new: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<StepOutcome, SolverError> {
    let tau = ctx.problem.grid.tau();
    let weight = ctx.problem.grid.cell_volume();
    let target = tolerance * max_abs(prev).max(1.0);
    let nodes = prev.len();

    let mut x = prev.to_vec();
    ctx.pin_boundary(&mut x, t_new);
    let mut g = vec![0.0; nodes];
    let mut g_new = vec![0.0; nodes];
    let mut trial = vec![0.0; nodes];

    let objective_start = ctx.objective(&x, prev);
    let mut fx = objective_start;
    let mut residual = ctx.residual(&x, prev, &mut g);
    let mut history = [f64::NEG_INFINITY; HISTORY];
    history[0] = fx;
    let mut step = tau;
    let mut iterations = 0;

    while residual > target {
        if iterations >= max_iterations {
            return Err(SolverError::NonConvergence {
                iterations,
                residual,
            });
        }
        iterations += 1;
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-13 * reference.abs().max(fx.abs());
        let gg = dot(&g, &g);
        let mut alpha = step;
        let f_trial = loop {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
                *t = xi - alpha * gi;
            }
            let f_trial = ctx.objective(&trial, prev);
            if f_trial <= reference - ARMIJO * alpha * gg + slack {
                break f_trial;
            }
            alpha *= 0.5;
            if alpha < tau * 1e-30 {
                return Err(SolverError::NonConvergence {
                    iterations,
                    residual,
                });
            }
        };
        residual = ctx.residual(&trial, prev, &mut g_new);

        let mut ss = 0.0;
        let mut sy = 0.0;
        let mut yy = 0.0;
        for &node in ctx.stencil.free() {
            let s = trial[node] - x[node];
            let y = g_new[node] - g[node];
            ss += s * s;
            sy += s * y;
            yy += y * y;
        }
        step = if sy > 0.0 {
            let bb = if iterations % 2 == 1 { ss / sy } else { sy / yy };
            bb.min(tau)
        } else {
            tau
        };

        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_trial;
        history[iterations % HISTORY] = fx;
    }

    Ok(StepOutcome {
        values: x,
        iterations,
        residual,
        objective_start: objective_start * weight,
        objective_end: fx * weight,
    })
}

/// Largest stable explicit step for data with maximal gradient component `m`.
pub fn explicit_tau_max(grid: &Grid, params: &DegeneracyParams, m: f64, cfl_safety: f64) -> f64 {
    let lip = params.flux_lipschitz(m);
    if lip == 0.0 {
        f64::INFINITY
    } else {
        cfl_safety * grid.h() * grid.h() / (2.0 * grid.dim() as f64 * lip)
    }
}

/// One forward Euler step from `prev` at time `t_prev`.
pub fn step_explicit(problem: &Problem, prev: &[f64], t_prev: f64) -> Result<Vec<f64>, SolverError> {
    let mut ctx = StepContext::new(problem);
    step_explicit_with(&mut ctx, prev, t_prev)
}

fn step_explicit_with(ctx: &mut StepContext<'_>, prev: &[f64], t_prev: f64) -> Result<Vec<f64>, SolverError> {
    let cfl_safety = match ctx.problem.scheme {
        Scheme::Explicit { cfl_safety } => cfl_safety,
        Scheme::Implicit { .. } => {
            return Err(SolverError::InvalidProblem(
                "step_explicit called with an implicit scheme".into(),
            ))
        }
    };
    let grid = &ctx.problem.grid;
    let tau = grid.tau();
    let m = ctx
        .stencil
        .flux_field(prev, &ctx.problem.params, &mut ctx.flux);
    let tau_max = explicit_tau_max(grid, &ctx.problem.params, m, cfl_safety);
    if tau > tau_max {
        return Err(SolverError::CflViolation { tau_max });
    }
    ctx.load_source(t_prev);
    ctx.stencil.divergence(&ctx.flux, &mut ctx.div);
    let mut next = prev.to_vec();
    for &node in ctx.stencil.free() {
        next[node] = prev[node] + tau * (ctx.div[node] + ctx.source[node]);
    }
    ctx.pin_boundary(&mut next, t_prev + tau);
    Ok(next)
}

/// Marches the problem over all time levels of its grid.
pub fn solve(problem: &Problem) -> Result<Solution, SolverError> {
    problem.validate()?;
    let grid = problem.grid.clone();
    let mut field = Field::zeros(grid.clone());
    field.slice_mut(0).copy_from_slice(&problem.initial);
    let mut ctx = StepContext::new(problem);
    let mut diagnostics = Vec::with_capacity(grid.steps());
    for m in 0..grid.steps() {
        let prev = field.slice(m).to_vec();
        let t_prev = grid.time(m);
        let t_new = grid.time(m + 1);
        let wrap = |e: SolverError| SolverError::Step {
            index: m + 1,
            source: Box::new(e),
        };
        let outcome = match problem.scheme {
            Scheme::Implicit {
                tolerance,
                max_iterations,
            } => {
                ctx.load_source(t_new);
                step_implicit_with(&mut ctx, &prev, t_new, tolerance, max_iterations).map_err(wrap)?
            }
            Scheme::Explicit { .. } => {
                let values = step_explicit_with(&mut ctx, &prev, t_prev).map_err(wrap)?;
                ctx.load_source(t_new);
                let start = ctx.objective(&prev, &prev) * grid.cell_volume();
                let end = ctx.objective(&values, &prev) * grid.cell_volume();
                StepOutcome {
                    values,
                    iterations: 0,
                    residual: 0.0,
                    objective_start: start,
                    objective_end: end,
                }
            }
        };
        let (min, max) = outcome
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(min.is_finite() && max.is_finite()) {
            return Err(wrap(SolverError::InvalidProblem("solution became non-finite".into())));
        }
        field.slice_mut(m + 1).copy_from_slice(&outcome.values);
        diagnostics.push(StepDiagnostics {
            step: m + 1,
            iterations: outcome.iterations,
            residual: outcome.residual,
            objective_start: outcome.objective_start,
            objective_end: outcome.objective_end,
            min,
            max,
        });
    }
    Ok(Solution { field, diagnostics })
}

/// `Σ_cells E(D_h u) hⁿ` at each level in `levels`.
pub fn weak_energy(
    field: &Field,
    params: &DegeneracyParams,
    levels: std::ops::Range<usize>,
) -> Vec<f64> {
    let grid = field.grid();
    let stencil = Stencil::new(grid);
    let weight = grid.cell_volume();
    levels
        .map(|m| stencil.energy_sum(field.slice(m), params) * weight)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(cells: usize, steps: usize) -> Grid {
        Grid::from_cells(vec![0.0], vec![cells], 0.25, 0.05, steps, BoundaryKind::Dirichlet).unwrap()
    }

    #[test]
    fn steady_state_is_fixed_exactly() {
        let g = line(8, 5);
        let params = DegeneracyParams::orthotropic(3.0, vec![1.0]).unwrap();
        let u0: Vec<f64> = (0..g.node_count()).map(|i| 0.7 * g.coord(0, i)).collect();
        let problem = Problem::new(g, params, u0.clone(), Scheme::default())
            .with_boundary(|x, _| 0.7 * x[0]);
        let sol = solve(&problem).unwrap();
        for m in 0..=5 {
            assert_eq!(sol.field.slice(m), &u0[..]);
        }
        assert!(sol.diagnostics.iter().all(|d| d.iterations == 0));
    }

    #[test]
    fn objective_vanishes_at_degenerate_rest() {
        let g = line(4, 1);
        let params = DegeneracyParams::orthotropic(2.0, vec![1.0]).unwrap();
        let u: Vec<f64> = (0..g.node_count()).map(|i| 0.3 * g.coord(0, i)).collect();
        let problem = Problem::new(g, params, u.clone(), Scheme::default());
        assert_eq!(step_objective(&problem, &u, &u, 0.05), 0.0);
    }

    #[test]
    fn explicit_rejects_large_step() {
        let g = Grid::from_cells(vec![0.0], vec![8], 0.25, 0.1, 1, BoundaryKind::Dirichlet).unwrap();
        let params = DegeneracyParams::orthotropic(2.0, vec![0.0]).unwrap();
        let u0: Vec<f64> = (0..g.node_count()).map(|i| (g.coord(0, i) * 1.3).sin()).collect();
        let problem = Problem::new(g, params, u0.clone(), Scheme::explicit());
        match step_explicit(&problem, &u0, 0.0) {
            Err(SolverError::CflViolation { tau_max }) => {
                assert!((tau_max - 0.9 * 0.0625 / 2.0).abs() < 1e-15)
            }
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }

    #[test]
    fn scheme_json_defaults() {
        let s: Scheme = serde_json::from_str(r#"{"kind":"implicit"}"#).unwrap();
        assert_eq!(s, Scheme::default());
        let e: Scheme = serde_json::from_str(r#"{"kind":"explicit","cfl_safety":0.5}"#).unwrap();
        assert_eq!(e, Scheme::Explicit { cfl_safety: 0.5 });
    }
}
