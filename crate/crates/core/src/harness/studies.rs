//! Refinement studies and constant calibration.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{exact_error, run_experiment, solve_config};
use super::HarnessError;
use crate::degiorgi::{interpolation_check, refinement_stability, steklov_average, InterpolationReport};
use crate::solver::Field;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    pub tau: f64,
    pub steps: usize,
    pub linf: f64,
    pub l2: f64,
    /// `log₂` of the error ratio to the previous level.
    pub order_linf: Option<f64>,
    pub order_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub name: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Smallest observed `L∞` order, ignoring steps where both errors are at
    /// the exactness floor.
    pub fn min_order(&self, floor: f64) -> Option<f64> {
        self.rows
            .windows(2)
            .filter(|w| w[0].linf > floor || w[1].linf > floor)
            .filter_map(|w| w[1].order_linf)
            .reduce(f64::min)
    }

    pub fn all_exact(&self, floor: f64) -> bool {
        self.rows.iter().all(|r| r.linf <= floor)
    }

    pub fn passes(&self, min_order: f64, floor: f64) -> bool {
        self.all_exact(floor) || self.min_order(floor).is_some_and(|o| o >= min_order)
    }
}

fn order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2())
}

/// Runs `levels` resolutions, halving `h` and quartering `τ` each time, and
/// compares with the exact solution at the final time.
pub fn convergence_study(base: &ExperimentConfig, levels: u32) -> Result<ConvergenceTable, HarnessError> {
    if levels < 2 {
        return Err(HarnessError::Study("a convergence study needs at least 2 levels".into()));
    }
    base.prepare()?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels as usize);
    for level in 0..levels {
        let cfg = base.refined(level);
        let (prepared, solution) = solve_config(&cfg).map_err(|e| match e {
            HarnessError::Solver { source, .. } => HarnessError::Solver {
                context: format!("{} at level {level}", cfg.name),
                source,
            },
            other => other,
        })?;
        let err = exact_error(&prepared, &solution.field).ok_or_else(|| {
            HarnessError::Study(format!(
                "scenario `{}` has no exact solution for this equation",
                cfg.scenario.name()
            ))
        })?;
        let prev = rows.last();
        rows.push(ConvergenceRow {
            level,
            h: cfg.grid.h,
            tau: cfg.grid.tau,
            steps: prepared.grid.steps(),
            linf: err.linf,
            l2: err.l2,
            order_linf: prev.and_then(|p| order(p.linf, err.linf)),
            order_l2: prev.and_then(|p| order(p.l2, err.l2)),
        });
    }
    Ok(ConvergenceTable {
        name: base.name.clone(),
        rows,
    })
}

/// Fitted values of one constant over a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub max: f64,
    pub per_run: Vec<f64>,
    /// Some config group spreads by more than a factor 4 across resolutions.
    pub unstable: bool,
    /// Every run fitted 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub name: String,
    pub h: f64,
    pub energy: f64,
    pub recursion: f64,
    pub linfty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub runs: Vec<CalibrationRun>,
    pub energy: ConstantFit,
    pub recursion: ConstantFit,
    pub linfty: ConstantFit,
}

impl Calibration {
    pub fn stable(&self) -> bool {
        !(self.energy.unstable || self.recursion.unstable || self.linfty.unstable)
    }

    pub fn degenerate(&self) -> bool {
        self.energy.degenerate && self.recursion.degenerate && self.linfty.degenerate
    }
}

const INSTABILITY_FACTOR: f64 = 4.0;

fn fit(runs: &[CalibrationRun], value: impl Fn(&CalibrationRun) -> f64) -> ConstantFit {
    let per_run: Vec<f64> = runs.iter().map(&value).collect();
    let mut names: Vec<&str> = runs.iter().map(|r| r.name.as_str()).collect();
    names.dedup();
    let unstable = names.iter().any(|name| {
        let group: Vec<f64> = runs.iter().filter(|r| r.name == *name).map(&value).collect();
        !refinement_stability(&group, INSTABILITY_FACTOR).within
    });
    ConstantFit {
        max: per_run.iter().copied().fold(0.0, f64::max),
        degenerate: per_run.iter().all(|v| *v == 0.0),
        per_run,
        unstable,
    }
}

/// Fits the energy, recursion and sup-bound constants on every config of the
/// sweep. Runs sharing a name are treated as refinements of each other.
pub fn calibrate_constants(sweep: &[ExperimentConfig]) -> Result<Calibration, HarnessError> {
    if sweep.is_empty() {
        return Err(HarnessError::Study("calibration sweep is empty".into()));
    }
    for cfg in sweep {
        cfg.prepare()?;
    }
    let mut runs = Vec::with_capacity(sweep.len());
    for cfg in sweep {
        let r = run_experiment(cfg)?.report;
        runs.push(CalibrationRun {
            name: cfg.name.clone(),
            h: cfg.grid.h,
            energy: r.energy_constant,
            recursion: r.recursion.c_tilde,
            linfty: r.linfty_required_constant,
        });
    }
    Ok(Calibration {
        energy: fit(&runs, |r| r.energy),
        recursion: fit(&runs, |r| r.recursion),
        linfty: fit(&runs, |r| r.linfty),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteklovStudy {
    /// Errors are measured on `t_min <= t <= t_max` for every window.
    pub t_min: f64,
    pub t_max: f64,
    pub windows: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl SteklovStudy {
    pub fn min_order(&self) -> Option<f64> {
        self.orders.iter().copied().reduce(f64::min)
    }

    /// Every distance at or below `floor` (a time-independent field), or
    /// every observed order at least `min_order`.
    pub fn passes(&self, min_order: f64, floor: f64) -> bool {
        self.errors.iter().all(|e| *e <= floor) || self.orders.iter().all(|o| *o >= min_order)
    }
}

fn middle_l2_distance(u: &Field, h: f64, t_min: f64, t_max: f64) -> Result<f64, HarnessError> {
    let avg = steklov_average(u, h)?;
    let grid = u.grid();
    let mut acc = 0.0;
    for m in 0..avg.valid_levels {
        let t = grid.time(m);
        if t < t_min - 1e-12 || t > t_max + 1e-12 {
            continue;
        }
        for (a, v) in avg.field.slice(m).iter().zip(u.slice(m)) {
            acc += (a - v) * (a - v);
        }
    }
    Ok((acc * grid.cell_volume() * grid.tau()).sqrt())
}

/// `‖[u]_h − u‖` on the middle half of the time interval for windows
/// `2^i τ`, from the largest one not above an eighth of the time extent down
/// to `τ`, at most `count` of them.
pub fn steklov_study(u: &Field, count: usize) -> Result<SteklovStudy, HarnessError> {
    let grid = u.grid();
    let extent = grid.t_end() - grid.t_start();
    let t_min = grid.t_start() + 0.25 * extent;
    let t_max = grid.t_start() + 0.75 * extent;
    let tau = grid.tau();
    let mut top = 0;
    while tau * 2f64.powi(top + 1) <= extent / 8.0 * (1.0 + 1e-12) {
        top += 1;
    }
    let mut windows = Vec::new();
    let mut errors = Vec::new();
    for i in (0..=top).rev().take(count) {
        let h = tau * 2f64.powi(i);
        errors.push(middle_l2_distance(u, h, t_min, t_max)?);
        windows.push(h);
    }
    if windows.len() < 2 {
        return Err(HarnessError::Study(
            "too few time steps for two distinct averaging windows".into(),
        ));
    }
    let orders = windows
        .windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    Ok(SteklovStudy {
        t_min,
        t_max,
        windows,
        errors,
        orders,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationStudy {
    pub r: f64,
    pub s: f64,
    /// One report per resolution.
    pub reports: Vec<InterpolationReport>,
    /// `fitted_C` of `λu` over `fitted_C` of `u`, for λ in `scales`.
    pub scales: Vec<f64>,
    pub scaling_ratios: Vec<f64>,
    pub spread: f64,
}

impl InterpolationStudy {
    pub fn scaling_exact(&self, tol: f64) -> bool {
        self.scaling_ratios.iter().all(|r| (r - 1.0).abs() <= tol)
    }

    pub fn stable(&self, factor: f64) -> bool {
        self.reports.iter().all(|r| !r.degenerate) && self.spread <= factor
    }
}

/// Interpolation check with `s = p` on the solution at `levels` resolutions.
pub fn interpolation_study(base: &ExperimentConfig, r: f64, levels: u32) -> Result<InterpolationStudy, HarnessError> {
    base.prepare()?;
    let s = base.equation.p();
    let scales = vec![2.0, -0.5, 1e3];
    let mut reports = Vec::new();
    let mut scaling_ratios = Vec::new();
    for level in 0..levels.max(1) {
        let (_, solution) = solve_config(&base.refined(level))?;
        let u = &solution.field;
        let report = interpolation_check(u, r, s)?;
        if level == 0 {
            for &lambda in &scales {
                let scaled = interpolation_check(&u.map(|v| lambda * v), r, s)?;
                scaling_ratios.push(scaled.fitted_c / report.fitted_c);
            }
        }
        reports.push(report);
    }
    let fitted: Vec<f64> = reports.iter().map(|r| r.fitted_c).collect();
    Ok(InterpolationStudy {
        r,
        s,
        spread: refinement_stability(&fitted, f64::INFINITY).spread,
        reports,
        scales,
        scaling_ratios,
    })
}
