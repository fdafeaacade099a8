use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Prepared};
use super::HarnessError;
use crate::degiorgi::{
    compute_trace, cutoff_zeta, energy_estimate_report, linfty_required_constant,
    select_k_threshold, verify_linfty, verify_recursion, weak_form_residual, BumpTest,
    EnergyReport, IterationTrace, KChoice, LevelLadder, LinftyVerdict, RecursionFit, TraceRow,
    WeakResidual,
};
use crate::geometry::Grid;
use crate::solver::{solve, Field, Solution, StepDiagnostics};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub steps: usize,
    pub nodes: usize,
    pub total_iterations: usize,
    pub max_residual: f64,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl SolverSummary {
    pub fn from_solution(solution: &Solution) -> Self {
        Self {
            steps: solution.diagnostics.len(),
            nodes: solution.field.grid().node_count(),
            total_iterations: solution.diagnostics.iter().map(|d| d.iterations).sum(),
            max_residual: solution.diagnostics.iter().map(|d| d.residual).fold(0.0, f64::max),
            diagnostics: solution.diagnostics.clone(),
        }
    }
}

/// Distance to the exact solution at the final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub linf: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    /// Energy terms are finite and nonnegative, and the fitted constant stays
    /// below the configured one when given.
    pub energy: bool,
    /// Per-row inequalities of the trace, and the recursion constant when given.
    pub trace: bool,
    pub linfty: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_residual: Option<bool>,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        self.energy && self.trace && self.linfty && self.weak_residual.unwrap_or(true)
    }
}

/// Deterministic body of a run; wall-clock timings live in [`Timings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub artifact_version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub solver: SolverSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_error: Option<ErrorNorms>,
    pub level: KChoice,
    pub energy: Vec<EnergyReport>,
    /// Largest fitted constant over `energy`.
    pub energy_constant: f64,
    pub trace: IterationTrace,
    pub recursion: RecursionFit,
    pub linfty: LinftyVerdict,
    /// Smallest constant for which the sup bound holds on this run.
    pub linfty_required_constant: f64,
    /// Absent when the scenario carries a source term.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_residual: Option<WeakResidual>,
    pub verdicts: Verdicts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub solve_seconds: f64,
    pub analysis_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub timings: Timings,
    pub solution: Solution,
}

pub fn solve_config(cfg: &ExperimentConfig) -> Result<(Prepared, Solution), HarnessError> {
    let prepared = cfg.prepare()?;
    let solution = solve(&prepared.problem(cfg.scheme)).map_err(|source| HarnessError::Solver {
        context: cfg.name.clone(),
        source,
    })?;
    Ok((prepared, solution))
}

pub fn exact_error(prepared: &Prepared, field: &Field) -> Option<ErrorNorms> {
    let exact = prepared.scenario.exact.as_ref()?;
    let grid = field.grid();
    let last = grid.steps();
    let t = grid.time(last);
    let mut linf = 0.0_f64;
    let mut sq = 0.0;
    for (i, v) in field.slice(last).iter().enumerate() {
        let e = (v - exact(&grid.node_coords(i), t)).abs();
        linf = linf.max(e);
        sq += e * e;
    }
    Some(ErrorNorms {
        linf,
        l2: (sq * grid.cell_volume()).sqrt(),
    })
}

/// Bump test functions: one centered, one shifted toward the upper corner.
pub fn weak_tests(grid: &Grid) -> Vec<BumpTest> {
    let centered = BumpTest::centered(grid);
    let mut shifted = centered.clone();
    let widths: Vec<f64> = grid.spatial_bounds().iter().map(|(lo, hi)| hi - lo).collect();
    for (c, w) in shifted.center.iter_mut().zip(&widths) {
        *c += 0.1 * w;
    }
    shifted.radius *= 0.6;
    vec![centered, shifted]
}

/// Energy estimate at each level `k_{j+1}`, `j = 0..=j_max`, on `Q_0` with
/// the widest cut-off `ζ_0`.
pub fn energy_reports(
    u: &Field,
    prepared: &Prepared,
    ladder: &LevelLadder,
    j_max: usize,
) -> Result<Vec<EnergyReport>, HarnessError> {
    let zeta = cutoff_zeta(&prepared.family, 0, u.grid());
    let cyl = prepared.family.q(0);
    (0..=j_max)
        .map(|j| Ok(energy_estimate_report(u, ladder.level(j + 1), &cyl, &zeta, &prepared.params)?))
        .collect()
}

/// Solves and runs every check on the solution.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let start = Instant::now();
    let (prepared, solution) = solve_config(cfg)?;
    let solved = Instant::now();
    let u = &solution.field;
    let sigma = cfg.cylinder.sigma;
    let j_max = cfg.ladder.j_max;
    let c_linfty = cfg.constants.linfty;

    let level = select_k_threshold(u, &prepared.cylinder, sigma, &prepared.params, c_linfty)?;
    let ladder = match prepared.ladder {
        Some(l) => l,
        None => LevelLadder::new(level.k)?,
    };
    let energy = energy_reports(u, &prepared, &ladder, j_max)?;
    let energy_constant = energy.iter().map(|r| r.fitted_c).fold(0.0, f64::max);
    let trace = compute_trace(u, &prepared.family, &ladder, &prepared.params, j_max)?;
    let recursion = verify_recursion(&trace, &trace.constants);
    let linfty = verify_linfty(u, &prepared.cylinder, sigma, &prepared.params, c_linfty)?;
    let required = linfty_required_constant(u, &prepared.cylinder, sigma, &prepared.params)?;
    let weak_residual = match prepared.scenario.source {
        Some(_) => None,
        None => Some(weak_form_residual(u, &prepared.params, &weak_tests(u.grid()), None)?),
    };

    let energy_ok = energy.iter().all(|r| {
        [r.sup_term, r.grad_term, r.time_term, r.space_term]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }) && cfg.constants.energy.map_or(true, |c| energy_constant <= c);
    let verdicts = Verdicts {
        energy: energy_ok,
        trace: trace.all_checks_hold()
            && cfg.constants.recursion.map_or(true, |c| recursion.c_tilde <= c),
        linfty: linfty.pass,
        weak_residual: match (&weak_residual, cfg.tolerances.weak_residual) {
            (Some(w), Some(tol)) => Some(w.max <= tol),
            _ => None,
        },
    };
    let report = RunReport {
        artifact_version: ARTIFACT_VERSION.to_string(),
        config_sha256: cfg.sha256(),
        config: cfg.clone(),
        solver: SolverSummary::from_solution(&solution),
        exact_error: exact_error(&prepared, u),
        level,
        energy,
        energy_constant,
        trace,
        recursion,
        linfty,
        linfty_required_constant: required,
        weak_residual,
        verdicts,
    };
    let done = Instant::now();
    Ok(RunOutput {
        report,
        timings: Timings {
            solve_seconds: (solved - start).as_secs_f64(),
            analysis_seconds: (done - solved).as_secs_f64(),
            total_seconds: (done - start).as_secs_f64(),
        },
        solution,
    })
}

fn io_error(context: String) -> impl FnOnce(std::io::Error) -> HarnessError {
    move |source| HarnessError::Io { context, source }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(io_error(format!("writing {}", path.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_error(format!("writing {}", path.display())))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>, HarnessError> {
    read_csv(path)
}

pub fn read_energy_csv(path: &Path) -> Result<Vec<EnergyReport>, HarnessError> {
    read_csv(path)
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_error(format!("creating {}", dir.display())))
}

/// Writes `report.json`, `timings.json`, `trace.csv` and `energy.csv`.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    write_json(&dir.join("report.json"), &output.report)?;
    write_json(&dir.join("timings.json"), &output.timings)?;
    write_csv(&dir.join("trace.csv"), &output.report.trace.rows)?;
    write_csv(&dir.join("energy.csv"), &output.report.energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::preset;

    #[test]
    fn steady_preset_is_quiet() {
        let out = run_experiment(&preset("degenerate-steady").unwrap()).unwrap();
        let r = &out.report;
        assert!(r.verdicts.all_pass(), "{:?}", r.verdicts);
        assert!(r.linfty.pass);
        for e in &r.energy {
            assert_eq!((e.sup_term, e.grad_term, e.time_term, e.space_term), (0.0, 0.0, 0.0, 0.0));
        }
        assert!(r.exact_error.unwrap().linf <= 1e-12);
        assert_eq!(r.solver.total_iterations, 0);
    }

    #[test]
    fn csv_files_round_trip() {
        let cfg = preset("heat-ms").unwrap();
        let out = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &out).unwrap();
        assert_eq!(read_trace_csv(&dir.path().join("trace.csv")).unwrap(), out.report.trace.rows);
        assert_eq!(read_energy_csv(&dir.path().join("energy.csv")).unwrap(), out.report.energy);
        let header = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert!(header.starts_with("j,rho_j,theta_j,k_j,Y_j,A_meas,Z_j,predicted_Y_next\n"));
        let header = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
        assert!(header.starts_with("k,sup_term,grad_term,time_term,space_term,fitted_C\n"));
    }
}
