use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use orthodeg::degiorgi::{giusti_check, DegiorgiError};
use orthodeg::harness::{
    calibrate_constants, convergence_study, ensure_dir, exact_error, interpolation_study,
    preset, run_experiment, solve_config, steklov_study, write_csv, write_json, write_run,
    ErrorNorms, ExperimentConfig, HarnessError, RunOutput, SchemeChoice, SolverSummary,
    ARTIFACT_VERSION, PRESET_NAMES,
};

#[derive(Parser)]
#[command(name = "orthodeg", version, about = "Solve degenerate parabolic problems and check local bounds on the discrete solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and report solver diagnostics and the error against any exact solution.
    Solve(Common),
    /// Check the local energy estimate at every ladder level.
    VerifyEnergy(Common),
    /// Build the level/cylinder recursion trace and fit its constant.
    DegiorgiTrace(Common),
    /// Check the local sup bound on the inner cylinder.
    VerifyLinfty(Common),
    /// Iterate the fast geometric convergence recursion.
    LemmaCheck(LemmaArgs),
    /// Convergence of Steklov averages of the solution.
    SteklovCheck(Common),
    /// Parabolic interpolation inequality: scaling invariance and refinement stability.
    InterpCheck(InterpArgs),
    /// Observed orders against a manufactured or exact solution.
    MmsConvergence(LevelArgs),
    /// Fit the unknown constants over a sweep of configs and resolutions.
    Calibrate(LevelArgs),
    /// List presets, or print one as JSON.
    Presets {
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config (repeatable for `calibrate`).
    #[arg(long, value_name = "PATH")]
    config: Vec<PathBuf>,
    /// Built-in preset (repeatable for `calibrate`).
    #[arg(long, value_name = "NAME")]
    preset: Vec<String>,
    /// Output directory; defaults to the config's `output_dir` or `out/<name>`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the orthotropic thresholds by a radial one, `λ = max δ_i`.
    #[arg(long)]
    isotropic: bool,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
}

#[derive(Args)]
struct LevelArgs {
    #[command(flatten)]
    common: Common,
    /// Number of resolutions.
    #[arg(long)]
    levels: Option<u32>,
}

#[derive(Args)]
struct InterpArgs {
    #[command(flatten)]
    common: Common,
    /// Exponent of the sup-in-time factor.
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    #[arg(long, default_value_t = 2)]
    levels: u32,
}

#[derive(Args)]
struct LemmaArgs {
    #[arg(long)]
    c: f64,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    y0: f64,
    #[arg(long, default_value_t = 50)]
    j_max: usize,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Implicit,
    Explicit,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Degiorgi(#[from] DegiorgiError),
}

#[derive(Serialize)]
struct SolveReport<'a> {
    artifact_version: &'a str,
    config_sha256: String,
    config: &'a ExperimentConfig,
    solver: SolverSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_error: Option<ErrorNorms>,
}

fn load_configs(common: &Common) -> Result<Vec<ExperimentConfig>, CliError> {
    let mut configs = Vec::new();
    for path in &common.config {
        configs.push(ExperimentConfig::load(path)?);
    }
    for name in &common.preset {
        configs.push(preset(name)?);
    }
    if configs.is_empty() {
        return Err(CliError::Usage("pass --config PATH or --preset NAME".into()));
    }
    let scheme = common.scheme.map(|s| match s {
        SchemeArg::Implicit => SchemeChoice::Implicit,
        SchemeArg::Explicit => SchemeChoice::Explicit,
    });
    for cfg in &mut configs {
        cfg.apply_overrides(common.seed, common.isotropic, scheme)?;
        cfg.prepare()?;
    }
    Ok(configs)
}

fn load_one(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut configs = load_configs(common)?;
    if configs.len() != 1 {
        return Err(CliError::Usage("this command takes exactly one config or preset".into()));
    }
    Ok(configs.remove(0))
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run_pipeline(common: &Common) -> Result<(RunOutput, PathBuf), CliError> {
    let cfg = load_one(common)?;
    let output = run_experiment(&cfg)?;
    let dir = out_dir(common, &cfg);
    write_run(&dir, &output)?;
    Ok((output, dir))
}

fn solve_cmd(common: &Common) -> Result<bool, CliError> {
    let cfg = load_one(common)?;
    let start = Instant::now();
    let (prepared, solution) = solve_config(&cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let dir = out_dir(common, &cfg);
    ensure_dir(&dir)?;
    let report = SolveReport {
        artifact_version: ARTIFACT_VERSION,
        config_sha256: cfg.sha256(),
        config: &cfg,
        solver: SolverSummary::from_solution(&solution),
        exact_error: exact_error(&prepared, &solution.field),
    };
    write_json(&dir.join("report.json"), &report)?;
    write_json(&dir.join("timings.json"), &serde_json::json!({ "solve_seconds": seconds }))?;

    let grid = solution.field.grid();
    let last = grid.steps();
    let rows: Vec<Vec<f64>> = (0..grid.node_count())
        .map(|i| {
            let mut row = grid.node_coords(i);
            row.push(solution.field.at(last, i));
            row
        })
        .collect();
    let mut w = csv::Writer::from_path(dir.join("final.csv")).map_err(HarnessError::from)?;
    let mut header: Vec<String> = (0..grid.dim()).map(|a| format!("x{a}")).collect();
    header.push("u".into());
    w.write_record(&header).map_err(HarnessError::from)?;
    for row in rows {
        w.serialize(row).map_err(HarnessError::from)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        context: "writing final.csv".into(),
        source,
    })?;

    println!(
        "{}: {} steps, {} inner iterations, max residual {:.3e}",
        cfg.name,
        report.solver.steps,
        report.solver.total_iterations,
        report.solver.max_residual
    );
    if let Some(e) = report.exact_error {
        println!("error at t = {:.6}: linf {:.3e}, l2 {:.3e}", grid.t_end(), e.linf, e.l2);
    }
    println!("wrote {}", dir.display());
    Ok(true)
}

fn energy_cmd(common: &Common) -> Result<bool, CliError> {
    let (out, dir) = run_pipeline(common)?;
    let r = &out.report;
    for e in &r.energy {
        println!(
            "k = {:.6}: lhs {:.4e}, rhs/C {:.4e}, fitted C {:.4}",
            e.k,
            e.lhs(),
            e.rhs_unit(),
            e.fitted_c
        );
    }
    println!("energy estimate: {} (max fitted C {:.4})", verdict(r.verdicts.energy), r.energy_constant);
    println!("wrote {}", dir.display());
    Ok(r.verdicts.energy)
}

fn trace_cmd(common: &Common) -> Result<bool, CliError> {
    let (out, dir) = run_pipeline(common)?;
    let r = &out.report;
    for row in &r.trace.rows {
        println!(
            "j = {}: k_j {:.6}, Y_j {:.4e}, |A| {:.4e}, predicted Y_j+1 {:.4e}",
            row.j, row.k_j, row.y, row.a_meas, row.predicted_next
        );
    }
    println!("recursion trace: {} (fitted C~ {:.4e})", verdict(r.verdicts.trace), r.recursion.c_tilde);
    println!("wrote {}", dir.display());
    Ok(r.verdicts.trace)
}

fn linfty_cmd(common: &Common) -> Result<bool, CliError> {
    let (out, dir) = run_pipeline(common)?;
    let l = &out.report.linfty;
    println!(
        "sup |u| on inner cylinder {:.6} vs bound {:.6} (ratio {:.4}); constant needed {:.4}",
        l.ess_sup_inner, l.bound, l.ratio, out.report.linfty_required_constant
    );
    println!("sup bound: {}", verdict(l.pass));
    println!("wrote {}", dir.display());
    Ok(l.pass)
}

fn lemma_cmd(args: &LemmaArgs) -> Result<bool, CliError> {
    let report = match giusti_check(args.c, args.b, args.alpha, args.y0, args.j_max) {
        Ok(r) => r,
        Err(DegiorgiError::Diverged { j }) => {
            println!("sequence overflowed at j = {j}; nothing is asserted above the threshold");
            return Ok(true);
        }
        Err(e) => return Err(e.into()),
    };
    println!("threshold {:.6e}, Y0 {:.6e}", report.threshold, args.y0);
    let last = report.sequence.last().copied().unwrap_or(0.0);
    let pass = if report.below_threshold {
        println!("Y_{} = {:.3e}; envelope holds: {}", args.j_max, last, report.envelope_holds);
        report.envelope_holds
    } else {
        println!("Y0 above threshold; sequence reported only (Y_{} = {:.3e})", args.j_max, last);
        true
    };
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_json(&dir.join("lemma.json"), &report)?;
    }
    println!("lemma check: {}", verdict(pass));
    Ok(pass)
}

fn steklov_cmd(common: &Common) -> Result<bool, CliError> {
    let cfg = load_one(common)?;
    let (_, solution) = solve_config(&cfg)?;
    let study = steklov_study(&solution.field, 4)?;
    for (h, e) in study.windows.iter().zip(&study.errors) {
        println!("h = {h:.4e}: L2 distance {e:.4e}");
    }
    let floor = cfg.tolerances.exact_floor;
    let pass = study.passes(0.9, floor);
    let dir = out_dir(common, &cfg);
    ensure_dir(&dir)?;
    write_json(&dir.join("steklov.json"), &study)?;
    if study.errors.iter().all(|e| *e <= floor) {
        println!("steklov averages: {} (time-independent field)", verdict(pass));
    } else {
        let order = study.min_order().unwrap_or(f64::NAN);
        println!("steklov averages: {} (min order {order:.3})", verdict(pass));
    }
    Ok(pass)
}

fn interp_cmd(args: &InterpArgs) -> Result<bool, CliError> {
    let cfg = load_one(&args.common)?;
    let study = interpolation_study(&cfg, args.r, args.levels)?;
    for r in &study.reports {
        println!("q = {:.4}: lhs {:.4e}, rhs/C^q {:.4e}, fitted C {:.4}", r.q, r.lhs, r.rhs_without_c, r.fitted_c);
    }
    let pass = study.scaling_exact(1e-12) && study.stable(2.0);
    let dir = out_dir(&args.common, &cfg);
    ensure_dir(&dir)?;
    write_json(&dir.join("interpolation.json"), &study)?;
    println!("interpolation: {} (spread {:.4})", verdict(pass), study.spread);
    Ok(pass)
}

fn mms_cmd(args: &LevelArgs) -> Result<bool, CliError> {
    let cfg = load_one(&args.common)?;
    let table = convergence_study(&cfg, args.levels.unwrap_or(3))?;
    for row in &table.rows {
        println!(
            "level {} h {:.4e} tau {:.4e}: linf {:.4e} ({}), l2 {:.4e} ({})",
            row.level,
            row.h,
            row.tau,
            row.linf,
            row.order_linf.map_or("-".into(), |o| format!("{o:.3}")),
            row.l2,
            row.order_l2.map_or("-".into(), |o| format!("{o:.3}")),
        );
    }
    let tol = &cfg.tolerances;
    let pass = table.passes(tol.min_order, tol.exact_floor);
    let dir = out_dir(&args.common, &cfg);
    ensure_dir(&dir)?;
    write_json(&dir.join("convergence.json"), &table)?;
    write_csv(&dir.join("convergence.csv"), &table.rows)?;
    println!("convergence: {} (required order {})", verdict(pass), tol.min_order);
    Ok(pass)
}

/// Calibration refines `h` and `τ` by 2 per level to keep step counts small.
fn calibrate_cmd(args: &LevelArgs) -> Result<bool, CliError> {
    let configs = load_configs(&args.common)?;
    let levels = args.levels.unwrap_or(2).max(1);
    let sweep: Vec<ExperimentConfig> = configs
        .iter()
        .flat_map(|c| (0..levels).map(move |l| c.refined_by(l, 2.0)))
        .collect();
    let cal = calibrate_constants(&sweep)?;
    for run in &cal.runs {
        println!(
            "{} h {:.4e}: energy {:.4}, recursion {:.4e}, sup bound {:.4}",
            run.name, run.h, run.energy, run.recursion, run.linfty
        );
    }
    for (name, fit) in [("energy", &cal.energy), ("recursion", &cal.recursion), ("sup bound", &cal.linfty)] {
        println!(
            "{name}: max {:.4e}{}{}",
            fit.max,
            if fit.unstable { ", UNSTABLE" } else { "" },
            if fit.degenerate { ", degenerate" } else { "" }
        );
    }
    let dir = args.common.out.clone().unwrap_or_else(|| {
        if configs.len() == 1 {
            out_dir(&args.common, &configs[0])
        } else {
            Path::new("out").join("calibration")
        }
    });
    ensure_dir(&dir)?;
    write_json(&dir.join("calibration.json"), &cal)?;
    println!("calibration: {}", verdict(cal.stable()));
    Ok(cal.stable())
}

fn presets_cmd(show: Option<&str>) -> Result<bool, CliError> {
    match show {
        Some(name) => println!("{}", preset(name)?.to_json()),
        None => PRESET_NAMES.iter().for_each(|n| println!("{n}")),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(c) => solve_cmd(c),
        Command::VerifyEnergy(c) => energy_cmd(c),
        Command::DegiorgiTrace(c) => trace_cmd(c),
        Command::VerifyLinfty(c) => linfty_cmd(c),
        Command::LemmaCheck(a) => lemma_cmd(a),
        Command::SteklovCheck(c) => steklov_cmd(c),
        Command::InterpCheck(a) => interp_cmd(a),
        Command::MmsConvergence(a) => mms_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Presets { show } => presets_cmd(show.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
