//! Experiment plumbing: JSON configs, presets, the solve-then-verify
//! pipeline, report files, refinement studies and constant calibration.

mod config;
mod presets;
mod run;
mod studies;

use thiserror::Error;

use crate::degiorgi::DegiorgiError;
use crate::solver::SolverError;

pub use config::{
    AutoLevel, ConstantsSpec, CylinderSpec, EquationSpec, ExperimentConfig, GridSpec, LadderSpec,
    LevelSpec, Prepared, SchemeChoice, ToleranceSpec, SCHEMA_VERSION,
};
pub use presets::{preset, PRESET_NAMES};
pub use run::{
    energy_reports, ensure_dir, exact_error, read_energy_csv, read_trace_csv, run_experiment,
    solve_config, weak_tests, write_csv, write_json, write_run, ErrorNorms, RunOutput, RunReport,
    SolverSummary, Timings, Verdicts, ARTIFACT_VERSION,
};
pub use studies::{
    calibrate_constants, convergence_study, interpolation_study, steklov_study, Calibration,
    CalibrationRun, ConstantFit, ConvergenceRow, ConvergenceTable, InterpolationStudy,
    SteklovStudy,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("cannot parse config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown preset `{name}` (available: {available})")]
    UnknownPreset { name: String, available: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("solver failed for {context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Degiorgi(#[from] DegiorgiError),
    #[error("{0}")]
    Study(String),
}
