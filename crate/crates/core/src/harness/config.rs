use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::degiorgi::LevelLadder;
use crate::flux::DegeneracyParams;
use crate::geometry::{snap_cylinder, BoundaryKind, Cylinder, Grid, ShrinkFamily};
use crate::solver::{Problem, Scenario, ScenarioSpec, Scheme};

pub const SCHEMA_VERSION: u32 = 1;

/// One experiment: equation, grid, data, the cylinder under study and the
/// checks to run on the discrete solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub name: String,
    pub equation: EquationSpec,
    pub grid: GridSpec,
    pub scenario: ScenarioSpec,
    pub cylinder: CylinderSpec,
    pub ladder: LadderSpec,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub constants: ConstantsSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Seed for scenarios that do not fix their own.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EquationSpec {
    Orthotropic { p: f64, delta: Vec<f64> },
    Isotropic { p: f64, lambda: f64 },
}

impl EquationSpec {
    pub fn p(&self) -> f64 {
        match self {
            Self::Orthotropic { p, .. } | Self::Isotropic { p, .. } => *p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub extents: Vec<f64>,
    pub h: f64,
    pub tau: f64,
    /// Must be a whole number of steps.
    pub t_final: f64,
    #[serde(default = "dirichlet")]
    pub boundary: BoundaryKind,
}

fn dirichlet() -> BoundaryKind {
    BoundaryKind::Dirichlet
}

/// `[(vertex, t0) + Q(θ, ρ)]` and the shrink ratio `σ`. `t0` defaults to the
/// final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSpec {
    pub vertex: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    pub theta: f64,
    pub rho: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSpec {
    pub k: LevelSpec,
    pub j_max: usize,
}

/// A fixed top level, or `"auto"` to derive it from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelSpec {
    Fixed(f64),
    Auto(AutoLevel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoLevel {
    #[serde(rename = "auto")]
    Auto,
}

/// Constants the fitted values are checked against. Absent energy and
/// recursion constants are only reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recursion: Option<f64>,
    #[serde(default = "one")]
    pub linfty: f64,
}

impl Default for ConstantsSpec {
    fn default() -> Self {
        Self {
            energy: None,
            recursion: None,
            linfty: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_residual: Option<f64>,
    /// Smallest acceptable observed order in convergence studies.
    #[serde(default = "default_min_order")]
    pub min_order: f64,
    /// Errors below this count as exact in convergence studies.
    #[serde(default = "default_exact_floor")]
    pub exact_floor: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            weak_residual: None,
            min_order: default_min_order(),
            exact_floor: default_exact_floor(),
        }
    }
}

fn default_min_order() -> f64 {
    1.8
}

fn default_exact_floor() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    Implicit,
    Explicit,
}

/// Validated objects built from a config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: Grid,
    pub params: DegeneracyParams,
    pub scenario: Scenario,
    pub cylinder: Cylinder,
    pub family: ShrinkFamily,
    /// `None` for `"auto"`.
    pub ladder: Option<LevelLadder>,
}

impl Prepared {
    pub fn problem(&self, scheme: Scheme) -> Problem {
        Problem::from_scenario(self.grid.clone(), self.params.clone(), &self.scenario, scheme)
    }
}

fn invalid(path: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<(), HarnessError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical (compact) JSON form.
    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn steps(&self) -> Result<usize, HarnessError> {
        let g = &self.grid;
        positive("grid.tau", g.tau)?;
        positive("grid.t_final", g.t_final)?;
        let ratio = g.t_final / g.tau;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio || steps < 1.0 {
            return Err(invalid(
                "grid.t_final",
                format!("{} is not a whole number of steps of tau = {}", g.t_final, g.tau),
            ));
        }
        Ok(steps as usize)
    }

    /// Applies command-line overrides. `isotropic` swaps the orthotropic
    /// thresholds for a single radial one, `λ = max δ_i`.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        isotropic: bool,
        scheme: Option<SchemeChoice>,
    ) -> Result<(), HarnessError> {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if isotropic {
            if let EquationSpec::Orthotropic { p, delta } = &self.equation {
                let lambda = delta.iter().copied().fold(0.0, f64::max);
                if !(lambda > 0.0) {
                    return Err(invalid(
                        "equation.delta",
                        "--isotropic needs a positive threshold to carry over",
                    ));
                }
                self.equation = EquationSpec::Isotropic { p: *p, lambda };
            }
        }
        match (scheme, self.scheme.is_explicit()) {
            (Some(SchemeChoice::Implicit), true) => self.scheme = Scheme::default(),
            (Some(SchemeChoice::Explicit), false) => self.scheme = Scheme::explicit(),
            _ => {}
        }
        Ok(())
    }

    /// Refines `level` times: `h/2` and `τ/4` per level at fixed final time.
    pub fn refined(&self, level: u32) -> Self {
        self.refined_by(level, 4.0)
    }

    /// Refines `level` times, halving `h` and dividing `τ` by `tau_ratio`.
    pub fn refined_by(&self, level: u32, tau_ratio: f64) -> Self {
        let mut out = self.clone();
        out.grid.h /= 2f64.powi(level as i32);
        out.grid.tau /= tau_ratio.powi(level as i32);
        out
    }

    /// Checks every field and builds the grid, equation, data and cylinder
    /// family. Nothing is solved.
    pub fn prepare(&self) -> Result<Prepared, HarnessError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid(
                "schema",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let g = &self.grid;
        let n = g.origin.len();
        if n == 0 || g.extents.len() != n {
            return Err(invalid(
                "grid.extents",
                format!("need one extent per origin coordinate ({n}), got {}", g.extents.len()),
            ));
        }
        positive("grid.h", g.h)?;
        let steps = self.steps()?;
        let grid = Grid::new(g.origin.clone(), &g.extents, g.h, g.tau, steps, g.boundary)
            .map_err(|e| invalid("grid", e.to_string()))?;

        let params = match &self.equation {
            EquationSpec::Orthotropic { p, delta } => {
                if delta.len() != n {
                    return Err(invalid(
                        "equation.delta",
                        format!("need {n} thresholds, got {}", delta.len()),
                    ));
                }
                DegeneracyParams::orthotropic(*p, delta.clone())
            }
            EquationSpec::Isotropic { p, lambda } => DegeneracyParams::isotropic(*p, *lambda),
        }
        .map_err(|e| invalid("equation", e.to_string()))?;

        let scenario = self
            .scenario
            .build(&grid, &params, self.seed)
            .map_err(|e| invalid("scenario", e.to_string()))?;

        let c = &self.cylinder;
        if c.vertex.len() != n {
            return Err(invalid(
                "cylinder.vertex",
                format!("need {n} coordinates, got {}", c.vertex.len()),
            ));
        }
        if !(c.sigma > 0.0 && c.sigma < 1.0) {
            return Err(invalid("cylinder.sigma", format!("must lie in (0,1), got {}", c.sigma)));
        }
        let t0 = c.t0.unwrap_or_else(|| grid.t_end());
        let cylinder = Cylinder::new(c.vertex.clone(), t0, c.theta, c.rho)
            .map_err(|e| invalid("cylinder", e.to_string()))?;
        if !grid.contains_cylinder(&cylinder) {
            return Err(invalid("cylinder", "does not fit inside the space-time domain"));
        }
        if snap_cylinder(&cylinder.scaled(c.sigma), &grid).is_empty() {
            return Err(invalid(
                "cylinder.sigma",
                "the inner cylinder contains no grid nodes; refine the grid",
            ));
        }
        let family = ShrinkFamily::from_cylinder(&cylinder, c.sigma)
            .map_err(|e| invalid("cylinder", e.to_string()))?;

        let ladder = match self.ladder.k {
            LevelSpec::Fixed(k) => {
                positive("ladder.k", k)?;
                if k < c.rho {
                    return Err(invalid("ladder.k", format!("k = {k} must be at least rho = {}", c.rho)));
                }
                Some(LevelLadder::new(k).map_err(|e| invalid("ladder.k", e.to_string()))?)
            }
            LevelSpec::Auto(_) => None,
        };

        match self.scheme {
            Scheme::Implicit {
                tolerance,
                max_iterations,
            } => {
                positive("scheme.tolerance", tolerance)?;
                if max_iterations == 0 {
                    return Err(invalid("scheme.max_iterations", "must be at least 1"));
                }
            }
            Scheme::Explicit { cfl_safety } => {
                if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
                    return Err(invalid("scheme.cfl_safety", format!("must lie in (0,1], got {cfl_safety}")));
                }
            }
        }
        positive("constants.linfty", self.constants.linfty)?;
        if let Some(v) = self.constants.energy {
            positive("constants.energy", v)?;
        }
        if let Some(v) = self.constants.recursion {
            positive("constants.recursion", v)?;
        }
        if let Some(v) = self.tolerances.weak_residual {
            positive("tolerances.weak_residual", v)?;
        }
        positive("tolerances.exact_floor", self.tolerances.exact_floor)?;

        Ok(Prepared {
            grid,
            params,
            scenario,
            cylinder,
            family,
            ladder,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::preset;

    #[test]
    fn presets_round_trip_and_validate() {
        for name in crate::harness::PRESET_NAMES {
            let cfg = preset(name).unwrap();
            let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.sha256(), cfg.sha256());
            cfg.prepare().unwrap();
        }
    }

    #[test]
    fn unknown_keys_and_bad_fields_are_rejected() {
        let cfg = preset("heat-ms").unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        value["grid"]["hh"] = 0.1.into();
        assert!(ExperimentConfig::from_json(&value.to_string()).is_err());

        let mut bad = cfg.clone();
        bad.grid.t_final = 1.5 * bad.grid.tau;
        let err = bad.prepare().unwrap_err();
        assert!(err.to_string().contains("grid.t_final"), "{err}");

        let mut bad = cfg.clone();
        bad.ladder.k = LevelSpec::Fixed(0.1 * cfg.cylinder.rho);
        assert!(bad.prepare().unwrap_err().to_string().contains("ladder.k"));

        let mut bad = cfg;
        bad.cylinder.vertex = vec![0.1, 0.1];
        assert!(bad.prepare().unwrap_err().to_string().contains("cylinder"));
    }

    #[test]
    fn auto_level_parses() {
        let cfg = preset("degenerate-steady").unwrap();
        assert_eq!(cfg.ladder.k, LevelSpec::Auto(AutoLevel::Auto));
        assert!(cfg.to_json().contains("\"k\": \"auto\""));
    }

    #[test]
    fn overrides() {
        let mut cfg = preset("random-bump").unwrap();
        cfg.apply_overrides(Some(9), true, Some(SchemeChoice::Explicit)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(matches!(cfg.equation, EquationSpec::Isotropic { lambda, .. } if lambda == 0.5));
        assert!(cfg.scheme.is_explicit());
        let mut heat = preset("heat-ms").unwrap();
        assert!(heat.apply_overrides(None, true, None).is_err());
    }
}
