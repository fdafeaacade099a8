//! Built-in experiment configurations.

use std::f64::consts::PI;

use super::config::{
    AutoLevel, ConstantsSpec, CylinderSpec, EquationSpec, ExperimentConfig, GridSpec, LadderSpec,
    LevelSpec, ToleranceSpec, SCHEMA_VERSION,
};
use super::HarnessError;
use crate::geometry::BoundaryKind;
use crate::solver::{ScenarioSpec, Scheme};

pub const PRESET_NAMES: [&str; 10] = [
    "heat-ms",
    "heat",
    "degenerate-steady",
    "random-bump",
    "isotropic",
    "random-bump-p3",
    "isotropic-p3",
    "intrinsic-p2",
    "intrinsic-p3",
    "parabola-ms",
];

fn unit_square(h: f64, tau: f64, t_final: f64) -> GridSpec {
    GridSpec {
        origin: vec![0.0, 0.0],
        extents: vec![1.0, 1.0],
        h,
        tau,
        t_final,
        boundary: BoundaryKind::Dirichlet,
    }
}

fn pi_square(h: f64, tau: f64, t_final: f64) -> GridSpec {
    GridSpec {
        origin: vec![0.0, 0.0],
        extents: vec![PI, PI],
        h,
        tau,
        t_final,
        boundary: BoundaryKind::Dirichlet,
    }
}

/// `Q(θ, ρ)` centered in `(0,π)²`, topped at the final time.
fn pi_centered(theta: f64, rho: f64) -> CylinderSpec {
    CylinderSpec {
        vertex: vec![PI / 2.0, PI / 2.0],
        t0: None,
        theta,
        rho,
        sigma: 0.5,
    }
}

fn centered(theta: f64, rho: f64) -> CylinderSpec {
    CylinderSpec {
        vertex: vec![0.5, 0.5],
        t0: None,
        theta,
        rho,
        sigma: 0.5,
    }
}

fn bump(seed: u64, amplitude: f64) -> ScenarioSpec {
    ScenarioSpec::RandomBump {
        seed: Some(seed),
        bumps: 4,
        amplitude,
    }
}

fn base(
    name: &str,
    equation: EquationSpec,
    grid: GridSpec,
    scenario: ScenarioSpec,
    cylinder: CylinderSpec,
    k: LevelSpec,
) -> ExperimentConfig {
    ExperimentConfig {
        schema: SCHEMA_VERSION,
        name: name.to_string(),
        equation,
        grid,
        scenario,
        cylinder,
        ladder: LadderSpec { k, j_max: 4 },
        scheme: Scheme::default(),
        constants: ConstantsSpec::default(),
        tolerances: ToleranceSpec::default(),
        output_dir: None,
        seed: 0,
    }
}

/// Looks up a preset by name.
pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let ortho = |p: f64, delta: [f64; 2]| EquationSpec::Orthotropic {
        p,
        delta: delta.to_vec(),
    };
    let iso = |p: f64, lambda: f64| EquationSpec::Isotropic { p, lambda };
    let cfg = match name {
        // u = e^{−2t} sin x₁ sin x₂ on (0,π)², τ = h²/4.
        "heat-ms" => {
            let h = PI / 8.0;
            let tau = h * h / 4.0;
            let t_final = 3.0 * tau;
            let cylinder = pi_centered(t_final, 0.5);
            base(
                name,
                ortho(2.0, [0.0, 0.0]),
                pi_square(h, tau, t_final),
                ScenarioSpec::SinProduct { amplitude: 1.0 },
                cylinder,
                LevelSpec::Fixed(0.5),
            )
        }
        // The same solution family, scaled by 4, on Q(1,1) topped at t = 1.
        "heat" => base(
            name,
            ortho(2.0, [0.0, 0.0]),
            pi_square(PI / 32.0, 0.02, 1.0),
            ScenarioSpec::SinProduct { amplitude: 4.0 },
            pi_centered(1.0, 1.0),
            LevelSpec::Fixed(1.0),
        ),
        // Every slope sits inside the flat set, so nothing moves.
        "degenerate-steady" => {
            let mut cfg = base(
                name,
                ortho(2.0, [1.0, 1.0]),
                unit_square(1.0 / 64.0, 0.01, 1.0),
                ScenarioSpec::AffineSlope {
                    slopes: vec![0.5, 0.5],
                    offset: 0.0,
                },
                centered(0.5, 0.25),
                LevelSpec::Auto(AutoLevel::Auto),
            );
            cfg.tolerances.weak_residual = Some(1e-10);
            cfg
        }
        "random-bump" => base(
            name,
            ortho(2.0, [0.5, 0.5]),
            unit_square(1.0 / 32.0, 1e-3, 0.04),
            bump(7, 3.0),
            centered(0.04, 0.4),
            LevelSpec::Fixed(0.4),
        ),
        "isotropic" => base(
            name,
            iso(2.0, 0.5),
            unit_square(1.0 / 32.0, 1e-3, 0.04),
            bump(7, 3.0),
            centered(0.04, 0.4),
            LevelSpec::Fixed(0.4),
        ),
        "random-bump-p3" => base(
            name,
            ortho(3.0, [0.3, 0.1]),
            unit_square(1.0 / 32.0, 1e-3, 0.04),
            bump(7, 3.0),
            centered(0.04, 0.4),
            LevelSpec::Fixed(0.4),
        ),
        "isotropic-p3" => base(
            name,
            iso(3.0, 0.3),
            unit_square(1.0 / 32.0, 1e-3, 0.04),
            bump(7, 3.0),
            centered(0.04, 0.4),
            LevelSpec::Fixed(0.4),
        ),
        // θ = ρ²
        "intrinsic-p2" => base(
            name,
            ortho(2.0, [0.2, 0.2]),
            pi_square(PI / 32.0, 0.01, 0.64),
            ScenarioSpec::SinProduct { amplitude: 4.0 },
            pi_centered(0.64, 0.8),
            LevelSpec::Fixed(0.8),
        ),
        // θ = ρ³
        "intrinsic-p3" => base(
            name,
            ortho(3.0, [0.2, 0.2]),
            pi_square(PI / 32.0, 0.008, 0.512),
            ScenarioSpec::SinProduct { amplitude: 4.0 },
            pi_centered(0.512, 0.8),
            LevelSpec::Fixed(1.0),
        ),
        // u = e^{−t} x₁² with its source, p = 3.
        "parabola-ms" => {
            let mut cfg = base(
                name,
                ortho(3.0, [0.0, 0.4]),
                unit_square(0.25, 0.0625, 0.25),
                ScenarioSpec::ParabolaDecay { amplitude: 1.0 },
                centered(0.25, 0.5),
                LevelSpec::Fixed(1.0),
            );
            cfg.tolerances.min_order = 0.9;
            cfg
        }
        _ => {
            return Err(HarnessError::UnknownPreset {
                name: name.to_string(),
                available: PRESET_NAMES.join(", "),
            })
        }
    };
    Ok(cfg)
}
