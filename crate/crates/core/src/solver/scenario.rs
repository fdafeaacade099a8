//! Named initial/boundary data and manufactured solutions.
//!
//! | name            | u(x, t)                               | source | exact when            |
//! |-----------------|---------------------------------------|--------|-----------------------|
//! | `sin-product`   | `a e^{−nt} Π sin(x_i − o_i)`          | none   | `p = 2`, `δ = 0`      |
//! | `affine-slope`  | `c + Σ s_i x_i`                       | none   | always (flux is constant) |
//! | `parabola-decay`| `a e^{−t} x₁²`                        | analytic | always              |
//! | `random-bump`   | seeded Gaussian bumps × boundary sine | none   | never                 |
//! | `zero`          | `0`                                   | none   | always                |

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flux::{pos_pow, Degeneracy, DegeneracyParams};
use crate::geometry::{BoundaryKind, Grid};

pub type SpaceTimeFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario `{name}` expects {expected} slopes, got {got}")]
    SlopeCount {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("scenario `{0}` requires a Dirichlet grid")]
    NeedsDirichlet(&'static str),
    #[error("scenario `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
}

fn one() -> f64 {
    1.0
}

fn three() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioSpec {
    SinProduct {
        #[serde(default = "one")]
        amplitude: f64,
    },
    AffineSlope {
        slopes: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    ParabolaDecay {
        #[serde(default = "one")]
        amplitude: f64,
    },
    RandomBump {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "three")]
        bumps: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Zero,
}

impl ScenarioSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SinProduct { .. } => "sin-product",
            Self::AffineSlope { .. } => "affine-slope",
            Self::ParabolaDecay { .. } => "parabola-decay",
            Self::RandomBump { .. } => "random-bump",
            Self::Zero => "zero",
        }
    }

    pub fn build(
        &self,
        grid: &Grid,
        params: &DegeneracyParams,
        default_seed: u64,
    ) -> Result<Scenario, ScenarioError> {
        let n = grid.dim();
        let origin = grid.origin().to_vec();
        match *self {
            Self::SinProduct { amplitude } => {
                let rate = n as f64;
                let o = origin.clone();
                let u: SpaceTimeFn = Arc::new(move |x: &[f64], t: f64| {
                    amplitude
                        * (-rate * t).exp()
                        * x.iter().zip(&o).map(|(xi, oi)| (xi - oi).sin()).product::<f64>()
                });
                let heat = params.p() == 2.0 && params.max_threshold() == 0.0;
                Ok(Scenario {
                    initial: u.clone(),
                    boundary: u.clone(),
                    source: None,
                    exact: heat.then_some(u),
                })
            }
            Self::AffineSlope { ref slopes, offset } => {
                if slopes.len() != n {
                    return Err(ScenarioError::SlopeCount {
                        name: "affine-slope",
                        expected: n,
                        got: slopes.len(),
                    });
                }
                if grid.boundary() != BoundaryKind::Dirichlet {
                    return Err(ScenarioError::NeedsDirichlet("affine-slope"));
                }
                let s = slopes.clone();
                let u: SpaceTimeFn = Arc::new(move |x: &[f64], _t: f64| {
                    offset + x.iter().zip(&s).map(|(xi, si)| xi * si).sum::<f64>()
                });
                Ok(Scenario {
                    initial: u.clone(),
                    boundary: u.clone(),
                    source: None,
                    exact: Some(u),
                })
            }
            Self::ParabolaDecay { amplitude } => {
                if grid.boundary() != BoundaryKind::Dirichlet {
                    return Err(ScenarioError::NeedsDirichlet("parabola-decay"));
                }
                let threshold = match params.kind() {
                    Degeneracy::Orthotropic { delta } => delta[0],
                    Degeneracy::Isotropic { lambda } => *lambda,
                };
                let p = params.p();
                let u: SpaceTimeFn =
                    Arc::new(move |x: &[f64], t: f64| amplitude * (-t).exp() * x[0] * x[0]);
                let source: SpaceTimeFn = Arc::new(move |x: &[f64], t: f64| {
                    let decay = amplitude * (-t).exp();
                    let u_t = -decay * x[0] * x[0];
                    let slope = (2.0 * decay * x[0]).abs();
                    let curvature = 2.0 * decay;
                    let excess = slope - threshold;
                    let div_flux = if excess > 0.0 {
                        (p - 1.0) * pos_pow(excess, p - 2.0) * curvature
                    } else {
                        0.0
                    };
                    u_t - div_flux
                });
                Ok(Scenario {
                    initial: u.clone(),
                    boundary: u.clone(),
                    source: Some(source),
                    exact: Some(u),
                })
            }
            Self::RandomBump {
                seed,
                bumps,
                amplitude,
            } => {
                if bumps == 0 {
                    return Err(ScenarioError::Invalid {
                        name: "random-bump",
                        reason: "needs at least one bump".into(),
                    });
                }
                let seed = seed.unwrap_or(default_seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let extents = grid.extents();
                let mut centers = Vec::with_capacity(bumps);
                for _ in 0..bumps {
                    let center: Vec<f64> = origin
                        .iter()
                        .zip(&extents)
                        .map(|(o, l)| o + l * rng.gen_range(0.2..0.8))
                        .collect();
                    let width = rng.gen_range(0.08..0.2) * extents.iter().copied().fold(f64::INFINITY, f64::min);
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let height = sign * amplitude * rng.gen_range(0.5..1.0);
                    centers.push((center, width, height));
                }
                let o = origin.clone();
                let periodic = grid.boundary() == BoundaryKind::Periodic;
                let initial: SpaceTimeFn = Arc::new(move |x: &[f64], _t: f64| {
                    let envelope = if periodic {
                        1.0
                    } else {
                        x.iter()
                            .zip(&o)
                            .zip(&extents)
                            .map(|((xi, oi), l)| (PI * (xi - oi) / l).sin())
                            .product::<f64>()
                    };
                    let bumps: f64 = centers
                        .iter()
                        .map(|(c, w, a)| {
                            let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum();
                            a * (-r2 / (w * w)).exp()
                        })
                        .sum();
                    envelope * bumps
                });
                Ok(Scenario {
                    initial,
                    boundary: Arc::new(|_: &[f64], _: f64| 0.0),
                    source: None,
                    exact: None,
                })
            }
            Self::Zero => {
                let u: SpaceTimeFn = Arc::new(|_: &[f64], _: f64| 0.0);
                Ok(Scenario {
                    initial: u.clone(),
                    boundary: u.clone(),
                    source: None,
                    exact: Some(u),
                })
            }
        }
    }
}

/// Analytic data for one run.
#[derive(Clone)]
pub struct Scenario {
    pub initial: SpaceTimeFn,
    pub boundary: SpaceTimeFn,
    pub source: Option<SpaceTimeFn>,
    pub exact: Option<SpaceTimeFn>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("source", &self.source.is_some())
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl Scenario {
    pub fn initial_slice(&self, grid: &Grid) -> Vec<f64> {
        let t = grid.t_start();
        (0..grid.node_count())
            .map(|i| (self.initial)(&grid.node_coords(i), t))
            .collect()
    }

    /// Sign-flipped data: `u → −u`, boundary and source negated.
    pub fn negated(&self) -> Self {
        fn neg(f: &SpaceTimeFn) -> SpaceTimeFn {
            let f = f.clone();
            Arc::new(move |x: &[f64], t: f64| -f(x, t))
        }
        Self {
            initial: neg(&self.initial),
            boundary: neg(&self.boundary),
            source: self.source.as_ref().map(neg),
            exact: self.exact.as_ref().map(neg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(vec![0.0, 0.0], &[2.0, 2.0], 0.25, 0.01, 4, BoundaryKind::Dirichlet).unwrap()
    }

    #[test]
    fn parabola_source_matches_finite_difference() {
        let params = DegeneracyParams::orthotropic(3.0, vec![0.3, 0.0]).unwrap();
        let sc = ScenarioSpec::ParabolaDecay { amplitude: 1.5 }
            .build(&grid(), &params, 0)
            .unwrap();
        let u = sc.exact.unwrap();
        let f = sc.source.unwrap();
        let h = 1e-4;
        for &(x, t) in &[(0.7, 0.2), (1.4, 0.05), (0.9, 1.0)] {
            let u_t = (u(&[x, 0.3], t + h) - u(&[x, 0.3], t - h)) / (2.0 * h);
            let a = |xx: f64| {
                let s = (u(&[xx + h, 0.3], t) - u(&[xx - h, 0.3], t)) / (2.0 * h);
                crate::flux::scalar_flux(s, 0.3, 3.0)
            };
            let div = (a(x + h) - a(x - h)) / (2.0 * h);
            assert!((f(&[x, 0.3], t) - (u_t - div)).abs() < 1e-5);
        }
    }

    #[test]
    fn random_bump_is_seeded_and_vanishes_on_boundary() {
        let params = DegeneracyParams::orthotropic(2.0, vec![0.0, 0.0]).unwrap();
        let g = grid();
        let spec = ScenarioSpec::RandomBump {
            seed: Some(7),
            bumps: 4,
            amplitude: 2.0,
        };
        let a = spec.build(&g, &params, 0).unwrap().initial_slice(&g);
        let b = spec.build(&g, &params, 99).unwrap().initial_slice(&g);
        assert_eq!(a, b);
        for (i, v) in a.iter().enumerate() {
            if g.is_boundary_node(i) {
                assert!(v.abs() < 1e-12);
            }
        }
        assert!(a.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let ok: ScenarioSpec = serde_json::from_str(r#"{"name":"sin-product","amplitude":2.0}"#).unwrap();
        assert_eq!(ok, ScenarioSpec::SinProduct { amplitude: 2.0 });
        assert!(serde_json::from_str::<ScenarioSpec>(r#"{"name":"sin-product","amplitud":2.0}"#).is_err());
        assert!(serde_json::from_str::<ScenarioSpec>(r#"{"name":"nope"}"#).is_err());
    }
}
