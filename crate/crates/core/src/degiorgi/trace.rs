//! The iteration over shrinking cylinders and rising levels.
//!
//! ```text
//! Y_j      = avg_{Q_j} (u − k_j)₊^p
//! |A_{j+1}| = |{u > k_{j+1}} ∩ Q_j|
//! Z_j      = (∬_{Q̃_j} |D(u − k_{j+1})₊|^p + |Q_j| Y_j / ((1−σ)ρ)^p)^{p/q}
//! Y_{j+1} <= C̃ b^j (1−σ)^{−p(n+p)/(n+2)} k^{−2p/(n+2)} A_k^α Y_j^{1+α}
//! ```
//!
//! with `α = p/(n+2)`, `q = p(n+2)/n`, `b = 2^{p(p+2n+2)/(n+2)}` and
//! `A_k = (ρ^p/θ)^{n/p} k^{(2−p)(n+p)/p} + θ/ρ^p`.

use serde::{Deserialize, Serialize};

use super::{DegiorgiError, LevelLadder, Window};
use crate::flux::DegeneracyParams;
use crate::geometry::ShrinkFamily;
use crate::solver::{Field, Stencil};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionConstants {
    pub n: usize,
    pub p: f64,
    pub sigma: f64,
    pub k: f64,
    pub b: f64,
    pub alpha: f64,
    pub a_k: f64,
    pub q: f64,
    /// Multiplier used for predictions; 1 until fitted.
    pub c_tilde: f64,
}

impl RecursionConstants {
    fn build(n: usize, p: f64, theta: f64, rho: f64, sigma: f64, k: f64) -> Self {
        let nf = n as f64;
        let b = 2f64.powf(p * (p + 2.0 * nf + 2.0) / (nf + 2.0));
        let a_k = (rho.powf(p) / theta).powf(nf / p) * k.powf((2.0 - p) * (nf + p) / p)
            + theta / rho.powf(p);
        Self {
            n,
            p,
            sigma,
            k,
            b,
            alpha: p / (nf + 2.0),
            a_k,
            q: p * (nf + 2.0) / nf,
            c_tilde: 1.0,
        }
    }

    /// `b^j (1−σ)^{−p(n+p)/(n+2)} k^{−2p/(n+2)} A_k^α`, the coefficient of
    /// `C̃ Y_j^{1+α}`.
    pub fn factor(&self, j: usize) -> f64 {
        let nf = self.n as f64;
        let p = self.p;
        self.b.powi(j as i32)
            * (1.0 - self.sigma).powf(-p * (nf + p) / (nf + 2.0))
            * self.k.powf(-2.0 * p / (nf + 2.0))
            * self.a_k.powf(self.alpha)
    }

    pub fn predict(&self, j: usize, y: f64) -> f64 {
        self.c_tilde * self.factor(j) * y.powf(1.0 + self.alpha)
    }
}

/// Constants of the recursion. Requires `k >= ρ`.
pub fn recursion_constants(
    n: usize,
    params: &DegeneracyParams,
    theta: f64,
    rho: f64,
    sigma: f64,
    k: f64,
) -> Result<RecursionConstants, DegiorgiError> {
    if !(k > 0.0) {
        return Err(DegiorgiError::NonPositiveLevel(k));
    }
    if k < rho {
        return Err(DegiorgiError::LevelBelowRadius { k, rho });
    }
    if n == 0 || !(theta > 0.0 && rho > 0.0 && sigma > 0.0 && sigma < 1.0) {
        return Err(DegiorgiError::Invalid(format!(
            "need n >= 1, theta, rho > 0 and sigma in (0,1); got n={n}, theta={theta}, rho={rho}, sigma={sigma}"
        )));
    }
    Ok(RecursionConstants::build(n, params.p(), theta, rho, sigma, k))
}

/// One row of the trace; the CSV side file stores exactly these fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub j: usize,
    pub rho_j: f64,
    pub theta_j: f64,
    pub k_j: f64,
    #[serde(rename = "Y_j")]
    pub y: f64,
    #[serde(rename = "A_meas")]
    pub a_meas: f64,
    #[serde(rename = "Z_j")]
    pub z: f64,
    #[serde(rename = "predicted_Y_next")]
    pub predicted_next: f64,
}

/// Inequalities checked along the way at each `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowChecks {
    /// `|A_{j+1}| <= 2^{(j+1)s} k^{−s} ∬_{Q_j}(u − k_j)₊^s` for `s = 2`.
    pub superlevel_s2: bool,
    /// The same for `s = p`.
    pub superlevel_sp: bool,
    /// `∬(u−k_{j+1})₊² <= (∬(u−k_{j+1})₊^p)^{2/p} |A_{j+1}|^{1−2/p}`.
    pub holder: bool,
    /// `|Q_j|` as node count × `hⁿτ`.
    pub discrete_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
    pub checks: Vec<RowChecks>,
    pub constants: RecursionConstants,
}

impl IterationTrace {
    pub fn all_checks_hold(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.superlevel_s2 && c.superlevel_sp && c.holder)
    }
}

/// Builds the trace for `j = 0..=j_max`. Predictions use `C̃ = 1`.
pub fn compute_trace(
    u: &Field,
    family: &ShrinkFamily,
    ladder: &LevelLadder,
    params: &DegeneracyParams,
    j_max: usize,
) -> Result<IterationTrace, DegiorgiError> {
    let grid = u.grid();
    if !grid.contains_cylinder(&family.q(0)) {
        return Err(DegiorgiError::OutsideGrid);
    }
    let n = grid.dim();
    let p = params.p();
    let k = ladder.k();
    let constants = RecursionConstants::build(n, p, family.theta, family.rho, family.sigma, k);
    let stencil = Stencil::new(grid);
    let mut grad = vec![0.0; n];
    let mut truncated = vec![0.0; grid.node_count()];
    let scale = ((1.0 - family.sigma) * family.rho).powf(p);

    let mut rows = Vec::with_capacity(j_max + 1);
    let mut checks = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let window = Window::new(&family.q(j), grid);
        if window.is_empty() {
            return Err(DegiorgiError::EmptyCylinder { j });
        }
        let k_j = ladder.level(j);
        let k_next = ladder.level(j + 1);
        let y = window.average(u, |v| (v - k_j).max(0.0).powf(p));
        let count_above = window.sum(u, |v| if v > k_next { 1.0 } else { 0.0 });
        let a_meas = count_above * window.weight;
        let q_meas = window.measure();

        let tilde = Window::new(&family.q_tilde(j), grid);
        let mut grad_sum = 0.0;
        for m in tilde.levels.clone() {
            for (t, v) in truncated.iter_mut().zip(u.slice(m)) {
                *t = (v - k_next).max(0.0);
            }
            for &i in &tilde.nodes {
                stencil.node_gradient(&truncated, i, &mut grad);
                grad_sum += grad.iter().map(|g| g * g).sum::<f64>().sqrt().powf(p);
            }
        }
        let z = (grad_sum * tilde.weight + q_meas * y / scale).powf(p / constants.q);

        let gap = k / 2f64.powi(j as i32 + 1);
        let superlevel = |s: f64| {
            let integral = window.sum(u, |v| (v - k_j).max(0.0).powf(s));
            count_above <= integral / gap.powf(s) * (1.0 + 1e-12) + 1e-300
        };
        let sum2 = window.sum(u, |v| {
            let e = (v - k_next).max(0.0);
            e * e
        }) * window.weight;
        let sump = window.sum(u, |v| (v - k_next).max(0.0).powf(p)) * window.weight;
        let holder_rhs = sump.powf(2.0 / p) * a_meas.powf(1.0 - 2.0 / p);
        checks.push(RowChecks {
            superlevel_s2: superlevel(2.0),
            superlevel_sp: superlevel(p),
            holder: sum2 <= holder_rhs * (1.0 + 1e-12) + 1e-300,
            discrete_measure: q_meas,
        });
        rows.push(TraceRow {
            j,
            rho_j: family.rho_j(j),
            theta_j: family.theta_j(j),
            k_j,
            y,
            a_meas,
            z,
            predicted_next: constants.predict(j, y),
        });
    }
    Ok(IterationTrace {
        rows,
        checks,
        constants,
    })
}

/// Trace whose `Y_j` satisfy the recursion with equality for `C̃ = 1`.
pub fn manufactured_trace(
    family: &ShrinkFamily,
    constants: &RecursionConstants,
    y0: f64,
    j_max: usize,
) -> IterationTrace {
    let mut constants = *constants;
    constants.c_tilde = 1.0;
    let mut rows = Vec::with_capacity(j_max + 1);
    let mut y = y0;
    for j in 0..=j_max {
        let next = constants.predict(j, y);
        rows.push(TraceRow {
            j,
            rho_j: family.rho_j(j),
            theta_j: family.theta_j(j),
            k_j: constants.k - constants.k / 2f64.powi(j as i32),
            y,
            a_meas: 0.0,
            z: 0.0,
            predicted_next: next,
        });
        y = next;
    }
    IterationTrace {
        checks: Vec::new(),
        rows,
        constants,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionFit {
    /// Smallest `C̃` for which every step of the trace satisfies the
    /// recursion; 0 when no step constrains it.
    pub c_tilde: f64,
    /// `Y_{j+1} / (factor_j Y_j^{1+α})`; `None` when `Y_j = 0`.
    pub ratios: Vec<Option<f64>>,
    /// `C̃ factor_j Y_j^{1+α} / Y_{j+1}`; infinite when the step is trivial.
    pub slack: Vec<f64>,
}

pub fn verify_recursion(trace: &IterationTrace, constants: &RecursionConstants) -> RecursionFit {
    let ratios: Vec<Option<f64>> = trace
        .rows
        .windows(2)
        .map(|w| {
            let (cur, next) = (&w[0], &w[1]);
            if cur.y == 0.0 {
                None
            } else {
                Some(next.y / (constants.factor(cur.j) * cur.y.powf(1.0 + constants.alpha)))
            }
        })
        .collect();
    let c_tilde = ratios.iter().flatten().copied().fold(0.0, f64::max);
    let slack = ratios
        .iter()
        .map(|r| match r {
            Some(r) if *r > 0.0 => c_tilde / r,
            _ => f64::INFINITY,
        })
        .collect();
    RecursionFit {
        c_tilde,
        ratios,
        slack,
    }
}

/// Spread of a fitted constant across resolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub values: Vec<f64>,
    /// `max/min` over the positive values (1 when fewer than two).
    pub spread: f64,
    pub within: bool,
}

/// Flags the fitted values as unstable when `max/min > factor`.
pub fn refinement_stability(values: &[f64], factor: f64) -> Stability {
    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    let spread = if positive.len() < 2 {
        1.0
    } else {
        let max = positive.iter().copied().fold(f64::MIN, f64::max);
        let min = positive.iter().copied().fold(f64::MAX, f64::min);
        max / min
    };
    let zeros = values.len() - positive.len();
    Stability {
        values: values.to_vec(),
        spread,
        within: spread <= factor && (zeros == 0 || zeros == values.len()),
    }
}
