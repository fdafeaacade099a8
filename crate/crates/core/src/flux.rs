//! Energy densities and their gradient fields.
//!
//! Orthotropic: `F(ξ) = Σ (1/p)(|ξ_i| − δ_i)₊^p`, flux `A = D_ξF` acting on
//! each component separately. Isotropic: `G(ξ) = (1/p)(|ξ| − λ)₊^p`. Both
//! fluxes vanish identically on a set of positive measure, and they are
//! evaluated through the positive part so that `ξ_i/|ξ_i|` is never formed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluxError {
    #[error("exponent p must be >= 2 and finite, got {0}")]
    InvalidExponent(f64),
    #[error("threshold delta[{index}] must be finite and >= 0, got {value}")]
    InvalidDelta { index: usize, value: f64 },
    #[error("orthotropic thresholds need at least one component")]
    EmptyDelta,
    #[error("isotropic threshold lambda must be > 0, got {0}")]
    InvalidLambda(f64),
}

/// `x^e` for `x >= 0`, exact for the common small exponents.
#[inline]
pub(crate) fn pos_pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 3.0 {
        x * x * x
    } else if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

#[inline]
fn euclid(xi: &[f64]) -> f64 {
    if xi.len() == 1 {
        xi[0].abs()
    } else {
        xi.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `(|s| − δ)₊^{p−1} sign(s)`; exactly zero for `|s| <= δ`.
#[inline]
pub fn scalar_flux(s: f64, delta: f64, p: f64) -> f64 {
    let a = s.abs() - delta;
    if a > 0.0 {
        pos_pow(a, p - 1.0).copysign(s)
    } else {
        0.0
    }
}

#[inline]
fn scalar_energy(s_abs: f64, threshold: f64, p: f64) -> f64 {
    let a = s_abs - threshold;
    if a > 0.0 {
        pos_pow(a, p) / p
    } else {
        0.0
    }
}

pub fn energy_f(xi: &[f64], delta: &[f64], p: f64) -> f64 {
    xi.iter()
        .zip(delta)
        .map(|(&s, &d)| scalar_energy(s.abs(), d, p))
        .sum()
}

pub fn flux_a_into(xi: &[f64], delta: &[f64], p: f64, out: &mut [f64]) {
    for ((o, &s), &d) in out.iter_mut().zip(xi).zip(delta) {
        *o = scalar_flux(s, d, p);
    }
}

pub fn flux_a(xi: &[f64], delta: &[f64], p: f64) -> Vec<f64> {
    let mut out = vec![0.0; xi.len()];
    flux_a_into(xi, delta, p, &mut out);
    out
}

pub fn energy_g(xi: &[f64], lambda: f64, p: f64) -> f64 {
    scalar_energy(euclid(xi), lambda, p)
}

/// `(|ξ| − λ)₊^{p−1} ξ/|ξ|`, zero whenever `|ξ| <= λ`.
pub fn flux_g_into(xi: &[f64], lambda: f64, p: f64, out: &mut [f64]) {
    let norm = euclid(xi);
    let a = norm - lambda;
    if a > 0.0 {
        let magnitude = pos_pow(a, p - 1.0);
        for (o, &s) in out.iter_mut().zip(xi) {
            *o = magnitude * (s / norm);
        }
    } else {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

pub fn flux_g(xi: &[f64], lambda: f64, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; xi.len()];
    flux_g_into(xi, lambda, p, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    Orthotropic { delta: Vec<f64> },
    Isotropic { lambda: f64 },
}

/// Exponent `p >= 2` together with the degeneracy thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyParams {
    p: f64,
    kind: Degeneracy,
}

fn check_p(p: f64) -> Result<(), FluxError> {
    if p >= 2.0 && p.is_finite() {
        Ok(())
    } else {
        Err(FluxError::InvalidExponent(p))
    }
}

impl DegeneracyParams {
    pub fn orthotropic(p: f64, delta: Vec<f64>) -> Result<Self, FluxError> {
        check_p(p)?;
        if delta.is_empty() {
            return Err(FluxError::EmptyDelta);
        }
        if let Some((index, &value)) = delta
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d >= 0.0))
        {
            return Err(FluxError::InvalidDelta { index, value });
        }
        Ok(Self {
            p,
            kind: Degeneracy::Orthotropic { delta },
        })
    }

    pub fn isotropic(p: f64, lambda: f64) -> Result<Self, FluxError> {
        check_p(p)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(FluxError::InvalidLambda(lambda));
        }
        Ok(Self {
            p,
            kind: Degeneracy::Isotropic { lambda },
        })
    }

    /// Isotropic flux with `λ = 0`, i.e. the classical p-Laplacian. Only
    /// used as a reference in unit tests.
    #[cfg(test)]
    pub(crate) fn p_laplacian(p: f64) -> Self {
        Self {
            p,
            kind: Degeneracy::Isotropic { lambda: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<(), FluxError> {
        match &self.kind {
            Degeneracy::Orthotropic { delta } => {
                Self::orthotropic(self.p, delta.clone()).map(|_| ())
            }
            Degeneracy::Isotropic { lambda } => Self::isotropic(self.p, *lambda).map(|_| ()),
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kind(&self) -> &Degeneracy {
        &self.kind
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.kind, Degeneracy::Isotropic { .. })
    }

    /// `δ = max δ_i` (orthotropic) or `λ` (isotropic).
    pub fn max_threshold(&self) -> f64 {
        match &self.kind {
            Degeneracy::Orthotropic { delta } => delta.iter().copied().fold(0.0, f64::max),
            Degeneracy::Isotropic { lambda } => *lambda,
        }
    }

    /// Number of components the thresholds were given for, if fixed.
    pub fn required_dim(&self) -> Option<usize> {
        match &self.kind {
            Degeneracy::Orthotropic { delta } => Some(delta.len()),
            Degeneracy::Isotropic { .. } => None,
        }
    }

    #[inline]
    pub fn energy(&self, xi: &[f64]) -> f64 {
        match &self.kind {
            Degeneracy::Orthotropic { delta } => energy_f(xi, delta, self.p),
            Degeneracy::Isotropic { lambda } => energy_g(xi, *lambda, self.p),
        }
    }

    #[inline]
    pub fn flux_into(&self, xi: &[f64], out: &mut [f64]) {
        match &self.kind {
            Degeneracy::Orthotropic { delta } => flux_a_into(xi, delta, self.p, out),
            Degeneracy::Isotropic { lambda } => flux_g_into(xi, *lambda, self.p, out),
        }
    }

    pub fn flux(&self, xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; xi.len()];
        self.flux_into(xi, &mut out);
        out
    }

    /// Degenerate part of the gradient energy: `Σ(|ξ_i| − δ_i)₊^p` or
    /// `(|ξ| − λ)₊^p`.
    pub fn degenerate_power(&self, xi: &[f64]) -> f64 {
        self.p * self.energy(xi)
    }

    /// Whether the flux vanishes at `ξ`.
    pub fn in_degeneracy_set(&self, xi: &[f64]) -> bool {
        match &self.kind {
            Degeneracy::Orthotropic { delta } => {
                xi.iter().zip(delta).all(|(s, d)| s.abs() <= *d)
            }
            Degeneracy::Isotropic { lambda } => euclid(xi) <= *lambda,
        }
    }

    /// Lipschitz bound of the scalar flux on `|s| <= m`: `(p−1) m^{p−2}`,
    /// with `m^0 := 1` at `p = 2`.
    pub fn flux_lipschitz(&self, m: f64) -> f64 {
        if self.p == 2.0 {
            1.0
        } else {
            (self.p - 1.0) * pos_pow(m, self.p - 2.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scalar_flux_examples() {
        assert_eq!(scalar_flux(0.5, 1.0, 2.0), 0.0);
        assert_eq!(scalar_flux(0.0, 0.0, 2.0), 0.0);
        assert_eq!(scalar_flux(0.0, 0.0, 3.5), 0.0);
        assert_eq!(scalar_flux(2.0, 1.0, 2.0), 1.0);
        assert_eq!(scalar_flux(-3.0, 1.0, 2.0), -2.0);
        assert_eq!(scalar_flux(2.0, 0.0, 3.0), 4.0);
        assert_eq!(scalar_flux(-1.0, 1.0, 2.0), 0.0);
    }

    #[test]
    fn energy_f_examples() {
        assert_eq!(energy_f(&[0.5, -0.9], &[1.0, 1.0], 2.0), 0.0);
        assert_eq!(energy_f(&[2.0, 0.0], &[1.0, 1.0], 2.0), 0.5);
        assert_eq!(energy_f(&[3.0, -2.0], &[1.0, 0.0], 2.0), 4.0);
    }

    #[test]
    fn flux_a_examples() {
        assert_eq!(flux_a(&[0.5, -0.9], &[1.0, 1.0], 2.0), vec![0.0, 0.0]);
        assert_eq!(flux_a(&[2.0, -3.0], &[1.0, 1.0], 2.0), vec![1.0, -2.0]);
    }

    #[test]
    fn isotropic_examples() {
        assert_eq!(energy_g(&[0.3, 0.4], 1.0, 2.0), 0.0);
        assert_eq!(flux_g(&[0.3, 0.4], 1.0, 2.0), vec![0.0, 0.0]);
        assert_eq!(flux_g(&[0.0, 0.0], 1.0, 3.0), vec![0.0, 0.0]);
        assert_eq!(energy_g(&[3.0, 4.0], 1.0, 2.0), 8.0);
        let g = flux_g(&[3.0, 4.0], 1.0, 2.0);
        assert!((g[0] - 2.4).abs() < 1e-15 && (g[1] - 3.2).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_coincidence_is_bitwise() {
        for &p in &[2.0, 2.5, 3.0, 4.7] {
            for k in -200..=200 {
                let s = k as f64 * 0.0173;
                assert_eq!(flux_g(&[s], 0.6, p)[0].to_bits(), scalar_flux(s, 0.6, p).to_bits());
                assert_eq!(energy_g(&[s], 0.6, p).to_bits(), energy_f(&[s], &[0.6], p).to_bits());
            }
        }
    }

    #[test]
    fn zero_threshold_reduces_to_classical_operators() {
        let xi = [0.7, -1.3, 2.1];
        assert_eq!(flux_a(&xi, &[0.0; 3], 2.0), xi.to_vec());
        let pseudo = flux_a(&xi, &[0.0; 3], 3.4);
        for (a, s) in pseudo.iter().zip(&xi) {
            assert!((a - s.abs().powf(1.4) * s).abs() < 1e-13);
        }
        let plap = DegeneracyParams::p_laplacian(3.0);
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (a, s) in plap.flux(&xi).iter().zip(&xi) {
            assert!((a - norm * s).abs() < 1e-13);
        }
    }

    #[test]
    fn constructors_validate() {
        assert!(DegeneracyParams::orthotropic(1.5, vec![0.0]).is_err());
        assert!(DegeneracyParams::orthotropic(2.0, vec![-0.1]).is_err());
        assert!(DegeneracyParams::orthotropic(2.0, vec![]).is_err());
        assert!(DegeneracyParams::isotropic(2.0, 0.0).is_err());
        assert!(DegeneracyParams::isotropic(3.0, 0.5).is_ok());
        let p = DegeneracyParams::orthotropic(2.0, vec![0.2, 0.9]).unwrap();
        assert_eq!(p.max_threshold(), 0.9);
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, xi: &[f64], i: usize, h: f64) -> f64 {
        let mut a = xi.to_vec();
        let mut b = xi.to_vec();
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn flux_is_odd(xi in prop::collection::vec(-4.0f64..4.0, 3), p in 2.0f64..5.0) {
            let params = DegeneracyParams::orthotropic(p, vec![0.5, 1.0, 0.0]).unwrap();
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            let a = params.flux(&xi);
            let b = params.flux(&neg);
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(*x, -*y);
            }
            prop_assert_eq!(params.energy(&xi), params.energy(&neg));
        }

        #[test]
        fn gradient_matches_finite_differences(
            xi in prop::collection::vec(-3.0f64..3.0, 2),
            p in 2.0f64..4.0,
        ) {
            let delta = [0.4, 0.8];
            prop_assume!(xi.iter().zip(&delta).all(|(s, d)| (s.abs() - d).abs() > 1e-3));
            let a = flux_a(&xi, &delta, p);
            for i in 0..2 {
                let fd = central_diff(|x| energy_f(x, &delta, p), &xi, i, 1e-6);
                prop_assert!((fd - a[i]).abs() <= 1e-6 * a[i].abs().max(1e-2) + 1e-8);
            }
        }
    }
}
