use serde::{Deserialize, Serialize};

use super::{DegiorgiError, Window};
use crate::flux::DegeneracyParams;
use crate::geometry::Cylinder;
use crate::solver::{Field, Stencil};

/// Both sides of the local energy estimate at one level `k`:
///
/// ```text
/// sup_t ∫(u−k)₊² ζ^p + ∬ E_deg(Du) ζ^p 1{u>k}
///     <= p ∬(u−k)₊² ζ^{p−1} ∂_t ζ + C ∬(u−k)₊^p |Dζ|^p
/// ```
///
/// with `E_deg(ξ) = Σ(|ξ_i|−δ_i)₊^p` or `(|ξ|−λ)₊^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub k: f64,
    pub sup_term: f64,
    pub grad_term: f64,
    pub time_term: f64,
    pub space_term: f64,
    /// `(sup_term + grad_term) / max(time_term + space_term, ε)`; 0 when
    /// the left side vanishes.
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
}

impl EnergyReport {
    pub fn lhs(&self) -> f64 {
        self.sup_term + self.grad_term
    }

    pub fn rhs_unit(&self) -> f64 {
        self.time_term + self.space_term
    }
}

/// Evaluates all four terms by nodal quadrature over the nodes of `cyl`.
///
/// Spatial gradients are forward differences (backward on the upper faces
/// of the grid), `∂_t ζ` is a forward difference in time.
pub fn energy_estimate_report(
    u: &Field,
    k: f64,
    cyl: &Cylinder,
    zeta: &Field,
    params: &DegeneracyParams,
) -> Result<EnergyReport, DegiorgiError> {
    if !(k > 0.0) {
        return Err(DegiorgiError::NonPositiveLevel(k));
    }
    let grid = u.grid();
    if zeta.grid() != grid {
        return Err(DegiorgiError::Invalid("cut-off lives on a different grid".into()));
    }
    if !grid.contains_cylinder(cyl) {
        return Err(DegiorgiError::OutsideGrid);
    }
    let window = Window::new(cyl, grid);
    let p = params.p();
    let n = grid.dim();
    let stencil = Stencil::new(grid);
    let mut du = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let space_weight = grid.cell_volume();
    let last = grid.levels() - 1;

    let mut sup_term = 0.0_f64;
    let mut grad_term = 0.0;
    let mut time_term = 0.0;
    let mut space_term = 0.0;
    for m in window.levels.clone() {
        let us = u.slice(m);
        let zs = zeta.slice(m);
        let mut level_mass = 0.0;
        for &i in &window.nodes {
            let excess = (us[i] - k).max(0.0);
            if excess == 0.0 {
                continue;
            }
            let z = zs[i];
            let zp = z.powf(p);
            level_mass += excess * excess * zp;

            stencil.node_gradient(us, i, &mut du);
            grad_term += params.degenerate_power(&du) * zp;

            let dt_zeta = if m < last {
                (zeta.at(m + 1, i) - z) / grid.tau()
            } else {
                (z - zeta.at(m - 1, i)) / grid.tau()
            };
            time_term += excess * excess * z.powf(p - 1.0) * dt_zeta;

            stencil.node_gradient(zs, i, &mut dz);
            let dz_norm = dz.iter().map(|v| v * v).sum::<f64>().sqrt();
            space_term += excess.powf(p) * dz_norm.powf(p);
        }
        sup_term = sup_term.max(level_mass * space_weight);
    }
    let weight = window.weight;
    let grad_term = grad_term * weight;
    let time_term = p * time_term * weight;
    let space_term = space_term * weight;
    let lhs = sup_term + grad_term;
    let rhs = time_term + space_term;
    let fitted_c = if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs.max(f64::MIN_POSITIVE)
    };
    Ok(EnergyReport {
        k,
        sup_term,
        grad_term,
        time_term,
        space_term,
        fitted_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degiorgi::cutoff_zeta;
    use crate::geometry::{make_shrinking_family, BoundaryKind, Grid};

    fn grid() -> Grid {
        Grid::new(vec![-1.0, -1.0], &[2.0, 2.0], 0.125, 0.0625, 16, BoundaryKind::Dirichlet).unwrap()
    }

    #[test]
    fn high_level_gives_zero_terms() {
        let g = grid();
        let u = Field::from_fn(g.clone(), |x, t| x[0] * x[1] + t);
        let f = make_shrinking_family(0.5, 1.0, 1.0, vec![0.0, 0.0], 1.0).unwrap();
        let z = cutoff_zeta(&f, 0, &g);
        let params = DegeneracyParams::orthotropic(2.0, vec![0.0, 0.0]).unwrap();
        let r = energy_estimate_report(&u, 3.0, &f.q(0), &z, &params).unwrap();
        assert_eq!((r.sup_term, r.grad_term, r.time_term, r.space_term, r.fitted_c), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(energy_estimate_report(&u, 0.0, &f.q(0), &z, &params).is_err());
    }

    #[test]
    fn degenerate_state_has_no_gradient_term() {
        let g = grid();
        let u = Field::from_fn(g.clone(), |x, _| 0.5 * (x[0] + x[1]));
        let f = make_shrinking_family(0.5, 1.0, 1.0, vec![0.0, 0.0], 1.0).unwrap();
        let z = cutoff_zeta(&f, 0, &g);
        let params = DegeneracyParams::orthotropic(2.0, vec![1.0, 1.0]).unwrap();
        let r = energy_estimate_report(&u, 0.1, &f.q(0), &z, &params).unwrap();
        assert_eq!(r.grad_term, 0.0);
        assert!(r.sup_term > 0.0 && r.time_term > 0.0);
    }
}
