//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use orthodeg::geometry::{BoundaryKind, Grid};

pub fn line(cells: usize, h: f64, tau: f64, steps: usize) -> Grid {
    Grid::from_cells(vec![0.0], vec![cells], h, tau, steps, BoundaryKind::Dirichlet).unwrap()
}

/// Direct tridiagonal solve of `(I/τ − Δ_h) v = prev/τ` with fixed ends.
pub fn thomas_heat_step(prev: &[f64], left: f64, right: f64, h: f64, tau: f64) -> Vec<f64> {
    let n = prev.len();
    let interior = n - 2;
    let diag = 1.0 / tau + 2.0 / (h * h);
    let off = -1.0 / (h * h);
    let mut rhs: Vec<f64> = (1..n - 1).map(|i| prev[i] / tau).collect();
    rhs[0] -= off * left;
    rhs[interior - 1] -= off * right;
    let mut c = vec![0.0; interior];
    let mut d = vec![0.0; interior];
    c[0] = off / diag;
    d[0] = rhs[0] / diag;
    for i in 1..interior {
        let m = diag - off * c[i - 1];
        c[i] = off / m;
        d[i] = (rhs[i] - off * d[i - 1]) / m;
    }
    let mut x = vec![0.0; interior];
    x[interior - 1] = d[interior - 1];
    for i in (0..interior - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    let mut out = vec![left];
    out.extend(x);
    out.push(right);
    out
}

/// Zooming lattice search for the minimizer of a convex function of three
/// variables.
pub fn lattice_minimize(f: impl Fn(&[f64; 3]) -> f64, start: [f64; 3], radius: f64) -> [f64; 3] {
    let mut center = start;
    let mut r = radius;
    let points = 40;
    while r > 1e-7 {
        let step = 2.0 * r / points as f64;
        let mut best = (f64::INFINITY, center);
        for a in 0..=points {
            for b in 0..=points {
                for c in 0..=points {
                    let x = [
                        center[0] - r + a as f64 * step,
                        center[1] - r + b as f64 * step,
                        center[2] - r + c as f64 * step,
                    ];
                    let v = f(&x);
                    if v < best.0 {
                        best = (v, x);
                    }
                }
            }
        }
        center = best.1;
        r = 4.0 * step;
    }
    center
}
