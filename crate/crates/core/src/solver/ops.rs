//! Forward-difference gradient on the cell lattice and its exact negative
//! adjoint, the discrete divergence.
//!
//! A cell is identified with its lower-corner node `c`; its gradient is
//! `(u(c + e_i) − u(c))/h` for every axis. On a Dirichlet grid with `N`
//! cells per axis the cell lattice is `{0..N}ⁿ` (lower corners), on a
//! periodic grid every node is a cell. Summation by parts
//! `Σ_c ⟨F_c, D_h v_c⟩ = −Σ_x (div_h F)(x) v(x)` holds exactly for every `v`.

use crate::flux::DegeneracyParams;
use crate::geometry::{BoundaryKind, Grid};

const NONE: usize = usize::MAX;

/// Gradient values per cell, `dim` components each.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGradient {
    pub dim: usize,
    /// Lower-corner node of each cell.
    pub cells: Vec<usize>,
    pub values: Vec<f64>,
}

impl CellGradient {
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Precomputed neighbor tables for one grid.
#[derive(Debug, Clone)]
pub struct Stencil {
    dim: usize,
    h: f64,
    nodes: usize,
    forward: Vec<usize>,
    backward: Vec<usize>,
    is_cell: Vec<bool>,
    cells: Vec<usize>,
    free: Vec<usize>,
    is_free: Vec<bool>,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        let dim = grid.dim();
        let nodes = grid.node_count();
        let counts = grid.nodes_per_axis();
        let strides = grid.strides();
        let periodic = grid.boundary() == BoundaryKind::Periodic;
        let mut forward = vec![NONE; nodes * dim];
        let mut backward = vec![NONE; nodes * dim];
        let mut is_cell = vec![true; nodes];
        let mut is_free = vec![true; nodes];
        for idx in 0..nodes {
            let multi = grid.multi_index(idx);
            for axis in 0..dim {
                let m = multi[axis];
                let (count, stride) = (counts[axis], strides[axis]);
                forward[idx * dim + axis] = if m + 1 < count {
                    idx + stride
                } else if periodic {
                    idx - m * stride
                } else {
                    NONE
                };
                backward[idx * dim + axis] = if m > 0 {
                    idx - stride
                } else if periodic {
                    idx + (count - 1) * stride
                } else {
                    NONE
                };
                if !periodic {
                    if m + 1 == count {
                        is_cell[idx] = false;
                    }
                    if m == 0 || m + 1 == count {
                        is_free[idx] = false;
                    }
                }
            }
        }
        let cells = (0..nodes).filter(|&i| is_cell[i]).collect();
        let free = (0..nodes).filter(|&i| is_free[i]).collect();
        Self {
            dim,
            h: grid.h(),
            nodes,
            forward,
            backward,
            is_cell,
            cells,
            free,
            is_free,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Unknowns of an implicit step (interior nodes, or all nodes when periodic).
    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn is_free(&self, node: usize) -> bool {
        self.is_free[node]
    }

    pub fn is_cell(&self, node: usize) -> bool {
        self.is_cell[node]
    }

    pub fn forward(&self, node: usize, axis: usize) -> Option<usize> {
        let f = self.forward[node * self.dim + axis];
        (f != NONE).then_some(f)
    }

    pub fn backward(&self, node: usize, axis: usize) -> Option<usize> {
        let b = self.backward[node * self.dim + axis];
        (b != NONE).then_some(b)
    }

    /// Forward differences at a cell.
    #[inline]
    pub fn cell_gradient(&self, v: &[f64], cell: usize, out: &mut [f64]) {
        let base = cell * self.dim;
        for (axis, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = (v[self.forward[base + axis]] - v[cell]) / self.h;
        }
    }

    /// Gradient usable at any node: forward differences where the forward
    /// neighbor exists, backward differences on the upper Dirichlet faces.
    pub fn node_gradient(&self, v: &[f64], node: usize, out: &mut [f64]) {
        let base = node * self.dim;
        for (axis, o) in out.iter_mut().enumerate().take(self.dim) {
            let f = self.forward[base + axis];
            *o = if f != NONE {
                (v[f] - v[node]) / self.h
            } else {
                let b = self.backward[base + axis];
                if b != NONE {
                    (v[node] - v[b]) / self.h
                } else {
                    0.0
                }
            };
        }
    }

    /// Node-indexed flux `A(D_h v)` (zero at non-cell nodes). Returns the
    /// largest gradient component magnitude seen.
    pub fn flux_field(&self, v: &[f64], params: &DegeneracyParams, out: &mut [f64]) -> f64 {
        let mut grad = vec![0.0; self.dim];
        let mut max_grad = 0.0_f64;
        out.iter_mut().for_each(|o| *o = 0.0);
        for &c in &self.cells {
            self.cell_gradient(v, c, &mut grad);
            for g in &grad {
                max_grad = max_grad.max(g.abs());
            }
            params.flux_into(&grad, &mut out[c * self.dim..(c + 1) * self.dim]);
        }
        max_grad
    }

    /// `max_c max_i |D_i v(c)|`.
    pub fn max_gradient(&self, v: &[f64]) -> f64 {
        let mut grad = vec![0.0; self.dim];
        let mut max_grad = 0.0_f64;
        for &c in &self.cells {
            self.cell_gradient(v, c, &mut grad);
            for g in &grad {
                max_grad = max_grad.max(g.abs());
            }
        }
        max_grad
    }

    /// Negative adjoint of the cell gradient applied to a node-indexed flux.
    #[inline]
    pub fn divergence_at(&self, flux: &[f64], node: usize) -> f64 {
        let base = node * self.dim;
        let mut acc = 0.0;
        for axis in 0..self.dim {
            let own = if self.is_cell[node] {
                flux[base + axis]
            } else {
                0.0
            };
            let b = self.backward[base + axis];
            let behind = if b != NONE && self.is_cell[b] {
                flux[b * self.dim + axis]
            } else {
                0.0
            };
            acc += own - behind;
        }
        acc / self.h
    }

    pub fn divergence(&self, flux: &[f64], out: &mut [f64]) {
        for (node, o) in out.iter_mut().enumerate() {
            *o = self.divergence_at(flux, node);
        }
    }

    /// `Σ_cells E(D_h v)`, without the `hⁿ` weight.
    pub fn energy_sum(&self, v: &[f64], params: &DegeneracyParams) -> f64 {
        let mut grad = vec![0.0; self.dim];
        let mut acc = 0.0;
        for &c in &self.cells {
            self.cell_gradient(v, c, &mut grad);
            acc += params.energy(&grad);
        }
        acc
    }
}

/// Forward-difference gradient of a spatial slice on the cell lattice.
pub fn discrete_gradient(slice: &[f64], grid: &Grid) -> CellGradient {
    let stencil = Stencil::new(grid);
    let dim = grid.dim();
    let mut values = vec![0.0; stencil.cells().len() * dim];
    for (k, &c) in stencil.cells().iter().enumerate() {
        stencil.cell_gradient(slice, c, &mut values[k * dim..(k + 1) * dim]);
    }
    CellGradient {
        dim,
        cells: stencil.cells().to_vec(),
        values,
    }
}

/// Discrete divergence of a cell field, the exact negative adjoint of
/// [`discrete_gradient`].
pub fn discrete_divergence(flux: &CellGradient, grid: &Grid) -> Vec<f64> {
    let stencil = Stencil::new(grid);
    let dim = grid.dim();
    let mut node_flux = vec![0.0; grid.node_count() * dim];
    for (k, &c) in flux.cells.iter().enumerate() {
        node_flux[c * dim..(c + 1) * dim].copy_from_slice(flux.at(k));
    }
    let mut out = vec![0.0; grid.node_count()];
    stencil.divergence(&node_flux, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid2(boundary: BoundaryKind) -> Grid {
        Grid::from_cells(vec![0.0, 0.0], vec![5, 4], 0.5, 0.1, 1, boundary).unwrap()
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = grid2(BoundaryKind::Dirichlet);
        let grad = discrete_gradient(&vec![3.7; g.node_count()], &g);
        assert!(grad.values.iter().all(|&v| v == 0.0));
        assert_eq!(grad.len(), 5 * 4);
    }

    #[test]
    fn affine_gradient_is_exact() {
        let g = grid2(BoundaryKind::Dirichlet);
        let u: Vec<f64> = (0..g.node_count()).map(|i| g.node_coords(i)[0]).collect();
        let grad = discrete_gradient(&u, &g);
        for k in 0..grad.len() {
            assert_eq!(grad.at(k), &[1.0, 0.0]);
        }
    }

    #[test]
    fn first_order_for_sine() {
        let err = |cells: usize| {
            let h = 1.0 / cells as f64;
            let g = Grid::from_cells(vec![0.0], vec![cells], h, 0.1, 1, BoundaryKind::Dirichlet)
                .unwrap();
            let u: Vec<f64> = (0..g.node_count()).map(|i| g.coord(0, i).sin()).collect();
            let grad = discrete_gradient(&u, &g);
            grad.cells
                .iter()
                .enumerate()
                .map(|(k, &c)| (grad.at(k)[0] - g.coord(0, c).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn periodic_divergence_sums_to_zero() {
        let g = grid2(BoundaryKind::Periodic);
        let s = Stencil::new(&g);
        assert_eq!(s.free().len(), g.node_count());
        let u: Vec<f64> = (0..g.node_count()).map(|i| ((i * 7919) % 13) as f64).collect();
        let params = DegeneracyParams::orthotropic(3.0, vec![0.5, 1.0]).unwrap();
        let mut flux = vec![0.0; g.node_count() * 2];
        s.flux_field(&u, &params, &mut flux);
        let mut div = vec![0.0; g.node_count()];
        s.divergence(&flux, &mut div);
        assert!(div.iter().sum::<f64>().abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn summation_by_parts(
            seed in prop::collection::vec(-1.0f64..1.0, 30 * 3),
            periodic in any::<bool>(),
        ) {
            let kind = if periodic { BoundaryKind::Periodic } else { BoundaryKind::Dirichlet };
            let g = grid2(kind);
            let nodes = g.node_count();
            let v = &seed[..nodes];
            let cells = discrete_gradient(v, &g).cells;
            let fvals: Vec<f64> = seed.iter().cycle().skip(7).take(cells.len() * 2).copied().collect();
            let f = CellGradient { dim: 2, cells, values: fvals };
            let grad = discrete_gradient(v, &g);
            let lhs: f64 = grad.values.iter().zip(&f.values).map(|(a, b)| a * b).sum();
            let div = discrete_divergence(&f, &g);
            let rhs: f64 = -div.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
        }
    }
}
