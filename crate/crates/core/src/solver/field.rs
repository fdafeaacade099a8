use serde::{Deserialize, Serialize};

use crate::geometry::Grid;

/// Space-time samples on a grid, stored level by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        let len = grid.node_count() * grid.levels();
        Self {
            grid,
            values: vec![0.0; len],
        }
    }

    /// Samples `f(x, t)` at every node and level.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let nodes = grid.node_count();
        let coords = grid.all_coords();
        let n = grid.dim();
        let mut values = Vec::with_capacity(nodes * grid.levels());
        for m in 0..grid.levels() {
            let t = grid.time(m);
            for idx in 0..nodes {
                values.push(f(&coords[idx * n..(idx + 1) * n], t));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Option<Self> {
        (values.len() == grid.node_count() * grid.levels()).then_some(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, level: usize) -> &[f64] {
        let nodes = self.grid.node_count();
        &self.values[level * nodes..(level + 1) * nodes]
    }

    pub fn slice_mut(&mut self, level: usize) -> &mut [f64] {
        let nodes = self.grid.node_count();
        &mut self.values[level * nodes..(level + 1) * nodes]
    }

    pub fn at(&self, level: usize, node: usize) -> f64 {
        self.values[level * self.grid.node_count() + node]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
