//! Rectangular grids and value fields on them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Axis-aligned rectangular grid with at least three nodes per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub nodes: Vec<usize>,
    #[serde(skip)]
    spacing: Vec<f64>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, nodes: Vec<usize>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert_eq!(lo.len(), nodes.len());
        assert!(nodes.iter().all(|&n| n >= 3), "grids need at least 3 nodes per axis");
        assert!(
            lo.iter().zip(&hi).all(|(l, h)| h > l),
            "grid extents must have positive width"
        );
        let mut g = Grid {
            lo,
            hi,
            nodes,
            spacing: vec![],
            strides: vec![],
        };
        g.rebuild_cache();
        g
    }

    /// Recomputes derived quantities, needed after deserialization.
    pub fn rebuild_cache(&mut self) {
        self.spacing = self
            .lo
            .iter()
            .zip(&self.hi)
            .zip(&self.nodes)
            .map(|((l, h), n)| (h - l) / (*n as f64 - 1.0))
            .collect();
        let dim = self.nodes.len();
        let mut strides = vec![1usize; dim];
        for j in (0..dim.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * self.nodes[j + 1];
        }
        self.strides = strides;
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(m, s)| m * s).sum()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.dim()];
        let mut rem = flat;
        for j in 0..self.dim() {
            out[j] = rem / self.strides[j];
            rem %= self.strides[j];
        }
        out
    }

    pub fn coords_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for j in 0..self.dim() {
            let m = rem / self.strides[j];
            rem %= self.strides[j];
            out[j] = self.lo[j] + m as f64 * self.spacing[j];
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.coords_into(flat, &mut out);
        out
    }

    /// Index of the nearest node; clamps to the grid.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut idx = 0usize;
        for j in 0..self.dim() {
            let r = ((x[j] - self.lo[j]) / self.spacing[j]).round();
            let m = (r.max(0.0) as usize).min(self.nodes[j] - 1);
            idx += m * self.strides[j];
        }
        idx
    }

    /// Neighbor along `axis` offset by -1 or +1; `None` at the grid edge.
    pub fn neighbor(&self, flat: usize, axis: usize, dir: isize) -> Option<usize> {
        let m = (flat / self.strides[axis]) % self.nodes[axis];
        let next = m as isize + dir;
        if next < 0 || next as usize >= self.nodes[axis] {
            None
        } else {
            Some((flat as isize + dir * self.strides[axis] as isize) as usize)
        }
    }

    /// True when the node touches the edge of the grid box in any dimension.
    pub fn on_edge(&self, flat: usize) -> bool {
        (0..self.dim()).any(|j| {
            let m = (flat / self.strides[j]) % self.nodes[j];
            m == 0 || m == self.nodes[j] - 1
        })
    }
}

/// A value function on a grid at one time slice, values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub grid: Arc<Grid>,
    pub t: f64,
    pub values: Vec<f64>,
}

impl ValueField {
    pub fn constant(grid: Arc<Grid>, t: f64, value: f64) -> Self {
        let n = grid.node_count();
        ValueField {
            grid,
            t,
            values: vec![value; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, t: f64, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; grid.node_count()];
        let mut x = vec![0.0; grid.dim()];
        for (i, v) in values.iter_mut().enumerate() {
            grid.coords_into(i, &mut x);
            *v = f(&x);
        }
        ValueField { grid, t, values }
    }

    /// Value at the nearest node.
    pub fn at(&self, x: &[f64]) -> f64 {
        self.values[self.grid.nearest_node(x)]
    }

    /// Multilinear interpolation, clamped to the grid box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let dim = g.dim();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0f64; dim];
        for j in 0..dim {
            let r = ((x[j] - g.lo[j]) / g.spacing[j]).clamp(0.0, (g.nodes[j] - 1) as f64);
            let b = (r.floor() as usize).min(g.nodes[j] - 2);
            base[j] = b;
            frac[j] = r - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut multi = base.clone();
            for j in 0..dim {
                if corner >> j & 1 == 1 {
                    multi[j] += 1;
                    w *= frac[j];
                } else {
                    w *= 1.0 - frac[j];
                }
            }
            if w != 0.0 {
                acc += w * self.values[g.flat_index(&multi)];
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let g = Grid::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![5, 9]);
        assert_eq!(g.node_count(), 45);
        for flat in [0usize, 7, 31, 44] {
            let multi = g.multi_index(flat);
            assert_eq!(g.flat_index(&multi), flat);
        }
        let c = g.coords(g.flat_index(&[2, 4]));
        assert!((c[0] - 0.5).abs() < 1e-15);
        assert!((c[1] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn nearest_node_clamps() {
        let g = Grid::new(vec![0.0], vec![1.0], vec![5]);
        assert_eq!(g.nearest_node(&[0.26]), 1);
        assert_eq!(g.nearest_node(&[-3.0]), 0);
        assert_eq!(g.nearest_node(&[9.0]), 4);
    }

    #[test]
    fn neighbors_stop_at_edges() {
        let g = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![3, 3]);
        let center = g.flat_index(&[1, 1]);
        assert_eq!(g.neighbor(center, 0, 1), Some(g.flat_index(&[2, 1])));
        assert_eq!(g.neighbor(center, 1, -1), Some(g.flat_index(&[1, 0])));
        let corner = g.flat_index(&[0, 0]);
        assert_eq!(g.neighbor(corner, 0, -1), None);
        assert!(g.on_edge(corner));
        assert!(!g.on_edge(center));
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let g = Arc::new(Grid::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![5, 5]));
        let f = ValueField::from_fn(g, 0.0, |x| 0.25 + 0.5 * x[0] - 0.125 * x[1]);
        for p in [[0.33, 0.77], [0.5, 1.9], [0.0, 0.0], [1.0, 2.0]] {
            let exact = 0.25 + 0.5 * p[0] - 0.125 * p[1];
            assert!((f.interpolate(&p) - exact).abs() < 1e-12);
        }
    }
}
