use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{corner_of, GridDescriptor, Point, WeightedGrid};

/// Nodal values on a shared grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<WeightedGrid>,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct FieldDump<'a> {
    grid: GridDescriptor,
    nodes: Vec<[f64; 3]>,
    values: &'a [f64],
}

impl ScalarField {
    pub fn new(grid: Arc<WeightedGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "{} values for {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<WeightedGrid>) -> Self {
        let n = grid.node_count();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(grid: Arc<WeightedGrid>, f: F) -> Result<Self>
    where
        F: Fn(&Point) -> f64 + Sync + Send,
    {
        let values = crate::par::map_indexed(grid.node_count(), |i| f(&grid.node_coords(i)));
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<WeightedGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values on the thin nodes, aligned with `grid().thin_nodes()`.
    pub fn thin_trace(&self) -> Vec<f64> {
        self.grid.thin_nodes().iter().map(|&i| self.values[i]).collect()
    }

    /// Nodewise map, keeping the grid.
    pub fn map<F: Fn(&Point, f64) -> f64>(&self, f: F) -> Result<Self> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(&self.grid.node_coords(i), v))
            .collect();
        Self::new(self.grid.clone(), values)
    }

    /// `self + t·other` on the same grid.
    pub fn axpy(&self, t: f64, other: &ScalarField) -> Result<Self> {
        if !Arc::ptr_eq(&self.grid, &other.grid) {
            return Err(Error::InvalidParameter("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + t * b)
            .collect();
        Self::new(self.grid.clone(), values)
    }

    /// Multilinear interpolation; `None` outside the active lattice.
    pub fn interpolate(&self, x: &Point) -> Option<f64> {
        let g = &*self.grid;
        let dim = g.dim();
        let h = g.spacing();
        let mut lower = [0i32; 3];
        let mut t = [0.0; 3];
        for d in 0..dim {
            let mut q = x[d] / h;
            if d == dim - 1 && q < 0.0 && q > -1e-9 {
                q = 0.0;
            }
            if !q.is_finite() {
                return None;
            }
            // Snap lattice-plane hits so that absent neighbours get zero weight.
            let r = q.round();
            if (q - r).abs() < 1e-9 {
                q = r;
            }
            let f = q.floor();
            lower[d] = f as i32;
            t[d] = q - f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let p = corner_of(lower, corner, dim);
            let mut w = 1.0;
            for d in 0..dim {
                w *= if corner & (1 << d) != 0 { t[d] } else { 1.0 - t[d] };
            }
            match g.node_at(p) {
                Some(id) => acc += w * self.values[id],
                None if w == 0.0 => {}
                None => return None,
            }
        }
        Some(acc)
    }

    /// Tangential gradient of the thin trace at a thin node by central
    /// differences (one-sided where a neighbour is missing).
    pub fn thin_gradient(&self, id: usize) -> [f64; 2] {
        let g = &*self.grid;
        let dim = g.dim();
        let h = g.spacing();
        let p = g.node_lattice(id);
        let mut grad = [0.0; 2];
        for d in 0..dim - 1 {
            let fwd = g.node_at(bump(p, d, 1));
            let bwd = g.node_at(bump(p, d, -1));
            grad[d] = match (fwd, bwd) {
                (Some(f), Some(b)) => (self.values[f] - self.values[b]) / (2.0 * h),
                (Some(f), None) => (self.values[f] - self.values[id]) / h,
                (None, Some(b)) => (self.values[id] - self.values[b]) / h,
                (None, None) => 0.0,
            };
        }
        grad
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// JSON dump: grid descriptor, node coordinates and values.
    pub fn to_json(&self) -> Result<String> {
        let nodes = (0..self.grid.node_count()).map(|i| self.grid.node_coords(i)).collect();
        Ok(serde_json::to_string(&FieldDump {
            grid: self.grid.descriptor(),
            nodes,
            values: &self.values,
        })?)
    }
}

pub(crate) fn bump(p: [i32; 3], d: usize, by: i32) -> [i32; 3] {
    let mut q = p;
    q[d] += by;
    q
}
