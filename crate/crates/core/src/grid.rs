//! Structured half-domain lattices carrying the degenerate weight `x_n^a`.
//!
//! Nodes sit at `h·(i, j[, k])` with the last coordinate normal to the thin
//! space `{x_n = 0}`. Cells cut by a curved boundary carry a volume fraction.
//! Bulk weights use the exact row integral `∫ x_n^a` over each cell instead of
//! a midpoint sample, which keeps the weight consistent in the first row of
//! cells where `x_n^a` is singular or degenerate.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::FreeSystem;
use crate::par;
use crate::params::Params;
use crate::quadrature::power_integral;

/// Smallest accepted number of cells per radius.
pub const MIN_RESOLUTION: usize = 8;

pub(crate) const NO_NODE: u32 = u32::MAX;

/// Point in R^3; two-dimensional grids leave the third slot at zero and use
/// `x[1]` as the normal coordinate.
pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// `{|x| ≤ radius, x_n ≥ 0}`.
    HalfBall { radius: f64 },
    /// `{|x_d| ≤ half_width (d < n), 0 ≤ x_n ≤ height}`.
    HalfBox { half_width: f64, height: f64 },
    /// Three-dimensional `{|x| ≤ radius, x_3 ≥ 0, 0 ≤ arg(x_1 + i x_2) ≤ π/i}`.
    Sector { i: u32, radius: f64 },
}

impl Domain {
    pub fn contains(&self, dim: usize, x: &Point) -> bool {
        let xn = x[dim - 1];
        match *self {
            Domain::HalfBall { radius } => {
                let tol = 1e-12 * radius;
                xn >= -tol && norm(dim, x) <= radius + tol
            }
            Domain::HalfBox { half_width, height } => {
                let tol = 1e-12 * half_width.max(height);
                xn >= -tol
                    && xn <= height + tol
                    && (0..dim - 1).all(|d| x[d].abs() <= half_width + tol)
            }
            Domain::Sector { i, radius } => {
                let tol = 1e-12 * radius;
                let alpha = PI / i as f64;
                x[2] >= -tol
                    && norm(3, x) <= radius + tol
                    && x[1] >= -tol
                    && -alpha.sin() * x[0] + alpha.cos() * x[1] <= tol
            }
        }
    }

    /// Contains test restricted to the thin plane.
    pub fn contains_thin(&self, dim: usize, x: &Point) -> bool {
        let mut y = *x;
        y[dim - 1] = 0.0;
        self.contains(dim, &y)
    }

    /// Radius of the largest ball about the origin with `B_r⁺` inside the domain.
    pub fn inner_radius(&self) -> f64 {
        match *self {
            Domain::HalfBall { radius } => radius,
            Domain::HalfBox { half_width, height } => half_width.min(height),
            Domain::Sector { .. } => 0.0,
        }
    }
}

pub(crate) fn norm(dim: usize, x: &Point) -> f64 {
    x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A lattice cell with positive volume inside the domain.
#[derive(Debug, Clone)]
pub struct Cell {
    /// Node ids, corner `c` offset by bit `d` of `c` along axis `d`.
    pub corners: [u32; 8],
    pub lower: [i32; 3],
    /// Fraction of the cell volume inside the domain.
    pub fraction: f64,
    /// `fraction · ∫_cell x_n^a dx`.
    pub weight: f64,
}

/// A cell face lying in the thin space.
#[derive(Debug, Clone)]
pub struct ThinFace {
    pub corners: [u32; 4],
    pub lower: [i32; 3],
    pub fraction: f64,
}

/// Aggregated conductance between two nodes.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    pub k: f64,
}

#[derive(Debug, Clone, Copy)]
struct RowIntegrals {
    /// `∫ x^{-a}` over the row.
    neg: f64,
    /// `∫ x^a` over the full row and its lower/upper halves.
    full: f64,
    lo: f64,
    hi: f64,
}

/// JSON descriptor of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub dim: usize,
    pub h: f64,
    pub a: f64,
    pub resolution: usize,
    pub domain: Domain,
    pub nodes: usize,
    pub thin_nodes: usize,
    pub cells: usize,
}

/// Discretized half-domain. Immutable after construction.
#[derive(Debug)]
pub struct WeightedGrid {
    dim: usize,
    h: f64,
    a: f64,
    resolution: usize,
    domain: Domain,
    lo: [i32; 3],
    shape: [usize; 3],
    lattice: Vec<u32>,
    nodes: Vec<[i32; 3]>,
    dirichlet: Vec<bool>,
    thin_nodes: Vec<usize>,
    thin_slot: Vec<u32>,
    thin_mass: Vec<f64>,
    boundary_nodes: Vec<usize>,
    cells: Vec<Cell>,
    thin_faces: Vec<ThinFace>,
    edges: Vec<Edge>,
    rows: Vec<RowIntegrals>,
    pub(crate) free_system: OnceLock<FreeSystem>,
}

/// Half-ball `B_R⁺ ⊂ R^dim` with `resolution` cells per radius.
pub fn build_halfball_grid(
    params: &Params,
    dim: usize,
    radius: f64,
    resolution: usize,
) -> Result<WeightedGrid> {
    check_common(dim, resolution)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
    }
    let n = resolution as i32;
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for d in 0..dim - 1 {
        lo[d] = -n;
        hi[d] = n;
    }
    hi[dim - 1] = n;
    WeightedGrid::build(
        dim,
        params.a(),
        radius / resolution as f64,
        resolution,
        Domain::HalfBall { radius },
        lo,
        hi,
    )
}

/// Half-box `[-L, L]^{dim-1} × [0, H]`; the spacing is `L/resolution` and
/// `H` is rounded to a whole number of cells.
pub fn build_halfbox_grid(
    params: &Params,
    dim: usize,
    half_width: f64,
    height: f64,
    resolution: usize,
) -> Result<WeightedGrid> {
    check_common(dim, resolution)?;
    if !(half_width > 0.0 && height > 0.0) {
        return Err(Error::InvalidParameter("box extents must be positive".into()));
    }
    let h = half_width / resolution as f64;
    let rows = (height / h).round().max(1.0) as i32;
    let n = resolution as i32;
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for d in 0..dim - 1 {
        lo[d] = -n;
        hi[d] = n;
    }
    hi[dim - 1] = rows;
    WeightedGrid::build(
        dim,
        params.a(),
        h,
        resolution,
        Domain::HalfBox {
            half_width,
            height: rows as f64 * h,
        },
        lo,
        hi,
    )
}

/// Three-dimensional sector of opening `π/i` in the thin plane.
pub fn build_sector_grid(
    params: &Params,
    i: u32,
    radius: f64,
    resolution: usize,
) -> Result<WeightedGrid> {
    if i < 2 {
        return Err(Error::InvalidParameter(format!("sector index i = {i} must be >= 2")));
    }
    check_common(3, resolution)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
    }
    let n = resolution as i32;
    WeightedGrid::build(
        3,
        params.a(),
        radius / resolution as f64,
        resolution,
        Domain::Sector { i, radius },
        [-1, -1, 0],
        [n, n, n],
    )
}

fn check_common(dim: usize, resolution: usize) -> Result<()> {
    if !(dim == 2 || dim == 3) {
        return Err(Error::InvalidParameter(format!("dimension {dim} not in {{2, 3}}")));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::ResolutionTooCoarse {
            got: resolution,
            min: MIN_RESOLUTION,
        });
    }
    Ok(())
}

fn subsample_fraction(
    domain: &Domain,
    dim: usize,
    lower: [i32; 3],
    h: f64,
    axes: usize,
    k: usize,
    thin: bool,
) -> f64 {
    // Midpoint samples on a k^axes sub-lattice of the cell (or face).
    let total = k.pow(axes as u32);
    let mut inside = 0usize;
    for s in 0..total {
        let mut x = [0.0; 3];
        let mut rem = s;
        for d in 0..dim {
            let off = if d < axes {
                let t = rem % k;
                rem /= k;
                (t as f64 + 0.5) / k as f64
            } else {
                0.0
            };
            x[d] = (lower[d] as f64 + off) * h;
        }
        let hit = if thin {
            domain.contains_thin(dim, &x)
        } else {
            domain.contains(dim, &x)
        };
        if hit {
            inside += 1;
        }
    }
    inside as f64 / total as f64
}

impl WeightedGrid {
    fn build(
        dim: usize,
        a: f64,
        h: f64,
        resolution: usize,
        domain: Domain,
        lo: [i32; 3],
        hi: [i32; 3],
    ) -> Result<Self> {
        if !(a > -1.0 && a < 1.0) {
            return Err(Error::InvalidParameter(format!("a = {a} must lie in (-1, 1)")));
        }
        let mut shape = [1usize; 3];
        for d in 0..dim {
            shape[d] = (hi[d] - lo[d] + 1) as usize;
        }
        let lattice_len = shape[0] * shape[1] * shape[2];
        let ncorner = 1usize << dim;
        let coord = |p: [i32; 3]| -> Point {
            let mut x = [0.0; 3];
            for d in 0..dim {
                x[d] = p[d] as f64 * h;
            }
            x
        };
        let node_inside: Vec<bool> = par::map_indexed(lattice_len, |l| {
            let p = unflatten(l, &lo, &shape);
            domain.contains(dim, &coord(p))
        });

        // Candidate cells: any lattice cell with a corner inside.
        let mut cell_shape = [1usize; 3];
        for d in 0..dim {
            cell_shape[d] = shape[d] - 1;
        }
        let ncells = cell_shape[0] * cell_shape[1] * cell_shape[2];
        let sub = if dim == 2 { 8 } else { 6 };
        let fractions: Vec<f64> = par::map_indexed(ncells, |c| {
            let p = unflatten(c, &lo, &cell_shape);
            let mut inside = 0;
            for corner in 0..ncorner {
                let q = corner_of(p, corner, dim);
                if node_inside[flatten(q, &lo, &shape)] {
                    inside += 1;
                }
            }
            if inside == ncorner {
                1.0
            } else if inside == 0 {
                0.0
            } else {
                subsample_fraction(&domain, dim, p, h, dim, sub, false)
            }
        });

        // Active nodes are corners of cells with positive volume.
        let mut active = vec![false; lattice_len];
        for (c, &f) in fractions.iter().enumerate() {
            if f > 0.0 {
                let p = unflatten(c, &lo, &cell_shape);
                for corner in 0..ncorner {
                    active[flatten(corner_of(p, corner, dim), &lo, &shape)] = true;
                }
            }
        }
        let mut lattice = vec![NO_NODE; lattice_len];
        let mut nodes = Vec::new();
        for (l, &act) in active.iter().enumerate() {
            if act {
                lattice[l] = nodes.len() as u32;
                nodes.push(unflatten(l, &lo, &shape));
            }
        }
        if nodes.len() >= NO_NODE as usize {
            return Err(Error::InvalidParameter("grid too large".into()));
        }

        let nrows = (hi[dim - 1] - lo[dim - 1]) as usize;
        let rows: Vec<RowIntegrals> = (0..nrows)
            .map(|j| {
                let y0 = j as f64 * h;
                let ym = (j as f64 + 0.5) * h;
                let y1 = (j as f64 + 1.0) * h;
                RowIntegrals {
                    neg: power_integral(y0, y1, -a),
                    full: power_integral(y0, y1, a),
                    lo: power_integral(y0, ym, a),
                    hi: power_integral(ym, y1, a),
                }
            })
            .collect();

        let tangential_volume = h.powi(dim as i32 - 1);
        let mut cells = Vec::new();
        for (c, &f) in fractions.iter().enumerate() {
            if f <= 0.0 {
                continue;
            }
            let p = unflatten(c, &lo, &cell_shape);
            let mut corners = [NO_NODE; 8];
            for (corner, slot) in corners.iter_mut().enumerate().take(ncorner) {
                *slot = lattice[flatten(corner_of(p, corner, dim), &lo, &shape)];
            }
            let row = &rows[p[dim - 1] as usize];
            cells.push(Cell {
                corners,
                lower: p,
                fraction: f,
                weight: f * tangential_volume * row.full,
            });
        }

        // Free nodes: every incident cell lies fully inside the domain.
        let mut full_count = vec![0u8; nodes.len()];
        for cell in &cells {
            if cell.fraction >= 1.0 {
                for &n in &cell.corners[..ncorner] {
                    full_count[n as usize] += 1;
                }
            }
        }
        let dirichlet: Vec<bool> = nodes
            .iter()
            .enumerate()
            .map(|(id, p)| {
                let need = if p[dim - 1] == 0 { ncorner / 2 } else { ncorner };
                (full_count[id] as usize) < need
            })
            .collect();
        let boundary_nodes: Vec<usize> = (0..nodes.len()).filter(|&i| dirichlet[i]).collect();

        // Thin faces and lumped thin masses.
        let mut thin_faces = Vec::new();
        for cell in cells.iter().filter(|c| c.lower[dim - 1] == 0) {
            let nface = ncorner / 2;
            let mut corners = [NO_NODE; 4];
            let mut inside = 0;
            for k in 0..nface {
                corners[k] = cell.corners[k];
                let q = nodes[corners[k] as usize];
                if node_inside[flatten(q, &lo, &shape)] {
                    inside += 1;
                }
            }
            let fraction = if inside == nface {
                1.0
            } else {
                subsample_fraction(&domain, dim, cell.lower, h, dim - 1, 4 * sub, true)
            };
            if fraction > 0.0 {
                thin_faces.push(ThinFace {
                    corners,
                    lower: cell.lower,
                    fraction,
                });
            }
        }
        let mut thin_slot = vec![NO_NODE; nodes.len()];
        let mut thin_nodes = Vec::new();
        for (id, p) in nodes.iter().enumerate() {
            if p[dim - 1] == 0 {
                thin_slot[id] = thin_nodes.len() as u32;
                thin_nodes.push(id);
            }
        }
        let mut thin_mass = vec![0.0; thin_nodes.len()];
        let share = tangential_volume / (ncorner / 2) as f64;
        for face in &thin_faces {
            for &n in &face.corners[..ncorner / 2] {
                thin_mass[thin_slot[n as usize] as usize] += face.fraction * share;
            }
        }
        if thin_nodes.is_empty() {
            return Err(Error::Degenerate("grid has no thin nodes".into()));
        }

        let mut grid = WeightedGrid {
            dim,
            h,
            a,
            resolution,
            domain,
            lo,
            shape,
            lattice,
            nodes,
            dirichlet,
            thin_nodes,
            thin_slot,
            thin_mass,
            boundary_nodes,
            cells,
            thin_faces,
            edges: Vec::new(),
            rows,
            free_system: OnceLock::new(),
        };
        grid.edges = grid.assemble_edges();
        Ok(grid)
    }

    fn assemble_edges(&self) -> Vec<Edge> {
        let mut raw: Vec<(u32, u32, f64)> = Vec::with_capacity(self.cells.len() * self.dim * 4);
        for cell in &self.cells {
            self.for_each_cell_edge(cell, |i, j, k| {
                let (i, j) = if i < j { (i, j) } else { (j, i) };
                raw.push((i as u32, j as u32, k));
            });
        }
        raw.sort_by_key(|x| (x.0, x.1));
        let mut edges: Vec<Edge> = Vec::with_capacity(raw.len() / 2);
        for (i, j, k) in raw {
            match edges.last_mut() {
                Some(e) if e.i == i && e.j == j => e.k += k,
                _ => edges.push(Edge { i, j, k }),
            }
        }
        edges
    }

    /// Calls `f(node_a, node_b, conductance)` for each lattice edge of a cell.
    ///
    /// Normal edges use the harmonic-mean conductance `h^{n-1}/∫x^{-a}`, exact
    /// for profiles `x_n^{1-a}`. Tangential edges carry the weighted measure
    /// of their half of the dual face.
    pub fn for_each_cell_edge<F: FnMut(usize, usize, f64)>(&self, cell: &Cell, mut f: F) {
        let dim = self.dim;
        let h = self.h;
        let row = &self.rows[cell.lower[dim - 1] as usize];
        let share = (1usize << (dim - 1)) as f64;
        let kn = cell.fraction * h.powi(dim as i32 - 1) / row.neg / share;
        let transverse = (0.5 * h).powi(dim as i32 - 2) / h;
        let kt_lo = cell.fraction * transverse * row.lo;
        let kt_hi = cell.fraction * transverse * row.hi;
        let normal_bit = 1usize << (dim - 1);
        for d in 0..dim {
            let bit = 1usize << d;
            for c in 0..(1usize << dim) {
                if c & bit != 0 {
                    continue;
                }
                let k = if d == dim - 1 {
                    kn
                } else if c & normal_bit == 0 {
                    kt_lo
                } else {
                    kt_hi
                };
                f(cell.corners[c] as usize, cell.corners[c | bit] as usize, k);
            }
        }
    }

    /// Weighted Dirichlet energy `Σ k (Δu)²` of one cell.
    pub fn cell_energy(&self, cell: &Cell, values: &[f64]) -> f64 {
        let mut e = 0.0;
        self.for_each_cell_edge(cell, |i, j, k| {
            let d = values[i] - values[j];
            e += k * d * d;
        });
        e
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lattice spacing `h`.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_lattice(&self, id: usize) -> [i32; 3] {
        self.nodes[id]
    }

    pub fn node_coords(&self, id: usize) -> Point {
        let p = self.nodes[id];
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = p[d] as f64 * self.h;
        }
        x
    }

    /// Node id at a lattice position, if active.
    pub fn node_at(&self, p: [i32; 3]) -> Option<usize> {
        for d in 0..3 {
            let off = p[d] - self.lo[d];
            if off < 0 || off as usize >= self.shape[d] {
                return None;
            }
        }
        let id = self.lattice[flatten(p, &self.lo, &self.shape)];
        (id != NO_NODE).then_some(id as usize)
    }

    pub fn is_dirichlet(&self, id: usize) -> bool {
        self.dirichlet[id]
    }

    /// Nodes carrying Dirichlet data, in increasing id order.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Nodes on `{x_n = 0}`, in increasing id order.
    pub fn thin_nodes(&self) -> &[usize] {
        &self.thin_nodes
    }

    /// Position of a node in [`Self::thin_nodes`].
    pub fn thin_slot(&self, id: usize) -> Option<usize> {
        let s = self.thin_slot[id];
        (s != NO_NODE).then_some(s as usize)
    }

    /// Lumped `(n-1)`-dimensional measure of each thin node.
    pub fn thin_mass(&self) -> &[f64] {
        &self.thin_mass
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn thin_faces(&self) -> &[ThinFace] {
        &self.thin_faces
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn cell_midpoint(&self, cell: &Cell) -> Point {
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = (cell.lower[d] as f64 + 0.5) * self.h;
        }
        x
    }

    /// Total thin measure `Σ m_i`.
    pub fn thin_measure(&self) -> f64 {
        self.thin_mass.iter().sum()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            dim: self.dim,
            h: self.h,
            a: self.a,
            resolution: self.resolution,
            domain: self.domain,
            nodes: self.nodes.len(),
            thin_nodes: self.thin_nodes.len(),
            cells: self.cells.len(),
        }
    }

    /// Fails unless the grid was built with the exponent of `params`.
    pub fn check_params(&self, params: &Params) -> Result<()> {
        if (self.a - params.a()).abs() > 1e-14 {
            return Err(Error::ExponentMismatch {
                grid: self.a,
                params: params.a(),
            });
        }
        Ok(())
    }

    /// `Σ_cells integrand(midpoint) · weight`.
    pub fn bulk_quadrature<F>(&self, integrand: F) -> Result<f64>
    where
        F: Fn(&Point) -> f64 + Sync + Send,
    {
        let vals = par::map(&self.cells, |c| integrand(&self.cell_midpoint(c)) * c.weight);
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bulk integrand"));
        }
        Ok(par::sum_indexed(vals.len(), |i| vals[i]))
    }

    /// `Σ_thin m_i · integrand(x_i)`.
    pub fn thin_quadrature<F>(&self, integrand: F) -> Result<f64>
    where
        F: Fn(&Point) -> f64,
    {
        let mut total = 0.0;
        for (slot, &id) in self.thin_nodes.iter().enumerate() {
            let v = integrand(&self.node_coords(id));
            if !v.is_finite() {
                return Err(Error::NonFinite("thin integrand"));
            }
            total += self.thin_mass[slot] * v;
        }
        Ok(total)
    }

    /// Thin quadrature of per-slot values aligned with [`Self::thin_nodes`].
    pub fn thin_sum(&self, values: &[f64]) -> f64 {
        self.thin_mass.iter().zip(values).map(|(m, v)| m * v).sum()
    }
}

pub(crate) fn corner_of(p: [i32; 3], corner: usize, dim: usize) -> [i32; 3] {
    let mut q = p;
    for (d, slot) in q.iter_mut().enumerate().take(dim) {
        if corner & (1 << d) != 0 {
            *slot += 1;
        }
    }
    q
}

fn flatten(p: [i32; 3], lo: &[i32; 3], shape: &[usize; 3]) -> usize {
    let i = (p[0] - lo[0]) as usize;
    let j = (p[1] - lo[1]) as usize;
    let k = (p[2] - lo[2]) as usize;
    (k * shape[1] + j) * shape[0] + i
}

fn unflatten(l: usize, lo: &[i32; 3], shape: &[usize; 3]) -> [i32; 3] {
    let i = l % shape[0];
    let j = (l / shape[0]) % shape[1];
    let k = l / (shape[0] * shape[1]);
    [i as i32 + lo[0], j as i32 + lo[1], k as i32 + lo[2]]
}
