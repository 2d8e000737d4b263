//! Minimization of the unstable energy by sign-flux fixed-point iteration.
//!
//! Each outer step solves the linear weighted Neumann problem with the thin
//! flux `λ+χ{u>0} − λ−χ{u<0}` frozen from the current iterate. The thin term is
//! concave, so every linear solve minimizes a convex majorant of `J` that
//! touches it at the current iterate: the energy cannot increase.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::functional::{eval_energy, EnergyBreakdown};
use crate::grid::{build_halfball_grid, build_sector_grid, Domain, Point, WeightedGrid};
use crate::linalg::{pcg, CgReport, FreeSystem};
use crate::par;
use crate::params::Params;

/// Initial thin flux of the outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// Flux `+λ+` everywhere: descends to the maximal fixed point.
    FromAbove,
    /// Flux `−λ−` everywhere: ascends to the minimal fixed point.
    FromBelow,
    /// Signs of the a-harmonic extension of the boundary data.
    FromBoundaryHarmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_outer: usize,
    /// Relative residual of every linear solve.
    pub linear_tol: f64,
    /// Weight of the new solve in the iterate update, in (0, 1].
    pub damping: f64,
    pub start: Start,
    pub max_linear_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_outer: 200,
            linear_tol: 1e-10,
            damping: 1.0,
            start: Start::FromBoundaryHarmonic,
            max_linear_iter: 50_000,
        }
    }
}

impl SolveOptions {
    pub fn with_start(mut self, start: Start) -> Self {
        self.start = start;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_outer < 1 {
            return Err(Error::InvalidParameter("max_outer must be >= 1".into()));
        }
        if !(self.linear_tol > 0.0) {
            return Err(Error::InvalidParameter("linear_tol must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Dirichlet data, aligned with `grid.boundary_nodes()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    values: Vec<f64>,
}

impl BoundaryData {
    pub fn new(grid: &WeightedGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.boundary_nodes().len() {
            return Err(Error::InvalidParameter(format!(
                "{} boundary values for {} boundary nodes",
                values.len(),
                grid.boundary_nodes().len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("boundary data"));
        }
        Ok(Self { values })
    }

    pub fn from_fn<F: Fn(&Point) -> f64>(grid: &WeightedGrid, f: F) -> Result<Self> {
        let values = grid.boundary_nodes().iter().map(|&i| f(&grid.node_coords(i))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: &WeightedGrid, c: f64) -> Result<Self> {
        Self::from_fn(grid, |_| c)
    }

    /// Boundary values of an existing field.
    pub fn from_field(field: &ScalarField) -> Self {
        let v = field.values();
        Self {
            values: field.grid().boundary_nodes().iter().map(|&i| v[i]).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One outer iteration of [`minimize`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OuterStep {
    pub iteration: usize,
    pub energy: f64,
    pub sign_changes: usize,
    pub frozen: usize,
    pub linear_iterations: usize,
}

/// A converged fixed point with its iteration record.
#[derive(Debug, Clone)]
pub struct Solution {
    pub field: ScalarField,
    /// Thin flux of the final linear solve, aligned with `thin_nodes()`.
    pub thin_flux: Vec<f64>,
    pub energy: EnergyBreakdown,
    pub start: Start,
    pub history: Vec<OuterStep>,
    /// Energies of the other candidates considered by [`sup_minimizer`].
    pub alternatives: Vec<(Start, f64)>,
}

impl Solution {
    /// Convergence history as CSV.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "energy", "sign_changes", "frozen", "linear_iterations"])?;
        for s in &self.history {
            w.write_record([
                s.iteration.to_string(),
                s.energy.to_string(),
                s.sign_changes.to_string(),
                s.frozen.to_string(),
                s.linear_iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn system(grid: &WeightedGrid) -> &FreeSystem {
    grid.free_system.get_or_init(|| FreeSystem::build(grid))
}

/// Reusable state for repeated solves on one grid with fixed boundary data.
struct LinearProblem<'g> {
    grid: &'g Arc<WeightedGrid>,
    sys: &'g FreeSystem,
    lifted: Vec<f64>,
    boundary_rhs: Vec<f64>,
    thin_free: Vec<(usize, usize)>,
    x: Vec<f64>,
}

impl<'g> LinearProblem<'g> {
    fn new(grid: &'g Arc<WeightedGrid>, boundary: &BoundaryData) -> Result<Self> {
        if boundary.values.len() != grid.boundary_nodes().len() {
            return Err(Error::InvalidParameter("boundary data built for another grid".into()));
        }
        let sys = system(grid);
        let mut lifted = vec![0.0; grid.node_count()];
        for (&i, &v) in grid.boundary_nodes().iter().zip(&boundary.values) {
            lifted[i] = v;
        }
        let mut boundary_rhs = vec![0.0; sys.free_nodes.len()];
        sys.coupling.matvec(&lifted, &mut boundary_rhs);
        let thin_free = grid
            .thin_nodes()
            .iter()
            .enumerate()
            .filter_map(|(slot, &id)| {
                let f = sys.free_slot[id];
                (f != u32::MAX).then_some((slot, f as usize))
            })
            .collect();
        let x = vec![0.0; sys.free_nodes.len()];
        Ok(Self {
            grid,
            sys,
            lifted,
            boundary_rhs,
            thin_free,
            x,
        })
    }

    fn solve(&mut self, thin_flux: &[f64], tol: f64, max_iter: usize) -> Result<(ScalarField, CgReport)> {
        let mass = self.grid.thin_mass();
        let mut b = self.boundary_rhs.clone();
        for &(slot, f) in &self.thin_free {
            b[f] += mass[slot] * thin_flux[slot];
        }
        let rep = pcg(&self.sys.matrix, self.sys.preconditioner(), &b, &mut self.x, tol, max_iter)?;
        let mut values = self.lifted.clone();
        for (s, &id) in self.sys.free_nodes.iter().enumerate() {
            values[id] = self.x[s];
        }
        Ok((ScalarField::new(self.grid.clone(), values)?, rep))
    }

    fn warm_start(&mut self, field: &ScalarField) {
        let v = field.values();
        for (s, &id) in self.sys.free_nodes.iter().enumerate() {
            self.x[s] = v[id];
        }
    }
}

/// Solves `div(x_n^a ∇u) = 0` with outward thin flux
/// `−lim x_n^a ∂_n u = thin_flux` and Dirichlet data on the outer boundary.
pub fn solve_weighted_neumann(
    grid: &Arc<WeightedGrid>,
    thin_flux: &[f64],
    boundary: &BoundaryData,
) -> Result<ScalarField> {
    let opts = SolveOptions::default();
    solve_weighted_neumann_with(grid, thin_flux, boundary, opts.linear_tol, opts.max_linear_iter)
}

/// [`solve_weighted_neumann`] with an explicit tolerance and iteration budget.
pub fn solve_weighted_neumann_with(
    grid: &Arc<WeightedGrid>,
    thin_flux: &[f64],
    boundary: &BoundaryData,
    tol: f64,
    max_iter: usize,
) -> Result<ScalarField> {
    if thin_flux.len() != grid.thin_nodes().len() {
        return Err(Error::InvalidParameter(format!(
            "{} flux values for {} thin nodes",
            thin_flux.len(),
            grid.thin_nodes().len()
        )));
    }
    if thin_flux.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("thin flux"));
    }
    let mut lp = LinearProblem::new(grid, boundary)?;
    Ok(lp.solve(thin_flux, tol, max_iter)?.0)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign-flux fixed-point iteration from `opts.start`.
pub fn minimize(
    grid: &Arc<WeightedGrid>,
    params: &Params,
    boundary: &BoundaryData,
    opts: &SolveOptions,
) -> Result<Solution> {
    opts.validate()?;
    grid.check_params(params)?;
    let mut lp = LinearProblem::new(grid, boundary)?;
    let thin = grid.thin_nodes();
    let nthin = thin.len();
    let flux_of = |u: &ScalarField, frozen: &[bool]| -> Vec<f64> {
        let v = u.values();
        (0..nthin)
            .map(|s| if frozen[s] { 0.0 } else { params.flux(v[thin[s]]) })
            .collect::<Vec<f64>>()
    };
    let mut frozen = vec![false; nthin];
    let mut flips = vec![0u8; nthin];
    let mut history = Vec::new();

    let mut flux = match opts.start {
        Start::FromAbove => vec![params.lambda_plus(); nthin],
        Start::FromBelow => vec![-params.lambda_minus(); nthin],
        Start::FromBoundaryHarmonic => {
            let (u0, _) = lp.solve(&vec![0.0; nthin], opts.linear_tol, opts.max_linear_iter)?;
            flux_of(&u0, &frozen)
        }
    };
    let mut prev: Option<ScalarField> = None;
    let mut prev_signs: Option<Vec<i8>> = None;

    for iteration in 0..opts.max_outer {
        let (solved, rep) = lp.solve(&flux, opts.linear_tol, opts.max_linear_iter)?;
        let new_flux = flux_of(&solved, &frozen);
        if new_flux == flux {
            let energy = eval_energy(&solved, params)?;
            history.push(OuterStep {
                iteration,
                energy: energy.total,
                sign_changes: 0,
                frozen: frozen.iter().filter(|f| **f).count(),
                linear_iterations: rep.iterations,
            });
            return Ok(Solution {
                field: solved,
                thin_flux: flux,
                energy,
                start: opts.start,
                history,
                alternatives: Vec::new(),
            });
        }
        let current = match (&prev, opts.damping < 1.0) {
            (Some(p), true) => {
                let blended = p.axpy(opts.damping, &solved.axpy(-1.0, p)?)?;
                lp.warm_start(&blended);
                blended
            }
            _ => solved,
        };
        let signs: Vec<i8> = thin.iter().map(|&i| sign(current.values()[i])).collect();
        let mut changes = 0;
        if let Some(ps) = &prev_signs {
            for s in 0..nthin {
                if ps[s] != signs[s] {
                    changes += 1;
                    flips[s] = flips[s].saturating_add(1);
                    if flips[s] >= 3 {
                        frozen[s] = true;
                    }
                }
            }
        }
        let energy = eval_energy(&current, params)?;
        history.push(OuterStep {
            iteration,
            energy: energy.total,
            sign_changes: changes,
            frozen: frozen.iter().filter(|f| **f).count(),
            linear_iterations: rep.iterations,
        });
        flux = flux_of(&current, &frozen);
        prev_signs = Some(signs);
        prev = Some(current);
    }
    let (last, _) = lp.solve(&flux, opts.linear_tol, opts.max_linear_iter)?;
    let new_flux = flux_of(&last, &frozen);
    let oscillating = (0..nthin)
        .filter(|&s| new_flux[s] != flux[s])
        .map(|s| thin[s])
        .collect();
    Err(Error::NotStabilized {
        iterations: opts.max_outer,
        oscillating,
    })
}

/// The maximal discrete solution: [`minimize`] from [`Start::FromAbove`].
///
/// The iteration is monotone, so the result dominates every fixed point,
/// in particular every discrete minimizer.
pub fn maximal_solution(
    grid: &Arc<WeightedGrid>,
    params: &Params,
    boundary: &BoundaryData,
    opts: &SolveOptions,
) -> Result<Solution> {
    minimize(grid, params, boundary, &opts.with_start(Start::FromAbove))
}

/// Lowest-energy fixed point among the three starts; ties go to the larger
/// field (from above, then harmonic, then from below).
///
/// The maximal fixed point alone is not a minimizer in general: with
/// `λ+ = 0` and constant boundary data `ε > 0` it is the constant `ε`, while
/// fields dipping below zero at the thin space have negative energy.
pub fn sup_minimizer(
    grid: &Arc<WeightedGrid>,
    params: &Params,
    boundary: &BoundaryData,
    opts: &SolveOptions,
) -> Result<Solution> {
    let mut candidates = Vec::new();
    for start in [Start::FromAbove, Start::FromBoundaryHarmonic, Start::FromBelow] {
        candidates.push(minimize(grid, params, boundary, &opts.with_start(start))?);
    }
    let best = candidates
        .iter()
        .map(|c| c.energy.total)
        .fold(f64::INFINITY, f64::min);
    let tie = 1e-9 * best.abs().max(1e-12);
    let pick = candidates
        .iter()
        .position(|c| c.energy.total <= best + tie)
        .unwrap_or(0);
    let alternatives = candidates
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != pick)
        .map(|(_, c)| (c.start, c.energy.total))
        .collect();
    let mut chosen = candidates.swap_remove(pick);
    chosen.alternatives = alternatives;
    Ok(chosen)
}

/// Positive solution on the sector `U_i` with zero data on its curved and
/// flat outer boundary.
pub fn sector_positive_minimizer(params: &Params, i: u32, resolution: usize) -> Result<Solution> {
    if params.a() >= 0.0 {
        return Err(Error::InvalidParameter(
            "sector solutions are built for a < 0".into(),
        ));
    }
    let grid = Arc::new(build_sector_grid(params, i, 1.0, resolution)?);
    let boundary = BoundaryData::constant(&grid, 0.0)?;
    let sol = maximal_solution(&grid, params, &boundary, &SolveOptions::default())?;
    if !(sol.field.values().iter().any(|v| *v > 0.0)) {
        return Err(Error::Collapse);
    }
    Ok(sol)
}

/// Extends a sector solution to the half-ball by `2i − 1` successive odd
/// reflections across the sector walls. Values come from multilinear
/// interpolation, exact at nodes when `i = 2`.
pub fn reflect_sector_solution(field: &ScalarField, i: u32) -> Result<ScalarField> {
    let src = field.grid();
    let radius = match *src.domain() {
        Domain::Sector { i: si, radius } if si == i => radius,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "field does not live on a sector grid with i = {i}"
            )))
        }
    };
    let params = Params::symmetric(src.a())?;
    let target = Arc::new(build_halfball_grid(&params, 3, radius, src.resolution())?);
    let alpha = PI / i as f64;
    let h = src.spacing();
    let vals: Vec<Result<f64>> = par::map_indexed(target.node_count(), |id| {
        let x = target.node_coords(id);
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return Ok(field.interpolate(&x).unwrap_or(0.0));
        }
        let theta = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
        let k = ((theta / alpha).floor() as u32).min(2 * i - 1);
        let mut phi = theta - k as f64 * alpha;
        if k % 2 == 1 {
            phi = alpha - phi;
        }
        let phi = phi.clamp(0.0, alpha);
        let y = [r * phi.cos(), r * phi.sin(), x[2]];
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        match field.interpolate(&y) {
            Some(v) => Ok(sign * v),
            // Outside the sector's lattice the zero boundary data extends.
            None if (r * r + x[2] * x[2]).sqrt() >= radius - 2.0 * h => Ok(0.0),
            None => Err(Error::OutsideDomain(format!(
                "reflected point {y:?} not covered by the sector grid"
            ))),
        }
    });
    let values = vals.into_iter().collect::<Result<Vec<f64>>>()?;
    ScalarField::new(target, values)
}
