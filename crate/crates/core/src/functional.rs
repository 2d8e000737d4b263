//! The energy `J_a`, its first variation, the gauge shift and rescaling.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{build_halfball_grid, Point, WeightedGrid};
use crate::par;
use crate::params::Params;

/// Energy split into its weighted Dirichlet part and the thin reaction term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    pub thin: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn new(dirichlet: f64, thin: f64) -> Self {
        Self {
            dirichlet,
            thin,
            total: dirichlet + thin,
        }
    }

    /// Writes `tag,dirichlet,thin,total` rows with a header.
    pub fn write_csv<W: Write>(rows: &[(String, EnergyBreakdown)], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tag", "dirichlet", "thin", "total"])?;
        for (tag, e) in rows {
            w.write_record([
                tag.clone(),
                e.dirichlet.to_string(),
                e.thin.to_string(),
                e.total.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Weighted Dirichlet energy `uᵀKu = Σ_edges k (u_i − u_j)²`.
pub fn dirichlet_energy(grid: &WeightedGrid, values: &[f64]) -> f64 {
    let edges = grid.edges();
    par::sum_indexed(edges.len(), |e| {
        let e = &edges[e];
        let d = values[e.i as usize] - values[e.j as usize];
        e.k * d * d
    })
}

/// Bilinear form `uᵀKv`.
pub fn dirichlet_pairing(grid: &WeightedGrid, u: &[f64], v: &[f64]) -> f64 {
    let edges = grid.edges();
    par::sum_indexed(edges.len(), |e| {
        let e = &edges[e];
        let (i, j) = (e.i as usize, e.j as usize);
        e.k * (u[i] - u[j]) * (v[i] - v[j])
    })
}

/// `J_a(v, λ+, λ−) = ∫|∇v|² x_n^a − 2∫(λ+v⁺ + λ−v⁻)`.
pub fn eval_energy(field: &ScalarField, params: &Params) -> Result<EnergyBreakdown> {
    let grid = field.grid();
    grid.check_params(params)?;
    let u = field.values();
    let dirichlet = dirichlet_energy(grid, u);
    let thin_density: Vec<f64> = grid
        .thin_nodes()
        .iter()
        .map(|&i| params.thin_density(u[i]))
        .collect();
    let thin = -2.0 * grid.thin_sum(&thin_density);
    Ok(EnergyBreakdown::new(dirichlet, thin))
}

/// Adds `c·x_n^{1−a}` and shifts the reaction coefficients by `∓c(1−a)`.
///
/// Minimizers of the original problem map to minimizers of the shifted one
/// as long as both new coefficients stay nonnegative.
pub fn gauge_transform(field: &ScalarField, params: &Params, c: f64) -> Result<(ScalarField, Params)> {
    field.grid().check_params(params)?;
    let shift = c * (1.0 - params.a());
    if shift > params.lambda_plus() || -shift > params.lambda_minus() {
        return Err(Error::InvalidParameter(format!(
            "gauge constant c = {c} outside [-λ−/(1−a), λ+/(1−a)]"
        )));
    }
    let dim = field.grid().dim();
    let exponent = 1.0 - params.a();
    let shifted = field.map(|x, v| v + c * x[dim - 1].powf(exponent))?;
    let lp = (params.lambda_plus() - shift).max(0.0);
    let lm = (params.lambda_minus() + shift).max(0.0);
    Ok((shifted, params.with_lambdas(lp, lm)))
}

/// `∫ x_n^a ∇u·∇ψ − ∫_thin ψ g(u)` with `g(u) = λ+χ{u>0} − λ−χ{u<0}`.
///
/// Vanishes (up to solver tolerance) exactly for solutions.
pub fn first_variation_residual(field: &ScalarField, test: &ScalarField, params: &Params) -> Result<f64> {
    let grid = field.grid();
    grid.check_params(params)?;
    if !Arc::ptr_eq(grid, test.grid()) {
        return Err(Error::InvalidParameter("field and test live on different grids".into()));
    }
    let psi = test.values();
    let scale = test.max_abs().max(f64::MIN_POSITIVE);
    if grid
        .boundary_nodes()
        .iter()
        .any(|&i| psi[i].abs() > 1e-12 * scale && grid.node_coords(i)[grid.dim() - 1] > 0.0)
    {
        return Err(Error::InvalidParameter(
            "test function does not vanish on the outer boundary".into(),
        ));
    }
    let u = field.values();
    let bulk = dirichlet_pairing(grid, u, psi);
    let flux: Vec<f64> = grid
        .thin_nodes()
        .iter()
        .map(|&i| psi[i] * params.flux(u[i]))
        .collect();
    Ok(bulk - grid.thin_sum(&flux))
}

/// `x ↦ field(center + r x)/r^degree` on a fresh unit half-ball with the
/// source resolution.
pub fn rescale(field: &ScalarField, center: &Point, r: f64, degree: f64) -> Result<ScalarField> {
    let src = field.grid();
    let dim = src.dim();
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("rescale radius {r} must be positive")));
    }
    if center[dim - 1] != 0.0 {
        return Err(Error::InvalidParameter("rescale center must lie on the thin space".into()));
    }
    let params = Params::symmetric(src.a())?;
    let target = Arc::new(build_halfball_grid(&params, dim, 1.0, src.resolution())?);
    rescale_onto(field, center, r, degree, target)
}

/// As [`rescale`], onto a caller-supplied grid.
pub fn rescale_onto(
    field: &ScalarField,
    center: &Point,
    r: f64,
    degree: f64,
    target: Arc<WeightedGrid>,
) -> Result<ScalarField> {
    let scale = r.powf(-degree);
    let vals: Vec<Option<f64>> = par::map_indexed(target.node_count(), |i| {
        let x = target.node_coords(i);
        let mut y = *center;
        for d in 0..target.dim() {
            y[d] += r * x[d];
        }
        field.interpolate(&y).map(|v| v * scale)
    });
    let mut values = Vec::with_capacity(vals.len());
    for (i, v) in vals.into_iter().enumerate() {
        match v {
            Some(v) => values.push(v),
            None => {
                return Err(Error::OutsideDomain(format!(
                    "rescaled node {:?} falls outside the source grid",
                    target.node_coords(i)
                )))
            }
        }
    }
    ScalarField::new(target, values)
}
