//! Second variation, the energy second difference, the Beta inequality and
//! instability certificates for the symmetric singular solutions.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::free_boundary::{dist, singular_candidates, zero_segments};
use crate::functional::dirichlet_energy;
use crate::grid::Point;
use crate::par;
use crate::params::Params;
use crate::quadrature::{gauss_legendre_on, integrate, QuadOptions};
use crate::radial::hemisphere_rule;
use crate::reference::{calibrate_c_a, segment_potential, segment_primitive, CALIBRATION_RESOLUTION};
use crate::solver::sector_positive_minimizer;
use crate::special::beta;

/// Truncation radius used when none is given.
pub const DEFAULT_TRUNCATION: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StableAtScale,
    Unstable,
    Inconclusive,
}

/// Both sides of the one-dimensional identity behind the `u_2` certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `B(1−a, 1) − B(1−2a, 1+a)`.
    pub factor: f64,
    /// `(c_a/−2a)·factor`.
    pub closed_form: f64,
    /// `∫_0^1 w − 2∫_0^1 w²/|∇u_2|` by adaptive quadrature.
    pub quadrature: f64,
    pub c_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub a: f64,
    /// Sector index for the `u_i` family.
    pub i: Option<u32>,
    pub radius: f64,
    pub dirichlet_term: f64,
    pub boundary_term: f64,
    pub form_value: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    /// Zero-set pieces dropped near singular candidates.
    pub excised: usize,
    /// What the dropped pieces would have added to `boundary_term`; an
    /// indication of the excision error, not part of `form_value`.
    pub excised_term: f64,
    pub certificate: Option<Certificate>,
    /// `max(u_i − u_2)` on the common sector.
    pub domination_excess: Option<f64>,
    /// `max |∂_2 u_i| / |∂_2 u_2|` along the sector wall.
    pub gradient_ratio: Option<f64>,
}

impl StabilityReport {
    pub fn new(a: f64, radius: f64, dirichlet_term: f64, boundary_term: f64) -> Self {
        let form_value = dirichlet_term - boundary_term;
        let tolerance = 1e-9 * dirichlet_term.abs().max(boundary_term.abs());
        let verdict = if form_value < -tolerance {
            Verdict::Unstable
        } else if form_value > tolerance {
            Verdict::StableAtScale
        } else {
            Verdict::Inconclusive
        };
        Self {
            a,
            i: None,
            radius,
            dirichlet_term,
            boundary_term,
            form_value,
            tolerance,
            verdict,
            excised: 0,
            excised_term: 0.0,
            certificate: None,
            domination_excess: None,
            gradient_ratio: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per report.
    pub fn write_summary_csv<W: Write>(reports: &[StabilityReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "i", "radius", "dirichlet_term", "boundary_term", "form_value", "verdict", "factor"])?;
        for r in reports {
            w.write_record([
                r.a.to_string(),
                r.i.map(|i| i.to_string()).unwrap_or_default(),
                r.radius.to_string(),
                r.dirichlet_term.to_string(),
                r.boundary_term.to_string(),
                r.form_value.to_string(),
                serde_json::to_value(r.verdict)?.as_str().unwrap_or_default().to_string(),
                r.certificate.map(|c| c.factor.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn same_grid(u: &ScalarField, w: &ScalarField) -> Result<()> {
    if !Arc::ptr_eq(u.grid(), w.grid()) && u.grid().descriptor() != w.grid().descriptor() {
        return Err(Error::InvalidParameter("u and w live on different grids".into()));
    }
    Ok(())
}

/// `∫|∇w|² x_n^a − 2∫_{u=0} w²/|∇′u| dH^{n−2}` on the grid.
///
/// The zero set is the thin crossing points (n = 2) or the marching-squares
/// curves (n = 3); pieces within one cell of a singular candidate are
/// excised.
pub fn second_variation_form(u: &ScalarField, w: &ScalarField, params: &Params) -> Result<StabilityReport> {
    same_grid(u, w)?;
    let g = u.grid();
    g.check_params(params)?;
    let a = params.a();
    if a >= 0.0 {
        return Err(Error::NotApplicable("the thin zero set carries the second variation only for a < 0".into()));
    }
    let wv = w.values();
    let wmax = w.max_abs();
    if g.boundary_nodes().iter().any(|&id| g.node_coords(id)[g.dim() - 1] > 0.0 && wv[id].abs() > 1e-12 * wmax) {
        return Err(Error::InvalidParameter("w must vanish on the outer boundary".into()));
    }
    let dirichlet_term = dirichlet_energy(g, wv);
    let h = g.spacing();
    let candidates = singular_candidates(u, None)?;
    let near_singular = |x: &Point| candidates.iter().any(|c| dist(c, x) <= h * (1.0 + 1e-9));

    // (weight · w², gradient) samples of the codimension-2 integral
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut dropped: Vec<(f64, f64)> = Vec::new();
    let wat = |x: &Point| w.interpolate(x).unwrap_or(0.0);
    if g.dim() == 2 {
        let uv = u.values();
        for &id in g.thin_nodes() {
            let p = g.node_lattice(id);
            let Some(j) = g.node_at([p[0] + 1, p[1], p[2]]) else { continue };
            let (ui, uj) = (uv[id], uv[j]);
            if (ui >= 0.0) == (uj >= 0.0) {
                continue;
            }
            let t = ui / (ui - uj);
            let xi = g.node_coords(id);
            let x = [xi[0] + t * h, xi[1], xi[2]];
            let wx = wv[id] + t * (wv[j] - wv[id]);
            let sample = (wx * wx, (uj - ui).abs() / h);
            if near_singular(&x) {
                dropped.push(sample);
            } else {
                samples.push(sample);
            }
        }
    } else {
        for seg in zero_segments(u) {
            let [p, q] = seg.ends;
            let m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, 0.0];
            let len = dist(&p, &q);
            let simpson = (wat(&p).powi(2) + 4.0 * wat(&m).powi(2) + wat(&q).powi(2)) / 6.0;
            let sample = (len * simpson, seg.gradient);
            if near_singular(&m) {
                dropped.push(sample);
            } else {
                samples.push(sample);
            }
        }
    }
    let gmax = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let mut boundary = 0.0;
    for (mass, grad) in &samples {
        if *mass == 0.0 {
            continue;
        }
        if !(*grad > 1e-10 * gmax) {
            return Err(Error::Degenerate(format!(
                "tangential gradient {grad:.3e} vanishes on a non-excised part of the zero set"
            )));
        }
        boundary += mass / grad;
    }
    let radius = g.domain().inner_radius();
    let mut report = StabilityReport::new(a, radius, dirichlet_term, 2.0 * boundary);
    report.excised = dropped.len();
    report.excised_term = 2.0 * dropped.iter().filter(|s| s.1 > 0.0).map(|s| s.0 / s.1).sum::<f64>();
    Ok(report)
}

/// `[J(u + tw) − 2J(u) + J(u − tw)]/(2t²)`.
///
/// The Dirichlet part is exactly `t²·2∫|∇w|²x_n^a`, so the value reduces to
/// `∫|∇w|²x_n^a` wherever the thin term is linear along `u ± tw`.
pub fn energy_second_difference(u: &ScalarField, w: &ScalarField, params: &Params, t: f64) -> Result<f64> {
    same_grid(u, w)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let g = u.grid();
    g.check_params(params)?;
    let (uv, wv) = (u.values(), w.values());
    let bend: Vec<f64> = g
        .thin_nodes()
        .iter()
        .map(|&id| {
            let (x, d) = (uv[id], t * wv[id]);
            params.thin_density(x + d) + params.thin_density(x - d) - 2.0 * params.thin_density(x)
        })
        .collect();
    let thin = -2.0 * g.thin_sum(&bend);
    Ok(dirichlet_energy(g, wv) + thin / (2.0 * t * t))
}

fn check_negative_a(a: f64) -> Result<()> {
    if !(a > -1.0 && a < 0.0) {
        return Err(Error::InvalidParameter(format!("need -1 < a < 0, got {a}")));
    }
    Ok(())
}

/// `B(1+a, 1−2a) − 1/(1−a)`.
pub fn beta_margin(a: f64) -> Result<f64> {
    check_negative_a(a)?;
    Ok(beta(1.0 + a, 1.0 - 2.0 * a) - 1.0 / (1.0 - a))
}

/// `B(1−a, 1) − B(1−2a, 1+a)`.
pub fn certificate_factor(a: f64) -> Result<f64> {
    check_negative_a(a)?;
    Ok(beta(1.0 - a, 1.0) - beta(1.0 - 2.0 * a, 1.0 + a))
}

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_panels: 4000 }
}

/// `∫_lo^hi f` for `f ~ (x − lo)^a` near `lo`, after `x − lo = L s^{1/(1+a)}`.
fn integrate_power_lo<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, a: f64) -> Result<f64> {
    let q = 1.0 / (1.0 + a);
    let len = hi - lo;
    integrate(
        |s: f64| {
            if s == 0.0 {
                return 0.0;
            }
            let x = lo + len * s.powf(q);
            f(x) * len * q * s.powf(q - 1.0)
        },
        0.0,
        1.0,
        &[],
        quad_opts(),
    )
}

fn cutoff(r: f64, big: f64) -> f64 {
    if r <= big / 2.0 {
        1.0
    } else if r >= big {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (2.0 * r / big - 1.0)).cos())
    }
}

fn cutoff_slope(r: f64, big: f64) -> f64 {
    if r <= big / 2.0 || r >= big {
        0.0
    } else {
        -(std::f64::consts::PI / big) * (std::f64::consts::PI * (2.0 * r / big - 1.0)).sin()
    }
}

/// `w_L/c_a` on the `x_1`-axis for the segment `[0, L]`.
fn axis_w(a: f64, len: f64, x: f64) -> Result<f64> {
    Ok(segment_primitive(a, 0.0, len - x)? - segment_primitive(a, 0.0, -x)?)
}

/// Semi-analytic second variation of `u_2` against `η w_L`, where `w_L` is
/// the positive potential of `[0, L]` and `η` a cosine cutoff from `R/2` to
/// `R`. Returns `(dirichlet, boundary)`.
///
/// Integrating by parts with `div(x_3^a ∇w) = 0` off the segment,
/// `∫|∇(ηw)|²x_3^a = ∫_0^L w + ∫ w²|∇η|² x_3^a`; the second piece lives on the
/// annulus and uses the hemisphere rule. The zero set of `u_2` is the two
/// thin axes, where `|∇u_2| = (4c_a/−a)|t|^{−a}`.
pub fn u2_truncated_terms(a: f64, len: f64, radius: f64) -> Result<(f64, f64)> {
    ray_truncated_terms(a, 2, len, radius)
}

/// As [`u2_truncated_terms`] with the zero set replaced by the `2i` rays at
/// angles `kπ/i`, each carrying the gradient `(4c_a/−a) r^{−a}`.
pub fn ray_truncated_terms(a: f64, i: u32, len: f64, radius: f64) -> Result<(f64, f64)> {
    check_negative_a(a)?;
    if i < 2 {
        return Err(Error::InvalidParameter(format!("sector index must be >= 2, got {i}")));
    }
    if !(len > 0.0 && radius >= 2.0 * len) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < L <= R/2, got L = {len}, R = {radius}"
        )));
    }
    let c = calibrate_c_a(a, CALIBRATION_RESOLUTION)?;
    let e = 1.0 - a;
    let trace_mass = 2.0 * c * len.powf(e) / (-a * e);

    let mut annulus = 0.0;
    for (r, wr) in gauss_legendre_on(24, radius / 2.0, radius) {
        let rule = hemisphere_rule(3, a, &[0.0; 3], r);
        let vals: Vec<Result<f64>> = par::map(&rule, |(x, wt)| Ok(wt * (c * segment_potential(a, x, 0.0, len)?).powi(2)));
        let mut s = 0.0;
        for v in vals {
            s += v?;
        }
        annulus += wr * s * cutoff_slope(r, radius).powi(2);
    }

    let grad = |t: f64| 4.0 * c / -a * t.abs().powf(-a);
    let mut rays = 0.0;
    for k in 0..2 * i {
        let theta = k as f64 * std::f64::consts::PI / i as f64;
        let (mut sn, mut cs) = theta.sin_cos();
        if sn.abs() < 1e-12 {
            sn = 0.0;
            cs = cs.signum();
        }
        if cs.abs() < 1e-12 {
            cs = 0.0;
            sn = sn.signum();
        }
        let f = |r: f64| -> f64 {
            let w = if sn == 0.0 {
                axis_w(a, len, cs * r)
            } else {
                segment_potential(a, &[cs * r, sn * r, 0.0], 0.0, len)
            };
            let w = c * w.unwrap_or(f64::NAN);
            (cutoff(r, radius) * w).powi(2) / grad(r)
        };
        // w has a kink where the positive ray leaves the segment
        let near = if cs == 1.0 { len } else { radius / 2.0 };
        rays += integrate_power_lo(f, 0.0, near, a)?;
        rays += integrate(&f, near, radius, &[radius / 2.0], quad_opts())?;
    }
    if !rays.is_finite() {
        return Err(Error::Quadrature("zero-ray integral is not finite".into()));
    }
    Ok((trace_mass + annulus, 2.0 * rays))
}

/// Certificate for `u_2`: the Beta factor, its quadrature counterpart on
/// `[0, 1]`, and the truncated form at `truncation_radius`.
pub fn u2_instability_certificate(a: f64, truncation_radius: f64) -> Result<StabilityReport> {
    let factor = certificate_factor(a)?;
    let c = calibrate_c_a(a, CALIBRATION_RESOLUTION)?;
    let closed_form = c / (-2.0 * a) * factor;
    let w = |x: f64| c * axis_w(a, 1.0, x).unwrap_or(f64::NAN);
    let grad = |x: f64| 4.0 * c / -a * x.powf(-a);
    let trace = integrate(w, 0.0, 1.0, &[0.5], quad_opts())?;
    let bend = |x: f64| w(x).powi(2) / grad(x);
    let penalty = integrate_power_lo(bend, 0.0, 0.5, a)? + integrate(bend, 0.5, 1.0, &[], quad_opts())?;
    let quadrature = trace - 2.0 * penalty;
    if !((closed_form - quadrature).abs() <= 1e-6 * closed_form.abs()) {
        return Err(Error::Disagreement { closed_form, quadrature });
    }
    let (d, b) = u2_truncated_terms(a, 1.0, truncation_radius)?;
    let mut report = StabilityReport::new(a, truncation_radius, d, b);
    report.i = Some(2);
    report.certificate = Some(Certificate { factor, closed_form, quadrature, c_a: c });
    Ok(report)
}

/// Instability of the `π/i` sector solution.
///
/// Computes the positive sector solutions for `i` and `2` on the unit
/// sector, checks `u_i ≤ u_2` on the common nodes, and then bounds the
/// second variation of the reflected `u_i` from above: along the wall
/// `|∇u_i| ≤ |∇u_2| = (4c_a/−a) r^{−a}`, and by the reflection symmetry the
/// same holds on all `2i` zero rays, so the ray integral with that gradient
/// is a lower bound for the boundary term of `u_i`.
pub fn ui_instability_check(i: u32, a: f64, resolution: usize) -> Result<StabilityReport> {
    if i < 2 {
        return Err(Error::InvalidParameter(format!("sector index must be >= 2, got {i}")));
    }
    check_negative_a(a)?;
    if i == 2 {
        return u2_instability_certificate(a, DEFAULT_TRUNCATION);
    }
    let params = Params::symmetric(a)?;
    let si = sector_positive_minimizer(&params, i, resolution)?;
    let s2 = sector_positive_minimizer(&params, 2, resolution)?;
    let (gi, g2) = (si.field.grid(), s2.field.grid());
    let (ui, u2) = (si.field.values(), s2.field.values());
    let tol = 1e-6 * s2.field.max_abs();
    let mut excess = f64::NEG_INFINITY;
    let mut worst = 0;
    for id in 0..gi.node_count() {
        if let Some(j) = g2.node_at(gi.node_lattice(id)) {
            let d = ui[id] - u2[j];
            if d > excess {
                excess = d;
                worst = id;
            }
        }
    }
    if excess > tol {
        return Err(Error::DominationViolated { excess, node: worst });
    }
    // one-sided normal derivatives across the wall x_2 = 0
    let mut ratio: f64 = 0.0;
    for &id in gi.thin_nodes() {
        let p = gi.node_lattice(id);
        if p[1] != 0 || p[0] <= 0 {
            continue;
        }
        let (Some(ai), Some(a2)) = (gi.node_at([p[0], 1, 0]), g2.node_at([p[0], 1, 0])) else { continue };
        if u2[a2] > tol {
            ratio = ratio.max(ui[ai] / u2[a2]);
        }
    }

    let (d, b) = ray_truncated_terms(a, i, 1.0, DEFAULT_TRUNCATION)?;
    let base = u2_instability_certificate(a, DEFAULT_TRUNCATION)?;
    let mut report = StabilityReport::new(a, DEFAULT_TRUNCATION, d, b);
    report.i = Some(i);
    report.certificate = base.certificate;
    report.domination_excess = Some(excess);
    report.gradient_ratio = Some(ratio);
    Ok(report)
}
