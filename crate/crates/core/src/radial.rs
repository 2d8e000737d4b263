//! Monotonicity quantities W, N, S, T about a thin point, and blow-ups.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::functional::rescale;
use crate::grid::{Cell, Domain, Point, WeightedGrid};
use crate::par;
use crate::params::Params;
use crate::quadrature::{gauss_legendre_on, power_integral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Weiss,
    Almgren,
    S,
    T,
}

impl ProfileKind {
    fn label(&self) -> &'static str {
        match self {
            ProfileKind::Weiss => "weiss",
            ProfileKind::Almgren => "almgren",
            ProfileKind::S => "S",
            ProfileKind::T => "T",
        }
    }
}

/// A radial quantity sampled on increasing radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub kind: ProfileKind,
    pub center: Point,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialProfile {
    /// Largest decrease `max_{i<j} (v_i − v_j)`; zero for nondecreasing data.
    pub fn max_decrease(&self) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut drop: f64 = 0.0;
        for &v in &self.values {
            best = best.max(v);
            drop = drop.max(best - v);
        }
        drop
    }

    /// `max − min` of the values.
    pub fn range(&self) -> f64 {
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    /// Appends `kind,center,r,value` rows (writes a header when asked).
    pub fn write_csv<W: Write>(profiles: &[RadialProfile], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "center", "r", "value"])?;
        for p in profiles {
            let c = format!("{} {} {}", p.center[0], p.center[1], p.center[2]);
            for (r, v) in p.radii.iter().zip(&p.values) {
                w.write_record([p.kind.label().to_string(), c.clone(), r.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by `r^{1−a}`.
    Power2s,
    /// Divide by `S(r)`.
    ByS,
}

/// Quadrature nodes for `∫_{(∂B_r(c))⁺} x_n^a f dS`.
///
/// The weight singularity at the thin space is removed by substituting
/// `sin(angle) = s^{1/(1+a)}` (3D) or `angle = (π/2) s^{1/(1+a)}` (2D).
pub fn hemisphere_rule(dim: usize, a: f64, center: &Point, r: f64) -> Vec<(Point, f64)> {
    let p = 1.0 / (1.0 + a);
    let mut out = Vec::new();
    if dim == 2 {
        let scale = (PI / 2.0).powf(1.0 + a) * p * r.powf(1.0 + a);
        for (s, w) in gauss_legendre_on(48, 0.0, 1.0) {
            let theta = PI / 2.0 * s.powf(p);
            let ratio = if theta > 0.0 { (theta.sin() / theta).powf(a) } else { 1.0 };
            let wt = scale * ratio * w;
            for th in [theta, PI - theta] {
                let x = [center[0] + r * th.cos(), center[1] + r * th.sin(), 0.0];
                out.push((x, wt));
            }
        }
    } else {
        let m = 64;
        let scale = p * r.powf(2.0 + a) * 2.0 * PI / m as f64;
        for (s, w) in gauss_legendre_on(24, 0.0, 1.0) {
            let t = s.powf(p);
            let cb = (1.0 - t * t).max(0.0).sqrt();
            for k in 0..m {
                let psi = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                let x = [
                    center[0] + r * cb * psi.cos(),
                    center[1] + r * cb * psi.sin(),
                    center[2] + r * t,
                ];
                out.push((x, scale * w));
            }
        }
    }
    out
}

fn hemisphere_integral<F: Fn(f64) -> f64 + Sync + Send>(
    field: &ScalarField,
    a: f64,
    center: &Point,
    r: f64,
    f: F,
) -> Result<f64> {
    let rule = hemisphere_rule(field.grid().dim(), a, center, r);
    let vals: Vec<Option<f64>> = par::map(&rule, |(x, w)| field.interpolate(x).map(|v| w * f(v)));
    let mut total = 0.0;
    for v in vals {
        total += v.ok_or_else(|| Error::OutsideDomain(format!("sphere of radius {r} leaves the grid")))?;
    }
    Ok(total)
}

/// Fraction of a cell's weight inside `B_r(c)`.
fn cell_ball_fraction(grid: &WeightedGrid, cell: &Cell, center: &Point, r: f64) -> f64 {
    let dim = grid.dim();
    let h = grid.spacing();
    let (mut dmin, mut dmax) = (0.0, 0.0);
    for d in 0..dim {
        let lo = cell.lower[d] as f64 * h - center[d];
        let hi = lo + h;
        let near = if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 };
        let far = lo.abs().max(hi.abs());
        dmin += near * near;
        dmax += far * far;
    }
    if dmin >= r * r {
        return 0.0;
    }
    if dmax <= r * r {
        return 1.0;
    }
    let k: usize = if dim == 2 { 12 } else { 6 };
    let a = grid.a();
    let y0 = cell.lower[dim - 1] as f64 * h;
    let full = power_integral(y0, y0 + h, a);
    let row_w: Vec<f64> = (0..k)
        .map(|t| {
            let lo = y0 + t as f64 * h / k as f64;
            power_integral(lo, lo + h / k as f64, a) / full
        })
        .collect();
    let tang = (k as f64).powi(dim as i32 - 1);
    let mut frac = 0.0;
    let total = k.pow(dim as u32);
    for s in 0..total {
        let mut rem = s;
        let mut d2 = 0.0;
        let mut t_normal = 0;
        for d in 0..dim {
            let t = rem % k;
            rem /= k;
            let x = (cell.lower[d] as f64 + (t as f64 + 0.5) / k as f64) * h - center[d];
            d2 += x * x;
            if d == dim - 1 {
                t_normal = t;
            }
        }
        if d2 <= r * r {
            frac += row_w[t_normal] / tang;
        }
    }
    frac
}

/// `∫_{B_r⁺(c)} x_n^a |∇u|²` from the cell edge energies.
pub fn ball_dirichlet(field: &ScalarField, center: &Point, r: f64) -> f64 {
    let grid = &**field.grid();
    let cells = grid.cells();
    par::sum_indexed(cells.len(), |i| {
        let c = &cells[i];
        let f = cell_ball_fraction(grid, c, center, r);
        if f == 0.0 {
            0.0
        } else {
            f * grid.cell_energy(c, field.values())
        }
    })
}

/// `∫_{B_r′(c)} F(u)` over the thin faces.
pub fn thin_ball_integral<F: Fn(f64) -> f64 + Sync + Send>(
    field: &ScalarField,
    center: &Point,
    r: f64,
    f: F,
) -> f64 {
    let grid = &**field.grid();
    let dim = grid.dim();
    let h = grid.spacing();
    let faces = grid.thin_faces();
    let nface = 1usize << (dim - 1);
    let area = h.powi(dim as i32 - 1);
    let u = field.values();
    let k: usize = if dim == 2 { 32 } else { 12 };
    par::sum_indexed(faces.len(), |i| {
        let face = &faces[i];
        let (mut dmin, mut dmax) = (0.0, 0.0);
        for d in 0..dim - 1 {
            let lo = face.lower[d] as f64 * h - center[d];
            let hi = lo + h;
            let near = if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 };
            let far = lo.abs().max(hi.abs());
            dmin += near * near;
            dmax += far * far;
        }
        if dmin >= r * r {
            return 0.0;
        }
        let vals: Vec<f64> = face.corners[..nface].iter().map(|&n| u[n as usize]).collect();
        let same_sign = vals.iter().all(|v| *v >= 0.0) || vals.iter().all(|v| *v <= 0.0);
        if dmax <= r * r && same_sign {
            // F is affine on one sign, so the corner average is exact.
            let mean = vals.iter().map(|v| f(*v)).sum::<f64>() / nface as f64;
            return face.fraction * area * mean;
        }
        let total = k.pow(dim as u32 - 1);
        let mut acc = 0.0;
        for s in 0..total {
            let mut rem = s;
            let mut t = [0.0; 2];
            let mut d2 = 0.0;
            for d in 0..dim - 1 {
                let q = rem % k;
                rem /= k;
                t[d] = (q as f64 + 0.5) / k as f64;
                let x = (face.lower[d] as f64 + t[d]) * h - center[d];
                d2 += x * x;
            }
            if d2 > r * r {
                continue;
            }
            let mut v = 0.0;
            for (c, val) in vals.iter().enumerate() {
                let mut w = 1.0;
                for d in 0..dim - 1 {
                    w *= if c & (1 << d) != 0 { t[d] } else { 1.0 - t[d] };
                }
                v += w * val;
            }
            acc += f(v);
        }
        face.fraction * area * acc / total as f64
    })
}

fn check_radii(field: &ScalarField, center: &Point, radii: &[f64]) -> Result<()> {
    let grid = field.grid();
    let dim = grid.dim();
    if center[dim - 1] != 0.0 {
        return Err(Error::InvalidParameter("center must lie on the thin space".into()));
    }
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("radii must be positive and strictly increasing".into()));
    }
    let rmax = *radii.last().unwrap();
    let fits = match *grid.domain() {
        Domain::HalfBall { radius } => crate::grid::norm(dim, center) + rmax <= radius * (1.0 + 1e-12),
        Domain::HalfBox { half_width, height } => {
            rmax <= height && (0..dim - 1).all(|d| center[d].abs() + rmax <= half_width)
        }
        Domain::Sector { .. } => false,
    };
    if !fits {
        return Err(Error::OutsideDomain(format!("ball of radius {rmax} leaves the domain")));
    }
    Ok(())
}

/// Weiss energy
/// `W(r) = r^{a−n}[∫_{B_r⁺} x_n^a|∇u|² − 2∫_{B_r′}(λ+u⁺ + λ−u⁻)] − (1−a) r^{a−n−1} ∫_{(∂B_r)⁺} x_n^a u²`.
pub fn weiss(field: &ScalarField, params: &Params, center: &Point, radii: &[f64]) -> Result<RadialProfile> {
    field.grid().check_params(params)?;
    check_radii(field, center, radii)?;
    let n = field.grid().dim() as f64;
    let a = params.a();
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let bulk = ball_dirichlet(field, center, r);
        let thin = thin_ball_integral(field, center, r, |v| params.thin_density(v));
        let sphere = hemisphere_integral(field, a, center, r, |v| v * v)?;
        values.push(r.powf(a - n) * (bulk - 2.0 * thin) - (1.0 - a) * r.powf(a - n - 1.0) * sphere);
    }
    Ok(RadialProfile {
        kind: ProfileKind::Weiss,
        center: *center,
        radii: radii.to_vec(),
        values,
    })
}

/// Almgren frequency `N(r) = r ∫_{B_r}|∇u|² / ∫_{∂B_r} u²` of the even
/// reflection (the factor two cancels). Only for `a = 0`.
pub fn almgren(field: &ScalarField, center: &Point, radii: &[f64]) -> Result<RadialProfile> {
    if field.grid().a() != 0.0 {
        return Err(Error::NotApplicable("the frequency is only evaluated for a = 0".into()));
    }
    check_radii(field, center, radii)?;
    let dim = field.grid().dim() as i32;
    let scale = field.max_abs().powi(2);
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let bulk = ball_dirichlet(field, center, r);
        let sphere = hemisphere_integral(field, 0.0, center, r, |v| v * v)?;
        if sphere <= 1e-14 * scale * r.powi(dim - 1) || sphere == 0.0 {
            return Err(Error::Degenerate(format!("field vanishes on the sphere of radius {r}")));
        }
        values.push(r * bulk / sphere);
    }
    Ok(RadialProfile {
        kind: ProfileKind::Almgren,
        center: *center,
        radii: radii.to_vec(),
        values,
    })
}

/// `S(r) = (r^{1−n}∫_{∂B_r} u²)^{1/2}` over the full (reflected) sphere and
/// `T(r) = r^{1−n}∫_{B_r′} u⁻`.
pub fn s_t_profiles(field: &ScalarField, center: &Point, radii: &[f64]) -> Result<(RadialProfile, RadialProfile)> {
    check_radii(field, center, radii)?;
    let n = field.grid().dim() as f64;
    let mut s = Vec::with_capacity(radii.len());
    let mut t = Vec::with_capacity(radii.len());
    for &r in radii {
        let sphere = 2.0 * hemisphere_integral(field, 0.0, center, r, |v| v * v)?;
        s.push((r.powf(1.0 - n) * sphere).sqrt());
        t.push(r.powf(1.0 - n) * thin_ball_integral(field, center, r, |v| (-v).max(0.0)));
    }
    Ok((
        RadialProfile {
            kind: ProfileKind::S,
            center: *center,
            radii: radii.to_vec(),
            values: s,
        },
        RadialProfile {
            kind: ProfileKind::T,
            center: *center,
            radii: radii.to_vec(),
            values: t,
        },
    ))
}

/// Rescalings `u(c + r x)/r^{1−a}` or `u(c + r x)/S(r)` on the unit half-ball.
pub fn blowup_sequence(
    field: &ScalarField,
    center: &Point,
    radii: &[f64],
    normalization: Normalization,
) -> Result<Vec<ScalarField>> {
    let grid = field.grid();
    let a = grid.a();
    let h = grid.spacing();
    let at_center = field
        .interpolate(center)
        .ok_or_else(|| Error::OutsideDomain("blow-up center outside the grid".into()))?;
    if at_center.abs() > h.powf(1.0 - a) {
        return Err(Error::InvalidParameter(format!(
            "center is not a free boundary point (|u| = {at_center:.3e})"
        )));
    }
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        let v = match normalization {
            Normalization::Power2s => rescale(field, center, r, 1.0 - a)?,
            Normalization::ByS => {
                let (s, _) = s_t_profiles(field, center, &[r])?;
                let sr = s.values[0];
                if sr <= f64::EPSILON * field.max_abs().max(f64::MIN_POSITIVE) {
                    return Err(Error::Degenerate(format!("S({r}) vanishes")));
                }
                rescale(field, center, r, 0.0)?.map(|_, v| v / sr)?
            }
        };
        out.push(v);
    }
    Ok(out)
}

/// Relative failure of `u(tx) = t^degree u(x)` over shells inside the unit
/// ball, `t ∈ {1/2, 1/4}`; denominators are floored at 5% of `max |u|`.
pub fn homogeneity_deviation(field: &ScalarField, degree: f64) -> f64 {
    let grid = field.grid();
    let dim = grid.dim();
    let radius = 0.95 * grid.domain().inner_radius().max(grid.spacing());
    let mut dirs: Vec<Point> = Vec::new();
    if dim == 2 {
        for k in 0..=24 {
            let th = PI * k as f64 / 24.0;
            dirs.push([th.cos(), th.sin(), 0.0]);
        }
    } else {
        for i in 0..=6 {
            let el = PI / 2.0 * i as f64 / 6.0;
            let m = if i == 6 { 1 } else { 24 };
            for k in 0..m {
                let az = 2.0 * PI * k as f64 / m as f64;
                dirs.push([el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]);
            }
        }
    }
    let mut pairs = Vec::new();
    for rho in [0.5, 0.75, 1.0] {
        for d in &dirs {
            let x = [d[0] * rho * radius, d[1] * rho * radius, d[2] * rho * radius];
            if let Some(fx) = field.interpolate(&x) {
                for t in [0.5, 0.25] {
                    if let Some(ftx) = field.interpolate(&[t * x[0], t * x[1], t * x[2]]) {
                        pairs.push((fx, ftx, t));
                    }
                }
            }
        }
    }
    let floor = 0.05 * pairs.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
    if floor == 0.0 {
        return 0.0;
    }
    pairs
        .iter()
        .map(|&(fx, ftx, t)| (ftx - t.powf(degree) * fx).abs() / fx.abs().max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_halfball_grid;
    use std::sync::Arc;

    fn grid(a: f64, dim: usize, res: usize) -> Arc<WeightedGrid> {
        Arc::new(build_halfball_grid(&Params::symmetric(a).unwrap(), dim, 1.0, res).unwrap())
    }

    #[test]
    fn hemisphere_rule_integrates_weight() {
        // ∫_{(∂B_1)⁺} x_n^a dS: 2D B((1+a)/2, 1/2); 3D 2π/(1+a).
        for a in [-0.7, -0.3, 0.0, 0.4] {
            let s2: f64 = hemisphere_rule(2, a, &[0.0; 3], 1.0).iter().map(|p| p.1).sum();
            let want2 = crate::special::beta((1.0 + a) / 2.0, 0.5);
            assert!((s2 / want2 - 1.0).abs() < 1e-9, "a={a}: {s2} vs {want2}");
            let s3: f64 = hemisphere_rule(3, a, &[0.0; 3], 2.0).iter().map(|p| p.1).sum();
            let want3 = 2.0 * PI / (1.0 + a) * 2f64.powf(2.0 + a);
            assert!((s3 / want3 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_decrease_and_range() {
        let p = RadialProfile {
            kind: ProfileKind::Weiss,
            center: [0.0; 3],
            radii: vec![1.0, 2.0, 3.0, 4.0],
            values: vec![0.0, 2.0, 1.5, 3.0],
        };
        assert_eq!(p.max_decrease(), 0.5);
        assert_eq!(p.range(), 3.0);
    }

    #[test]
    fn zero_field_has_zero_weiss() {
        let g = grid(-0.5, 2, 16);
        let p = Params::one_phase(-0.5).unwrap();
        let w = weiss(&ScalarField::zeros(g), &p, &[0.0; 3], &[0.25, 0.5]).unwrap();
        assert!(w.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn radii_are_validated() {
        let g = grid(0.0, 2, 16);
        let u = ScalarField::from_fn(g, |x| x[0]).unwrap();
        assert!(almgren(&u, &[0.0; 3], &[0.5, 0.4]).is_err());
        assert!(almgren(&u, &[0.5, 0.0, 0.0], &[0.6]).is_err());
        assert!(s_t_profiles(&u, &[0.0, 0.1, 0.0], &[0.2]).is_err());
    }

    #[test]
    fn inhomogeneity_is_detected() {
        let g = grid(0.0, 2, 32);
        let lin = ScalarField::from_fn(g.clone(), |x| x[0]).unwrap();
        assert!(homogeneity_deviation(&lin, 1.0) < 1e-10);
        let shifted = ScalarField::from_fn(g, |x| x[0] + 1.0).unwrap();
        assert!(homogeneity_deviation(&shifted, 1.0) >= 0.4);
    }
}
