//! Explicit singular solutions built from Riesz potentials of thin densities
//! against the kernel `|x − y|^{−1−a}`, the fundamental solution of
//! `div(x_3^a ∇·)` in three dimensions.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Point, WeightedGrid};
use crate::par;
use crate::quadrature::{integrate, QuadOptions};

/// Step resolution used when a calibrated constant is needed implicitly.
pub const CALIBRATION_RESOLUTION: usize = 64;
/// Ratio between the blow-up truncation disk and the evaluation radius.
pub const BLOWUP_RATIO: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    /// `±1` by quadrant, positive in the first and third.
    Quadrant,
    /// `−2` on `[−1, 0]`, `+2` on `[0, 1]` along the `x_1`-axis.
    LineDipole,
    /// `+1` on `[0, 1]` along the `x_1`-axis.
    SegmentPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Disk { radius: f64 },
    UnitSegment,
}

/// A density on the thin plane with its kernel exponent `1 + a` and the
/// prefactor multiplying the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub a: f64,
    pub density: Density,
    pub support: Support,
    pub scale: f64,
}

impl KernelSpec {
    pub fn quadrant(a: f64, radius: f64, scale: f64) -> Self {
        Self { a, density: Density::Quadrant, support: Support::Disk { radius }, scale }
    }

    pub fn line_dipole(a: f64, scale: f64) -> Self {
        Self { a, density: Density::LineDipole, support: Support::UnitSegment, scale }
    }

    pub fn segment_positive(a: f64, scale: f64) -> Self {
        Self { a, density: Density::SegmentPositive, support: Support::UnitSegment, scale }
    }

    pub fn kernel_exponent(&self) -> f64 {
        1.0 + self.a
    }

    fn validate(&self) -> Result<()> {
        check_a(self.a)?;
        if !self.scale.is_finite() {
            return Err(Error::NonFinite("kernel scale"));
        }
        match (self.density, self.support) {
            (Density::Quadrant, Support::Disk { radius }) if radius > 0.0 && radius.is_finite() => Ok(()),
            (Density::LineDipole | Density::SegmentPositive, Support::UnitSegment) => Ok(()),
            _ => Err(Error::InvalidParameter(format!(
                "density {:?} does not live on support {:?}",
                self.density, self.support
            ))),
        }
    }
}

fn check_a(a: f64) -> Result<()> {
    if !(a > -1.0 && a < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "singular solutions need -1 < a < 0, got {a}"
        )));
    }
    Ok(())
}

fn check_point(x: &Point) -> Result<()> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("evaluation point"));
    }
    if x[2] < 0.0 {
        return Err(Error::OutsideDomain(format!("{x:?} lies below the thin plane")));
    }
    Ok(())
}

/// `+1` on `[0, π/2] ∪ [π, 3π/2]`, `−1` elsewhere; angles are reduced mod 2π.
pub fn quadrant_density(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t <= PI / 2.0 || (PI..=1.5 * PI).contains(&t) {
        1.0
    } else {
        -1.0
    }
}

/// `∫_{B_R′} ρ(y) |x − y|^{−1−a} dy` for the quadrant density `ρ`.
///
/// Polar coordinates about `x′` make the radial integral closed form,
/// `∫ t (t² + x_3²)^{−(1+a)/2} dt = (t² + x_3²)^{(1−a)/2}/(1−a)`, so only
/// the angle is integrated numerically, split wherever the ray pattern of
/// axis and circle crossings changes.
fn quadrant_disk_potential(a: f64, radius: f64, x: &Point) -> Result<f64> {
    let (x1, x2, z) = (x[0], x[1], x[2]);
    let e = 1.0 - a;
    let anti = |t: f64| (t * t + z * z).powf(0.5 * e) / e;
    let r0 = x1.hypot(x2);
    let c0 = r0 * r0 - radius * radius;
    let ray = |phi: f64| -> f64 {
        let (d2, d1) = phi.sin_cos();
        let b = x1 * d1 + x2 * d2;
        let disc = b * b - c0;
        if disc <= 0.0 {
            return 0.0;
        }
        let sq = disc.sqrt();
        let t_out = -b + sq;
        let t_in = (-b - sq).max(0.0);
        if t_out <= t_in {
            return 0.0;
        }
        let mut cuts = [t_in, t_out, t_out, t_out];
        let mut n = 2;
        for (p, d) in [(x1, d1), (x2, d2)] {
            if d != 0.0 {
                let t = -p / d;
                if t > t_in && t < t_out {
                    cuts[n] = t;
                    n += 1;
                }
            }
        }
        let cuts = &mut cuts[..n];
        cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let y1 = x1 + mid * d1;
            let y2 = x2 + mid * d2;
            let rho = if (y1 >= 0.0) == (y2 >= 0.0) { 1.0 } else { -1.0 };
            total += rho * (anti(w[1]) - anti(w[0]));
        }
        total
    };
    let two_pi = 2.0 * PI;
    let mut bps: Vec<f64> = (1..4).map(|k| k as f64 * PI / 2.0).collect();
    let mut dir = |p: [f64; 2]| {
        let (dx, dy) = (p[0] - x1, p[1] - x2);
        if dx != 0.0 || dy != 0.0 {
            bps.push(dy.atan2(dx).rem_euclid(two_pi));
        }
    };
    dir([0.0, 0.0]);
    for p in [[radius, 0.0], [-radius, 0.0], [0.0, radius], [0.0, -radius]] {
        dir(p);
    }
    if r0 >= radius {
        let base = (-x2).atan2(-x1);
        let half = (radius / r0).min(1.0).asin();
        bps.push((base + half).rem_euclid(two_pi));
        bps.push((base - half).rem_euclid(two_pi));
    }
    // Ray contributions of size R^{1−a} cancel down to the value, so the
    // absolute target carries a roundoff floor relative to that size.
    let scale = x1.hypot(x2).hypot(z).max(1e-3 * radius).powf(e);
    let floor = 1e-14 * radius.max(r0 + z).powf(e);
    let opts = QuadOptions { abs_tol: 1e-12 * scale + floor, rel_tol: 1e-12, max_panels: 20000 };
    integrate(ray, 0.0, two_pi, &bps, opts)
}

/// `∫_0^T (s² + ρ²)^{−(1+a)/2} ds`, odd in `T`.
///
/// With `s = ρ sinh u` it becomes `ρ^{−a} ∫_0^{asinh(T/ρ)} cosh^{−a} u du`;
/// on the axis it is `|T|^{−a}/(−a)`.
pub fn segment_primitive(a: f64, rho: f64, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let sign = t.signum();
    let tt = t.abs();
    if rho == 0.0 {
        if a >= 0.0 {
            return Err(Error::NotApplicable("on-axis segment potential diverges for a >= 0".into()));
        }
        return Ok(sign * tt.powf(-a) / -a);
    }
    let upper = (tt / rho).asinh();
    let opts = QuadOptions { abs_tol: 1e-300, rel_tol: 1e-13, max_panels: 2000 };
    let v = integrate(|u: f64| u.cosh().powf(-a), 0.0, upper, &[], opts)?;
    Ok(sign * rho.powf(-a) * v)
}

/// `∫_{y0}^{y1} |x − (y, 0, 0)|^{−1−a} dy`.
pub fn segment_potential(a: f64, x: &Point, y0: f64, y1: f64) -> Result<f64> {
    let rho = x[1].hypot(x[2]);
    Ok(segment_primitive(a, rho, y1 - x[0])? - segment_primitive(a, rho, y0 - x[0])?)
}

fn potential_at(spec: &KernelSpec, x: &Point) -> Result<f64> {
    check_point(x)?;
    let raw = match (spec.density, spec.support) {
        (Density::Quadrant, Support::Disk { radius }) => quadrant_disk_potential(spec.a, radius, x)?,
        (Density::LineDipole, _) => {
            -2.0 * segment_potential(spec.a, x, -1.0, 0.0)? + 2.0 * segment_potential(spec.a, x, 0.0, 1.0)?
        }
        (Density::SegmentPositive, _) => segment_potential(spec.a, x, 0.0, 1.0)?,
        _ => unreachable!("validated"),
    };
    Ok(spec.scale * raw)
}

/// `scale · ∫ density(y) |x − y|^{−1−a} dy` at every point, in parallel.
pub fn riesz_potential(spec: &KernelSpec, points: &[Point]) -> Result<Vec<f64>> {
    spec.validate()?;
    par::map(points, |x| potential_at(spec, x)).into_iter().collect()
}

fn calibration_cache() -> &'static Mutex<HashMap<(u64, usize), f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Thin point deep inside the first quadrant of the unit disk.
pub fn calibration_point() -> Point {
    let s = 0.5 / 2f64.sqrt();
    [s, s, 0.0]
}

/// Weighted flux `−lim x_3^a ∂_3 u` at the thin point `x′` estimated from
/// heights `h, 2h, 4h`: the quotients `(1−a)(u(x′,0) − u(x′,t))/t^{1−a}`
/// carry an `O(t^{1+a})` error, removed by one Richardson step. Returns the
/// two extrapolants.
pub fn flux_estimate<F: Fn(&Point) -> Result<f64>>(a: f64, u: F, x: &Point, h: f64) -> Result<(f64, f64)> {
    let base = u(&[x[0], x[1], 0.0])?;
    let q = |t: f64| -> Result<f64> { Ok((1.0 - a) * (base - u(&[x[0], x[1], t])?) / t.powf(1.0 - a)) };
    let (d1, d2, d4) = (q(h)?, q(2.0 * h)?, q(4.0 * h)?);
    let k = 2f64.powf(1.0 + a);
    Ok(((k * d1 - d2) / (k - 1.0), (k * d2 - d4) / (k - 1.0)))
}

/// The constant `c_a` that makes the quadrant potential on the unit disk
/// carry flux `+1` at [`calibration_point`], using steps `h = 1/resolution`.
///
/// The exact value is `1/(2π)` for every `a`; the calibration never uses it.
pub fn calibrate_c_a(a: f64, resolution: usize) -> Result<f64> {
    check_a(a)?;
    if resolution < 8 {
        return Err(Error::ResolutionTooCoarse { got: resolution, min: 8 });
    }
    let key = (a.to_bits(), resolution);
    if let Some(c) = calibration_cache().lock().unwrap().get(&key) {
        return Ok(*c);
    }
    let h = 1.0 / resolution as f64;
    let u = |x: &Point| quadrant_disk_potential(a, 1.0, x);
    let (first, second) = flux_estimate(a, u, &calibration_point(), h)?;
    if !((first - second).abs() <= 0.05 * first.abs()) {
        return Err(Error::Calibration { first, second });
    }
    let c = 1.0 / first;
    calibration_cache().lock().unwrap().insert(key, c);
    Ok(c)
}

fn u2_at(a: f64, c: f64, x: &Point) -> Result<f64> {
    check_point(x)?;
    let r = x[0].hypot(x[1]).hypot(x[2]);
    if r == 0.0 {
        return Ok(0.0);
    }
    // u(ρx)/ρ^{1−a} for the unit-disk potential equals the potential of the
    // disk of radius R = 1/ρ at x. The quadrupole tail beyond R is added in
    // closed form and the next order, R^{−3−a}, removed by Richardson.
    let big = BLOWUP_RATIO * r.max(1.0);
    let level = |rr: f64| -> Result<f64> {
        let tail = 2.0 * (3.0 + a) * x[0] * x[1] * rr.powf(-1.0 - a);
        Ok(c * (quadrant_disk_potential(a, rr, x)? + tail))
    };
    let v1 = level(big)?;
    let v2 = level(2.0 * big)?;
    let k = 2f64.powf(3.0 + a);
    let v = (k * v2 - v1) / (k - 1.0);
    if (v2 - v1).abs() > 0.05 * c * r.powf(1.0 - a) {
        return Err(Error::Quadrature(format!(
            "blow-up sequence not settled at {x:?}: {v1:.6e} vs {v2:.6e}"
        )));
    }
    Ok(v)
}

/// The homogeneous blow-up `u_2 = lim u(ρx)/ρ^{1−a}` of the calibrated
/// quadrant potential.
pub fn u2_field(a: f64, points: &[Point]) -> Result<Vec<f64>> {
    let c = calibrate_c_a(a, CALIBRATION_RESOLUTION)?;
    par::map(points, |x| u2_at(a, c, x)).into_iter().collect()
}

/// `|∂_{x_2} u_2(x_1, 0, 0)| = (4c_a/−a) x_1^{−a}`.
pub fn u2_thin_gradient(a: f64, x1: f64) -> Result<f64> {
    if !(x1 > 0.0) {
        return Err(Error::InvalidParameter(format!("x1 must be positive, got {x1}")));
    }
    let c = calibrate_c_a(a, CALIBRATION_RESOLUTION)?;
    Ok(4.0 * c / -a * x1.powf(-a))
}

/// Normal derivative of `u_2` across the `x_1`-axis at `(x_1, 0, 0)` from the
/// quadrature field: symmetric quotients at offsets `δ, 2δ` with the
/// `δ^{−a}` remainder extrapolated away.
pub fn u2_axis_gradient_fd(a: f64, x1: f64, delta: f64) -> Result<f64> {
    let pts = [
        [x1, delta, 0.0],
        [x1, -delta, 0.0],
        [x1, 2.0 * delta, 0.0],
        [x1, -2.0 * delta, 0.0],
    ];
    let v = u2_field(a, &pts)?;
    let d1 = (v[0] - v[1]) / (2.0 * delta);
    let d2 = (v[2] - v[3]) / (4.0 * delta);
    let k = 2f64.powf(-a);
    Ok((k * d1 - d2) / (k - 1.0))
}

/// `c_a (∫_{−1}^0 −2 k + ∫_0^1 2 k)` with `k = |x − (y,0,0)|^{−1−a}`.
pub fn line_dipole_field(a: f64, points: &[Point]) -> Result<Vec<f64>> {
    let c = calibrate_c_a(a, CALIBRATION_RESOLUTION)?;
    riesz_potential(&KernelSpec::line_dipole(a, c), points)
}

/// `w = c_a ∫_0^1 |x − (y,0,0)|^{−1−a} dy`.
pub fn segment_test_function(a: f64, points: &[Point]) -> Result<Vec<f64>> {
    let c = calibrate_c_a(a, CALIBRATION_RESOLUTION)?;
    riesz_potential(&KernelSpec::segment_positive(a, c), points)
}

/// Closed form of `w/c_a` on the `x_1`-axis (any `x_1`, finite off `{0, 1}`).
pub fn test_function_on_axis(a: f64, x1: f64) -> f64 {
    let p = |t: f64| t.abs().powf(-a) / -a;
    // ∫_0^1 |x − y|^{−1−a} dy split at x
    if x1 <= 0.0 {
        p(1.0 - x1) - p(x1)
    } else if x1 >= 1.0 {
        p(x1) - p(x1 - 1.0)
    } else {
        p(x1) + p(1.0 - x1)
    }
}

/// Discrete `div(x_3^a ∇f)` at `x` by central differences, divided by
/// `x_3^a |f(x)| / h²` so that it reads as a relative residual.
pub fn extension_residual<F: Fn(&Point) -> Result<f64>>(a: f64, f: F, x: &Point, h: f64) -> Result<f64> {
    if x[2] <= 2.0 * h {
        return Err(Error::OutsideDomain("residual needs x_3 > 2h".into()));
    }
    let f0 = f(x)?;
    let mut lap = 0.0;
    let mut d3 = 0.0;
    for d in 0..3 {
        let mut p = *x;
        let mut m = *x;
        p[d] += h;
        m[d] -= h;
        let (fp, fm) = (f(&p)?, f(&m)?);
        lap += (fp - 2.0 * f0 + fm) / (h * h);
        if d == 2 {
            d3 = (fp - fm) / (2.0 * h);
        }
    }
    let res = lap + a * d3 / x[2];
    Ok(res.abs() * h * h / f0.abs().max(f64::MIN_POSITIVE))
}

/// Samples `u_2` at the nodes of a grid.
pub fn u2_on_grid(grid: Arc<WeightedGrid>) -> Result<ScalarField> {
    let pts: Vec<Point> = (0..grid.node_count()).map(|i| grid.node_coords(i)).collect();
    let vals = u2_field(grid.a(), &pts)?;
    ScalarField::new(grid, vals)
}

/// Writes `(x, value)` rows.
pub fn write_curve_csv<W: Write>(rows: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "value"])?;
    for (x, v) in rows {
        w.write_record([x.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
