use std::f64::consts::PI;

use thinobs::quadrature::gauss_legendre_on;
use thinobs::reference::{
    calibrate_c_a, calibration_point, extension_residual, flux_estimate, line_dipole_field, segment_test_function,
    quadrant_density, riesz_potential, test_function_on_axis, u2_axis_gradient_fd, u2_field, u2_thin_gradient,
    KernelSpec, CALIBRATION_RESOLUTION,
};
use thinobs::solver::{reflect_sector_solution, sector_positive_minimizer};
use thinobs::special::beta;
use thinobs::{Params, Point};

fn polar(r: f64, theta: f64, z: f64) -> Point {
    [r * theta.cos(), r * theta.sin(), z]
}

fn c_half() -> f64 {
    calibrate_c_a(-0.5, CALIBRATION_RESOLUTION).unwrap()
}

/// Composite Simpson rule with `n` (even) intervals.
fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn density_values() {
    assert_eq!(quadrant_density(PI / 4.0), 1.0);
    assert_eq!(quadrant_density(3.0 * PI / 4.0), -1.0);
    assert_eq!(quadrant_density(5.0 * PI / 4.0), 1.0);
    assert_eq!(quadrant_density(7.0 * PI / 4.0), -1.0);
}

#[test]
fn quadrant_potential_symmetries() {
    let a = -0.5;
    let spec = KernelSpec::quadrant(a, 1.0, 1.0);
    let neg = riesz_potential(&spec, &[polar(0.4, 0.75 * PI, 0.0)]).unwrap()[0];
    assert!(neg < 0.0);
    for (r, th, z) in [(0.3, 0.4, 0.0), (0.6, 1.1, 0.05), (0.2, 0.2, 0.3)] {
        let v = riesz_potential(&spec, &[polar(r, th, z), polar(r, th + PI, z), polar(r, PI - th, z)]).unwrap();
        assert!((v[0] - v[1]).abs() <= 1e-6 * v[0].abs(), "{v:?}");
        assert!((v[0] + v[2]).abs() <= 1e-6 * v[0].abs(), "{v:?}");
    }
}

#[test]
fn quadrant_potential_matches_cartesian_quadrature_off_plane() {
    // Away from the plane the integrand is smooth; integrate it over the
    // unit disk in polar coordinates about the origin, quadrant by quadrant.
    let a = -0.3;
    let x = [0.3, -0.2, 0.4];
    let f = |y1: f64, y2: f64| {
        let d2 = (x[0] - y1).powi(2) + (x[1] - y2).powi(2) + x[2] * x[2];
        d2.powf(-(1.0 + a) / 2.0)
    };
    let mut want = 0.0;
    for q in 0..4 {
        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        let t0 = q as f64 * PI / 2.0;
        want += sign
            * simpson(
                |t| simpson(|r| r * f(r * t.cos(), r * t.sin()), 0.0, 1.0, 400),
                t0,
                t0 + PI / 2.0,
                400,
            );
    }
    let got = riesz_potential(&KernelSpec::quadrant(a, 1.0, 1.0), &[x]).unwrap()[0];
    assert!((got / want - 1.0).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn calibration_properties() {
    let a = -0.5;
    let c64 = c_half();
    let c32 = calibrate_c_a(a, 32).unwrap();
    assert!((c32 / c64 - 1.0).abs() < 0.02);

    let spec = KernelSpec::quadrant(a, 1.0, c64);
    let u = |x: &Point| Ok(riesz_potential(&spec, &[*x])?[0]);
    let p = calibration_point();
    let (flux, _) = flux_estimate(a, u, &p, 1.0 / 128.0).unwrap();
    assert!((flux - 1.0).abs() < 0.02, "{flux}");
    let mirror = [-p[0], p[1], 0.0];
    let (flux, _) = flux_estimate(a, u, &mirror, 1.0 / 128.0).unwrap();
    assert!((flux + 1.0).abs() < 0.02, "{flux}");
    assert!(calibrate_c_a(0.2, 64).is_err());
}

#[test]
fn blowup_profile_sign_and_homogeneity() {
    let a = -0.5;
    let thetas = [0.3, 1.0, 2.0, 2.9, 3.5, 4.4, 5.0, 6.0];
    let pts: Vec<Point> = thetas.iter().map(|&t| polar(0.5, t, 0.0)).collect();
    let v = u2_field(a, &pts).unwrap();
    for (t, val) in thetas.iter().zip(&v) {
        assert_eq!(val.signum(), quadrant_density(*t), "θ = {t}");
    }
    let sample: Vec<Point> = vec![polar(0.3, 0.5, 0.0), polar(0.7, 2.2, 0.2), [0.1, 0.4, 0.3]];
    let doubled: Vec<Point> = sample.iter().map(|x| [2.0 * x[0], 2.0 * x[1], 2.0 * x[2]]).collect();
    let v1 = u2_field(a, &sample).unwrap();
    let v2 = u2_field(a, &doubled).unwrap();
    for (p, q) in v1.iter().zip(&v2) {
        assert!((q / p / 2f64.powf(1.0 - a) - 1.0).abs() < 0.02);
    }
}

#[test]
fn thin_gradient_law() {
    let a = -0.5;
    let g1 = u2_thin_gradient(a, 0.3).unwrap();
    let g2 = u2_thin_gradient(a, 0.6).unwrap();
    assert!((g2 / g1 - 2f64.powf(-a)).abs() < 1e-12);
    assert!((g1 - 8.0 * c_half() * 0.3f64.sqrt()).abs() < 1e-12);
    let fd = u2_axis_gradient_fd(a, 0.5, 1e-3).unwrap();
    let exact = u2_thin_gradient(a, 0.5).unwrap();
    assert!((fd.abs() / exact - 1.0).abs() < 0.03, "{fd} vs {exact}");
    assert!(u2_thin_gradient(a, 0.0).is_err());
}

#[test]
fn line_dipole_on_axis() {
    let a = -0.5;
    let c = c_half();
    let xs = [0.1, 0.35, 0.8];
    let right: Vec<Point> = xs.iter().map(|&x| [x, 0.0, 0.0]).collect();
    let left: Vec<Point> = xs.iter().map(|&x| [-x, 0.0, 0.0]).collect();
    let vr = line_dipole_field(a, &right).unwrap();
    let vl = line_dipole_field(a, &left).unwrap();
    for (k, &x) in xs.iter().enumerate() {
        assert!((vr[k] + vl[k]).abs() <= 1e-6 * vr[k].abs());
        // leading power plus the far-segment remainder
        let lead = 4.0 * c / -a * x.powf(-a);
        let rest = 2.0 * c / -a * ((1.0 - x).powf(-a) - (1.0 + x).powf(-a));
        assert!((vr[k] - lead - rest).abs() <= 1e-6 * vr[k].abs());
    }
    // rescaling by degree −a leaves only the leading power
    let rho = 1e-4;
    let v = line_dipole_field(a, &[[rho * 0.5, 0.0, 0.0]]).unwrap()[0] / rho.powf(-a);
    let lead = 4.0 * c / -a * 0.5f64.powf(-a);
    assert!((v / lead - 1.0).abs() < 0.02);
}

#[test]
fn test_function_values() {
    let a = -0.5;
    let c = c_half();
    let mid = segment_test_function(a, &[[0.5, 0.0, 0.0]]).unwrap()[0];
    assert!((mid - 2.0 * 2f64.sqrt() * c).abs() < 1e-6);
    assert!((test_function_on_axis(a, 0.5) * c - mid).abs() < 1e-12);

    let xs = [0.05, 0.2, 0.37];
    for x in xs {
        let v = segment_test_function(a, &[[x, 0.0, 0.0], [1.0 - x, 0.0, 0.0]]).unwrap();
        assert!((v[0] - v[1]).abs() <= 1e-6 * v[0]);
    }
    let pts: Vec<Point> = (0..50)
        .map(|k| {
            let t = k as f64 * 0.37;
            [3.0 * t.sin(), 2.0 * (1.3 * t).cos(), (0.7 * t).sin().abs() * 2.0]
        })
        .collect();
    assert!(segment_test_function(a, &pts).unwrap().iter().all(|v| *v > 0.0));
}

#[test]
fn kernel_fields_solve_the_extension_equation() {
    let a = -0.5;
    let h = 1e-2;
    let c = c_half();
    let quad = KernelSpec::quadrant(a, 1.0, c);
    let seg = KernelSpec::segment_positive(a, c);
    let dip = KernelSpec::line_dipole(a, c);
    for x in [[0.3, 0.2, 0.3], [-0.5, 0.4, 0.6], [1.2, -0.3, 0.2]] {
        for spec in [&quad, &seg, &dip] {
            let r = extension_residual(a, |p| Ok(riesz_potential(spec, &[*p])?[0]), &x, h).unwrap();
            assert!(r < 1e-5, "{:?} at {x:?}: {r}", spec.density);
        }
    }
}

/// `∫_0^U cosh^{−2−a} u du` by composite Gauss–Legendre; the integrand decays
/// like `e^{−(2+a)u}`, so the range is cut where it is negligible.
fn cosh_power_integral(a: f64, upper: f64) -> f64 {
    let s = upper.signum();
    let u = upper.abs().min(60.0);
    let panels = (u.ceil() as usize).max(1);
    let mut total = 0.0;
    for k in 0..panels {
        let lo = u * k as f64 / panels as f64;
        let hi = u * (k + 1) as f64 / panels as f64;
        for (t, w) in gauss_legendre_on(12, lo, hi) {
            total += w * t.cosh().powf(-2.0 - a);
        }
    }
    s * total
}

/// `|∇(w/c)|²` at `(x_1, ρ)` for the unit-segment potential.
fn test_gradient_sq(a: f64, x1: f64, rho: f64) -> f64 {
    let k = |s: f64| (s * s + rho * rho).powf(-(1.0 + a) / 2.0);
    let d1 = k(x1) - k(x1 - 1.0);
    let inner = cosh_power_integral(a, (x1 / rho).asinh()) - cosh_power_integral(a, ((x1 - 1.0) / rho).asinh());
    let drho = -(1.0 + a) * rho.powf(-1.0 - a) * inner;
    d1 * d1 + drho * drho
}

#[test]
fn test_function_energy_equals_trace_integral() {
    // Axisymmetric reduction about the x_1-axis:
    // ∫|∇w|² x_3^a = B(1/2, (1+a)/2) ∫∫ |∇w|² ρ^{1+a} dρ dx_1, evaluated in
    // polar coordinates (R, φ) about the segment midpoint, graded towards the
    // segment (φ → 0) and its endpoints (R → 1/2), with the point-charge
    // tail 2πc² R^{−1−a} added beyond the last shell.
    let a = -0.5;
    let c = c_half();
    let integrand = |r: f64, phi: f64| {
        let x1 = 0.5 + r * phi.cos();
        let rho = r * phi.sin();
        test_gradient_sq(a, x1, rho) * rho.powf(1.0 + a) * r
    };
    let angular = |r: f64| {
        // φ = (π/2) s⁴ on [0, π/2]; the profile is symmetric about π/2
        let mut acc = 0.0;
        for (s, w) in gauss_legendre_on(40, 0.0, 1.0) {
            let phi = 0.5 * PI * s.powi(4);
            acc += w * integrand(r, phi) * 2.0 * PI * s.powi(3);
        }
        2.0 * acc
    };
    let mut total = 0.0;
    let n = 48;
    for (t, w) in gauss_legendre_on(n, 0.0, 1.0) {
        // R = (1 − t³)/2 on (0, 1/2)
        let r = 0.5 * (1.0 - t.powi(3));
        total += w * angular(r) * 1.5 * t * t;
        // R = 1/2 + t³ on (1/2, 3/2)
        let r = 0.5 + t.powi(3);
        total += w * angular(r) * 3.0 * t * t;
    }
    let r_max: f64 = 1.0e4;
    let span = (r_max / 1.5).ln();
    for (v, w) in gauss_legendre_on(n, 0.0, span) {
        let r = 1.5 * v.exp();
        total += w * angular(r) * r;
    }
    let bulk = c * c * beta(0.5, (1.0 + a) / 2.0) * total + 2.0 * PI * c * c * r_max.powf(-1.0 - a);
    let trace = 2.0 * c / (-a * (1.0 - a));
    assert!((bulk / trace - 1.0).abs() < 0.02, "{bulk} vs {trace}");
}

#[test]
fn quadrant_sector_solution_blows_up_to_the_same_profile() {
    // The amplitude converges slowly at desk resolution, so compare the
    // angular profiles after normalizing both at θ = π/4.
    let a = -0.5;
    let p = Params::symmetric(a).unwrap();
    let sector = sector_positive_minimizer(&p, 2, 64).unwrap().field;
    let u = reflect_sector_solution(&sector, 2).unwrap();
    let r = 0.125;
    let thetas = [0.3, 0.785, 1.2, 2.0, 3.6, 5.5];
    let disc: Vec<f64> = thetas.iter().map(|&t| u.interpolate(&polar(r, t, 0.0)).unwrap()).collect();
    let pts: Vec<Point> = thetas.iter().map(|&t| polar(1.0, t, 0.0)).collect();
    let exact = u2_field(a, &pts).unwrap();
    for k in 0..thetas.len() {
        let lhs = disc[k] / disc[1];
        let rhs = exact[k] / exact[1];
        assert!((lhs / rhs - 1.0).abs() < 0.05, "θ = {}: {lhs} vs {rhs}", thetas[k]);
    }
}
