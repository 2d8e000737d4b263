use std::f64::consts::PI;
use std::sync::Arc;

use thinobs::functional::rescale;
use thinobs::radial::{almgren, blowup_sequence, homogeneity_deviation, s_t_profiles, weiss, Normalization};
use thinobs::solver::{minimize, solve_weighted_neumann, BoundaryData, SolveOptions};
use thinobs::{build_halfball_grid, Params, ScalarField, WeightedGrid};

fn half_ball(a: f64, dim: usize, res: usize) -> Arc<WeightedGrid> {
    Arc::new(build_halfball_grid(&Params::symmetric(a).unwrap(), dim, 1.0, res).unwrap())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// `r^k (0.4 + cos θ)` in the 2D half-plane, θ measured from the x_1-axis.
fn homogeneous(k: f64) -> impl Fn(&[f64; 3]) -> f64 {
    move |x| {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            0.0
        } else {
            r.powf(k) * (0.4 + x[0] / r)
        }
    }
}

#[test]
fn weiss_is_flat_for_homogeneous_fields() {
    let a = -0.5;
    let g = half_ball(a, 2, 256);
    let p = Params::one_phase(a).unwrap();
    let u = ScalarField::from_fn(g, homogeneous(1.0 - a)).unwrap();
    let w = weiss(&u, &p, &[0.0; 3], &linspace(0.2, 0.9, 8)).unwrap();
    let mean = w.values.iter().sum::<f64>() / w.values.len() as f64;
    assert!(w.range() <= 0.01 * mean.abs(), "{:?}", w.values);
}

#[test]
fn weiss_nondecreasing_on_minimizer() {
    let a = -0.5;
    let g = half_ball(a, 2, 128);
    let p = Params::one_phase(a).unwrap();
    let b = BoundaryData::from_fn(&g, |x| x[0] + 0.2).unwrap();
    let u = minimize(&g, &p, &b, &SolveOptions::default()).unwrap().field;
    let w = weiss(&u, &p, &[0.0; 3], &linspace(0.1, 0.6, 20)).unwrap();
    assert!(w.max_decrease() <= 1e-3 * w.range().max(1e-12), "{:?}", w.values);
}

#[test]
fn frequency_of_linear_and_quadratic_fields() {
    let g = half_ball(0.0, 2, 256);
    let radii = linspace(0.3, 0.8, 5);
    let lin = ScalarField::from_fn(g.clone(), |x| x[0]).unwrap();
    let n1 = almgren(&lin, &[0.0; 3], &radii).unwrap();
    assert!(n1.values.iter().all(|v| (v - 1.0).abs() < 1e-3), "{:?}", n1.values);

    let quad = ScalarField::from_fn(g, |x| x[0] * x[0] - x[1] * x[1]).unwrap();
    let n2 = almgren(&quad, &[0.0; 3], &radii).unwrap();
    assert!(n2.values.iter().all(|v| (v - 2.0).abs() < 1e-3), "{:?}", n2.values);

    // constant frequency ⇒ homogeneous of the rounded degree
    for (u, n) in [(&lin, &n1), (&quad, &n2)] {
        let degree = n.values[0].round();
        assert!(homogeneity_deviation(u, degree) <= 0.02);
    }
}

#[test]
fn frequency_monotone_for_harmonic_solve() {
    let g = half_ball(0.0, 2, 128);
    let b = BoundaryData::from_fn(&g, |x| x[0].powi(3)).unwrap();
    let u = solve_weighted_neumann(&g, &vec![0.0; g.thin_nodes().len()], &b).unwrap();
    let n = almgren(&u, &[0.0; 3], &linspace(0.1, 0.9, 12)).unwrap();
    assert!(n.max_decrease() <= 1e-6, "{:?}", n.values);
}

#[test]
fn frequency_rejects_weighted_problems() {
    let g = half_ball(-0.5, 2, 16);
    let u = ScalarField::from_fn(g, |x| x[0]).unwrap();
    assert!(almgren(&u, &[0.0; 3], &[0.5]).is_err());
}

#[test]
fn s_and_t_of_model_fields() {
    let g = half_ball(0.0, 2, 128);
    let c = 0.7;
    let constant = ScalarField::from_fn(g.clone(), |_| c).unwrap();
    let (s, t) = s_t_profiles(&constant, &[0.0; 3], &[0.25, 0.5]).unwrap();
    let want = c * (2.0 * PI).sqrt();
    assert!(s.values.iter().all(|v| (v / want - 1.0).abs() < 1e-6));
    assert!(t.values.iter().all(|v| *v == 0.0));

    let lin = ScalarField::from_fn(g, |x| x[0]).unwrap();
    let (_, t) = s_t_profiles(&lin, &[0.0; 3], &[0.2, 0.4]).unwrap();
    assert!((t.values[1] / t.values[0] - 2.0).abs() < 0.02);
    // T(r) = r^{-1} ∫_{-r}^0 |x| dx = r/2
    assert!((t.values[0] - 0.1).abs() < 1e-3);
}

#[test]
fn s_scales_under_rescaling() {
    let a = -0.5;
    let g = half_ball(a, 2, 256);
    let u = ScalarField::from_fn(g, |x| x[0] + x[0] * x[0] - 0.3 * x[1]).unwrap();
    let rho = 0.5;
    let v = rescale(&u, &[0.0; 3], rho, 0.0).unwrap();
    let (su, _) = s_t_profiles(&u, &[0.0; 3], &[0.2]).unwrap();
    let (sv, _) = s_t_profiles(&v, &[0.0; 3], &[0.4]).unwrap();
    // S_v(r) = S_u(ρr) for v(x) = u(ρx); dividing by ρ^{1−a} divides S too
    assert!((sv.values[0] / su.values[0] - 1.0).abs() < 0.02);
    let w = rescale(&u, &[0.0; 3], rho, 1.0 - a).unwrap();
    let (sw, _) = s_t_profiles(&w, &[0.0; 3], &[0.4]).unwrap();
    assert!((sw.values[0] * rho.powf(1.0 - a) / su.values[0] - 1.0).abs() < 0.02);
}

#[test]
fn blowups_of_homogeneous_field_agree() {
    let a = -0.5;
    let g = half_ball(a, 2, 128);
    let u = ScalarField::from_fn(g, homogeneous(1.0 - a)).unwrap();
    let seq = blowup_sequence(&u, &[0.0; 3], &[0.8, 0.4, 0.2], Normalization::Power2s).unwrap();
    let scale = u.max_abs();
    for pair in seq.windows(2) {
        let d = pair[0]
            .values()
            .iter()
            .zip(pair[1].values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(d <= 0.01 * scale, "{d}");
    }
}

#[test]
fn blowups_by_s_are_normalized() {
    let a = -0.5;
    let g = half_ball(a, 2, 128);
    let u = ScalarField::from_fn(g, |x| x[0] + 0.5 * x[0] * x[0] - x[1]).unwrap();
    let seq = blowup_sequence(&u, &[0.0; 3], &[0.8, 0.4, 0.2], Normalization::ByS).unwrap();
    for v in &seq {
        let (s, _) = s_t_profiles(v, &[0.0; 3], &[1.0]).unwrap();
        assert!((s.values[0] - 1.0).abs() < 0.01, "{}", s.values[0]);
    }
}

#[test]
fn blowup_center_must_be_free_boundary() {
    let g = half_ball(-0.5, 2, 32);
    let u = ScalarField::from_fn(g, |x| x[0] + 1.0).unwrap();
    assert!(blowup_sequence(&u, &[0.0; 3], &[0.5], Normalization::Power2s).is_err());
}

#[test]
fn homogeneity_deviation_examples() {
    let a = -0.5;
    let g = half_ball(a, 2, 128);
    let normal = ScalarField::from_fn(g.clone(), |x| x[1].powf(1.0 - a)).unwrap();
    assert!(homogeneity_deviation(&normal, 1.0 - a) < 0.01);
    let lin = ScalarField::from_fn(g.clone(), |x| x[0]).unwrap();
    assert!(homogeneity_deviation(&lin, 1.0) < 1e-10);
    let shifted = ScalarField::from_fn(g, |x| x[0] + 1.0).unwrap();
    // along the positive x_1-axis the ratio is (1 − t)/(1 + x_1), which is
    // about 0.51 on the innermost shell with t = 1/4
    assert!(homogeneity_deviation(&shifted, 1.0) >= 0.4);
}
