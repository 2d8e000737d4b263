use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thinobs::functional::{eval_energy, first_variation_residual, gauge_transform, rescale};
use thinobs::radial::{ball_dirichlet, thin_ball_integral};
use thinobs::solver::{minimize, BoundaryData, SolveOptions};
use thinobs::special::beta;
use thinobs::{build_halfball_grid, Params, ScalarField, WeightedGrid};

fn half_disk(a: f64, res: usize) -> Arc<WeightedGrid> {
    let p = Params::symmetric(a).unwrap();
    Arc::new(build_halfball_grid(&p, 2, 1.0, res).unwrap())
}

/// Smooth bump vanishing outside the disk of radius 0.9.
fn bump(x: &[f64; 3]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    (0.81 - r2).max(0.0).powi(3)
}

#[test]
fn zero_and_negative_constant() {
    let g = half_disk(-0.5, 64);
    let p = Params::symmetric(-0.5).unwrap();
    let e = eval_energy(&ScalarField::zeros(g.clone()), &p).unwrap();
    assert_eq!((e.dirichlet, e.thin, e.total), (0.0, 0.0, 0.0));

    let minus_one = ScalarField::from_fn(g, |_| -1.0).unwrap();
    let e = eval_energy(&minus_one, &p).unwrap();
    assert_eq!(e.dirichlet, 0.0);
    assert!((e.thin / -4.0 - 1.0).abs() < 0.01, "{}", e.thin);
}

#[test]
fn pure_power_dirichlet_matches_beta_closed_form() {
    // |∇(x_2^{3/2}/(3/2))|² x_2^{-1/2} = x_2^{1/2}; over the half-disk this is
    // ∫_0^1 t^{1/2} 2√(1−t²) dt = B(3/4, 3/2).
    let a = -0.5;
    let g = half_disk(a, 128);
    let p = Params::symmetric(a).unwrap();
    let u = ScalarField::from_fn(g, |x| x[1].powf(1.0 - a) / (1.0 - a)).unwrap();
    let e = eval_energy(&u, &p).unwrap();
    let exact = beta(0.75, 1.5);
    assert!(e.thin.abs() < 1e-14);
    assert!((e.dirichlet / exact - 1.0).abs() < 0.02, "{} vs {exact}", e.dirichlet);
}

#[test]
fn gauge_examples() {
    let g = half_disk(-0.5, 32);
    let p = Params::symmetric(-0.5).unwrap();
    let u = ScalarField::from_fn(g.clone(), |x| x[0] + 0.3 * x[1]).unwrap();
    let (v, q) = gauge_transform(&u, &p, 0.0).unwrap();
    assert_eq!(v.values(), u.values());
    assert_eq!(q, p);

    let a = -0.999999;
    let g = half_disk(a, 16);
    let p = Params::symmetric(a).unwrap();
    let u = ScalarField::zeros(g);
    let (_, q) = gauge_transform(&u, &p, 0.5).unwrap();
    assert!(q.lambda_plus().abs() < 1e-6, "{}", q.lambda_plus());
    assert!((q.lambda_minus() - 2.0).abs() < 1e-6);

    // outside the admissible window
    assert!(gauge_transform(&u, &p, 0.6).is_err());
}

#[test]
fn gauge_shift_depends_only_on_boundary_values() {
    let a = -0.5;
    let g = half_disk(a, 48);
    let p = Params::symmetric(a).unwrap();
    let base = |x: &[f64; 3]| x[0] + 0.2;
    let v1 = ScalarField::from_fn(g.clone(), base).unwrap();
    let v2 = ScalarField::from_fn(g.clone(), |x| base(x) + 0.7 * bump(x) * (3.0 * x[0]).sin()).unwrap();
    let shift = |v: &ScalarField| {
        let (w, q) = gauge_transform(v, &p, 0.25).unwrap();
        eval_energy(&w, &q).unwrap().total - eval_energy(v, &p).unwrap().total
    };
    let d = shift(&v1) - shift(&v2);
    assert!(d.abs() < 1e-10, "{d}");
}

#[test]
fn constant_flux_profile_residual_is_thin_integral() {
    let a = -0.5;
    let g = half_disk(a, 64);
    let p = Params::one_phase(a).unwrap();
    let u = ScalarField::from_fn(g.clone(), |x| x[1].powf(1.0 - a) / (1.0 - a)).unwrap();
    let psi = ScalarField::from_fn(g.clone(), bump).unwrap();
    let res = first_variation_residual(&u, &psi, &p).unwrap();
    let thin = g.thin_quadrature(bump).unwrap();
    // x_n^a ∂_n u ≡ 1, so integration by parts leaves −∫_thin ψ.
    assert!((res / -thin - 1.0).abs() < 0.02, "{res} vs {thin}");

    let zero = ScalarField::zeros(g);
    assert_eq!(first_variation_residual(&u, &zero, &p).unwrap(), 0.0);
}

#[test]
fn minimizer_has_vanishing_first_variation() {
    let a = -0.5;
    let g = half_disk(a, 64);
    let p = Params::symmetric(a).unwrap();
    let b = BoundaryData::from_fn(&g, |x| x[0] + 0.2).unwrap();
    let sol = minimize(&g, &p, &b, &SolveOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (c0, c1, c2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let test = ScalarField::from_fn(g.clone(), |x| {
            bump(x) * (c0 + (c1 * x[0]).sin() + (c2 * x[1]).cos())
        })
        .unwrap();
        let r = first_variation_residual(&sol.field, &test, &p).unwrap();
        assert!(r.abs() <= 1e-6 * test.max_abs(), "{r}");
    }
}

#[test]
fn rescale_identity_and_homogeneity() {
    let a = -0.5;
    let g = half_disk(a, 64);
    let u = ScalarField::from_fn(g.clone(), |x| x[0] * x[0] - x[1]).unwrap();
    let same = rescale(&u, &[0.0; 3], 1.0, 2.7).unwrap();
    for (x, y) in u.values().iter().zip(same.values()) {
        assert!((x - y).abs() <= 1e-12);
    }

    let k = 1.0 - a;
    let hom = ScalarField::from_fn(g, |x| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        r.powf(k) * (0.3 + x[0] / r.max(1e-300))
    })
    .unwrap();
    let v = rescale(&hom, &[0.0; 3], 0.5, k).unwrap();
    let err = v
        .values()
        .iter()
        .zip(hom.values())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.01, "{err}");
}

#[test]
fn rescaled_energy_scales_by_power() {
    let a = -0.5;
    let n = 2.0;
    let r = 0.5;
    let g = half_disk(a, 128);
    let p = Params::symmetric(a).unwrap();
    let u = ScalarField::from_fn(g, |x| x[0] + x[0] * x[1] + 0.5 * x[1].powf(1.0 - a) - 0.1).unwrap();
    let v = rescale(&u, &[0.0; 3], r, 1.0 - a).unwrap();
    let lhs = eval_energy(&v, &p).unwrap().total;
    let c = [0.0; 3];
    let on_ball = ball_dirichlet(&u, &c, r) - 2.0 * thin_ball_integral(&u, &c, r, |t| t.abs());
    let rhs = r.powf(a - n) * on_ball;
    assert!((lhs / rhs - 1.0).abs() < 0.02, "{lhs} vs {rhs}");
}
