use std::sync::Arc;

use thinobs::special::beta;
use thinobs::stability::{
    beta_margin, certificate_factor, energy_second_difference, ray_truncated_terms, second_variation_form,
    u2_instability_certificate, u2_truncated_terms, ui_instability_check, Verdict,
};
use thinobs::{build_halfball_grid, Params, ScalarField};

fn bump(x: &[f64; 3], r: f64) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    (r * r - r2).max(0.0).powi(2)
}

#[test]
fn planar_interface_in_three_dimensions() {
    let a = -0.5;
    let p = Params::symmetric(a).unwrap();
    let g = Arc::new(build_halfball_grid(&p, 3, 1.0, 48).unwrap());
    let shift = 0.3 / 48.0;
    let u = ScalarField::from_fn(g.clone(), move |x| x[0] - shift).unwrap();

    let zero = ScalarField::zeros(g.clone());
    assert_eq!(second_variation_form(&u, &zero, &p).unwrap().form_value, 0.0);

    let far = ScalarField::from_fn(g.clone(), |x| bump(&[x[0] - 0.5, x[1], x[2]], 0.25)).unwrap();
    let r = second_variation_form(&u, &far, &p).unwrap();
    assert_eq!(r.boundary_term, 0.0);
    assert_eq!(r.verdict, Verdict::StableAtScale);

    // unit slope across the line x_1 = shift: boundary term 2∫ w² dx_2
    let w = ScalarField::from_fn(g.clone(), |x| bump(x, 0.8)).unwrap();
    let form = second_variation_form(&u, &w, &p).unwrap();
    let line = |x2: f64| bump(&[shift, x2, 0.0], 0.8).powi(2);
    let n = 4000;
    let reach = (0.64 - shift * shift).sqrt();
    let dx = 2.0 * reach / n as f64;
    let exact = 2.0 * (0..n).map(|k| line(-reach + (k as f64 + 0.5) * dx)).sum::<f64>() * dx;
    assert!((form.boundary_term / exact - 1.0).abs() < 0.01, "{} vs {exact}", form.boundary_term);

    for t in [0.2, 0.1] {
        let esd = energy_second_difference(&u, &w, &p, t).unwrap();
        assert!((esd - form.form_value).abs() <= 0.05 * form.form_value.abs(), "t = {t}: {esd} vs {form:?}");
    }
    let lifted = u.map(|_, v| v + 2.0).unwrap();
    let esd = energy_second_difference(&lifted, &w, &p, 1e-3).unwrap();
    assert!((esd - form.dirichlet_term).abs() <= 1e-6 * form.dirichlet_term);
}

#[test]
fn beta_margin_examples() {
    let half = beta_margin(-0.5).unwrap();
    assert!((half - 2.0 / 3.0).abs() < 1e-9);
    assert!(beta_margin(-1e-6).unwrap().abs() < 1e-4);
    assert!((beta_margin(-0.9).unwrap() - 8.20).abs() < 1e-2);
    let grid: Vec<f64> = (1..=98).map(|k| -0.01 * k as f64).collect();
    let margins: Vec<f64> = grid.iter().map(|&a| beta_margin(a).unwrap()).collect();
    assert!(margins.iter().all(|m| *m > 0.0));
    assert!(margins.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn certificate_for_the_quadrant_blowup() {
    for a in [-0.25, -0.5, -0.75] {
        let f = certificate_factor(a).unwrap();
        let want = beta(1.0 - a, 1.0) - beta(1.0 - 2.0 * a, 1.0 + a);
        assert!((f - want).abs() < 1e-12 && f < 0.0);
    }
    assert!((certificate_factor(-0.5).unwrap() + 2.0 / 3.0).abs() < 1e-9);
    let rep = u2_instability_certificate(-0.5, 64.0).unwrap();
    assert_eq!(rep.verdict, Verdict::Unstable);
    assert_eq!(rep.i, Some(2));
    let cert = rep.certificate.unwrap();
    assert!((cert.quadrature - cert.closed_form).abs() <= 1e-6 * cert.closed_form.abs());
}

#[test]
fn sign_of_the_form_is_scale_free() {
    let a = -0.5;
    for (len, radius) in [(1.0, 32.0), (2.0, 64.0), (4.0, 128.0)] {
        let (d, b) = u2_truncated_terms(a, len, radius).unwrap();
        assert!(d - b < 0.0, "L = {len}: {d} {b}");
        for rho in [0.5, 2.0] {
            let (ds, bs) = u2_truncated_terms(a, rho * len, rho * radius).unwrap();
            assert!(ds - bs < 0.0);
            // both terms pick up the same power of ρ
            assert!(((ds / bs) / (d / b) - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn sector_check_reduces_to_certificate_for_two_rays() {
    let a = -0.5;
    let via_check = ui_instability_check(2, a, 32).unwrap();
    let direct = u2_instability_certificate(a, 32.0).unwrap();
    assert_eq!(via_check.verdict, Verdict::Unstable);
    assert!((via_check.form_value - direct.form_value).abs() <= 1e-9 * direct.form_value.abs());
    let (d2, b2) = ray_truncated_terms(a, 2, 1.0, 32.0).unwrap();
    let (d3, b3) = ray_truncated_terms(a, 3, 1.0, 32.0).unwrap();
    assert_eq!(d2, d3);
    assert!(b3 > b2);
}

#[test]
fn three_ray_solution_is_unstable() {
    let rep = ui_instability_check(3, -0.5, 32).unwrap();
    assert_eq!(rep.i, Some(3));
    assert!(rep.domination_excess.unwrap() <= 0.0);
    assert!(rep.gradient_ratio.unwrap() <= 1.0);
    assert_eq!(rep.verdict, Verdict::Unstable);
}

#[test]
fn report_serializes() {
    let rep = u2_instability_certificate(-0.25, 32.0).unwrap();
    let json = rep.to_json().unwrap();
    let back: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(back["verdict"], "unstable");
    let mut buf = Vec::new();
    thinobs::stability::StabilityReport::write_summary_csv(&[rep], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
}
