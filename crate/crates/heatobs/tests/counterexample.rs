use std::f64::consts::PI;

use approx::assert_relative_eq;
use heatobs::counterexample::*;
use heatobs::flags::Flag;
use heatobs::grid::{make_grid, TorusGrid};
use heatobs::heat::{gaussian_solution_eval, propagate};
use heatobs::observability::{time_quadrature, QuadratureScheme};
use heatobs::sets::{rasterize, SetSpec};
use heatobs::weak_obs::WeightSpec;
use heatobs::Error;
use statrs::function::erf::erfc;

/// `∫ u_k(T)²` over the cells whose centers lie in `B_{r'}`, from the error function.
fn den_oracle(grid: &TorusGrid, t: f64, r_outer: f64, k: f64) -> f64 {
    let mask = rasterize(&SetSpec::centered_ball(1, r_outer), grid).unwrap();
    let inside: Vec<f64> = (0..grid.len()).filter(|&j| mask.flags()[j]).map(|j| grid.coord(j)).collect();
    let h = grid.spacing();
    let lo = inside.iter().cloned().fold(f64::INFINITY, f64::min) - 0.5 * h;
    let hi = inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.5 * h;
    // u² = (4π(T+1))^{-1} e^{-(x-k)²/(2(T+1))}; both ends lie left of k, so erfc avoids cancellation.
    let s = (2.0 * (t + 1.0)).sqrt();
    let gauss = 0.5 * PI.sqrt() * s * (erfc((k - hi) / s) - erfc((k - lo) / s));
    gauss / (4.0 * PI * (t + 1.0))
}

#[test]
fn family_values() {
    for n in [1, 2, 3] {
        let fam = TranslatedGaussianFamily::new(n, 7.0);
        let mut x = vec![0.0; n];
        x[0] = 7.0;
        assert_relative_eq!(translated_gaussian_eval(&fam, 0.0, &x).unwrap(), (4.0 * PI).powf(-0.5 * n as f64), max_relative = 1e-15);
        assert_eq!(translated_gaussian_eval(&fam, 0.3, &x).unwrap(), gaussian_solution_eval(&fam.spec(), 0.3, &x).unwrap());
    }
    let g = make_grid(1, 60.0, 2048).unwrap();
    let a = TranslatedGaussianFamily::new(1, 2.0).sample(&g, 0.0).unwrap().norm_sq();
    let b = TranslatedGaussianFamily::new(1, 9.0).sample(&g, 0.0).unwrap().norm_sq();
    assert_relative_eq!(a, b, max_relative = 1e-12);
    assert!(translated_gaussian_eval(&TranslatedGaussianFamily::new(1, 1.0), -1.0, &[0.0]).is_err());
}

#[test]
fn family_solves_heat_equation() {
    let g = make_grid(1, 60.0, 2048).unwrap();
    let fam = TranslatedGaussianFamily::new(1, 5.0);
    let u0 = fam.sample(&g, 0.0).unwrap();
    for t in [0.5, 2.0] {
        let num = propagate(&u0, t).unwrap();
        let exact = fam.sample(&g, t).unwrap();
        let worst = num.values().iter().zip(exact.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-8);
    }
}

#[test]
fn closed_form_bound() {
    assert_relative_eq!(
        ratio_bound_closed_form(1, 1.0, 1.0, 2.0, 10.0).unwrap(),
        3.0 * (-53.0f64 / 36.0).exp(),
        max_relative = 1e-15
    );
    let mut last = f64::INFINITY;
    for k in [5.0, 10.0, 50.0, 1000.0] {
        let b = ratio_bound_closed_form(2, 1.0, 1.0, 2.0, k).unwrap();
        assert!(b < last);
        last = b;
    }
    assert!(last < 1e-30);
    assert!(matches!(ratio_bound_closed_form(1, 1.0, 2.0, 2.0, 10.0), Err(Error::InvalidRadii(_))));
    assert!(matches!(ratio_bound_closed_form(1, 1.0, 1.0, 2.0, 3.0), Err(Error::BoundNotApplicable(_))));
    assert_relative_eq!(bound_threshold(1, 1.0, 1.0, 2.0), 3.0, max_relative = 1e-15);
}

#[test]
fn ratio_at_reference_resolution() {
    let g = make_grid(1, 80.0, 8192).unwrap();
    let q = time_quadrature(1.0, QuadratureScheme::Trapezoid, 64).unwrap();
    let r = ratio_numeric(1, 1.0, 1.0, 2.0, 10.0, &g, &q).unwrap();
    assert!(r.ratio <= ratio_bound_closed_form(1, 1.0, 1.0, 2.0, 10.0).unwrap());
    assert!(r.ratio <= 0.68859);
    assert!(r.den > 0.0);
    assert!(r.flags.is_clean());
    // On B_r the family increases in time, so the integrand is at most (4π(T+1))^{-n}.
    assert!(r.num <= 2.0 / (8.0 * PI));
    assert!((r.den - den_oracle(&g, 1.0, 2.0, 10.0)).abs() <= 1e-3 * r.den);
}

#[test]
fn den_matches_oracle_across_k() {
    let q = time_quadrature(1.0, QuadratureScheme::Trapezoid, 16).unwrap();
    for k in [5.0, 12.0, 20.0] {
        let g = counterexample_grid(1, k, 100).unwrap();
        let r = ratio_numeric(1, 1.0, 1.0, 2.0, k, &g, &q).unwrap();
        let want = den_oracle(&g, 1.0, 2.0, k);
        assert!((r.den - want).abs() <= 1e-3 * want, "k = {k}: {} vs {want}", r.den);
    }
}

#[test]
fn ratio_decays_and_stays_below_bound() {
    let q = time_quadrature(1.0, QuadratureScheme::Trapezoid, 32).unwrap();
    let mut ratios = Vec::new();
    for k in [5.0, 8.0, 12.0, 16.0, 20.0] {
        let g = counterexample_grid(1, k, 100).unwrap();
        let r = ratio_numeric(1, 1.0, 1.0, 2.0, k, &g, &q).unwrap();
        assert!(r.ratio < ratio_bound_closed_form(1, 1.0, 1.0, 2.0, k).unwrap(), "k = {k}");
        ratios.push(r.ratio);
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]));
    assert!(ratios[4] < 1e-3 * ratios[0]);
}

#[test]
fn ratio_in_two_dimensions() {
    let q = time_quadrature(1.0, QuadratureScheme::Trapezoid, 16).unwrap();
    let g = counterexample_grid(2, 6.0, 8).unwrap();
    let r = ratio_numeric(2, 1.0, 1.0, 2.0, 6.0, &g, &q).unwrap();
    assert!(r.ratio <= ratio_bound_closed_form(2, 1.0, 1.0, 2.0, 6.0).unwrap());
}

#[test]
fn ratio_errors() {
    let q = time_quadrature(1.0, QuadratureScheme::Trapezoid, 8).unwrap();
    let g = counterexample_grid(1, 10.0, 20).unwrap();
    assert!(matches!(ratio_numeric(1, 1.0, 1.0, 1.0, 10.0, &g, &q), Err(Error::InvalidRadii(_))));
    assert!(matches!(ratio_numeric(2, 1.0, 1.0, 2.0, 10.0, &g, &q), Err(Error::GridMismatch)));
    assert!(ratio_numeric(1, 2.0, 1.0, 2.0, 10.0, &g, &q).is_err());
}

#[test]
fn cramped_torus_is_flagged() {
    let q = time_quadrature(1.0, QuadratureScheme::Trapezoid, 8).unwrap();
    let g = make_grid(1, 24.0, 1024).unwrap();
    let r = ratio_numeric(1, 1.0, 1.0, 2.0, 10.0, &g, &q).unwrap();
    assert!(r.flags.contains(Flag::PeriodizationRisk));
}

#[test]
fn weighted_ratio_diverges() {
    let q = time_quadrature(1.0, QuadratureScheme::Trapezoid, 16).unwrap();
    for w in [WeightSpec::PolyDecay { nu: 2.0 }, WeightSpec::ExpDecay] {
        let value = |k: f64| {
            let g = counterexample_grid(1, k, 50).unwrap();
            weighted_failure_ratio(1, 1.0, 1.0, k, &w, &g, &q).unwrap().0
        };
        assert!(value(20.0) >= 1e3 * value(5.0), "{w:?}");
    }
}

#[test]
fn far_gaussian_examples() {
    assert_relative_eq!(far_gaussian_bound(1, 4.0), 0.053991, epsilon = 1e-6);
    assert_relative_eq!(far_gaussian_target(1), 0.1410474, epsilon = 1e-7);
    assert!(far_gaussian_bound(2, 40.0) < 1e-80);

    let g = make_grid(1, 60.0, 2048).unwrap();
    let q = time_quadrature(1.0, QuadratureScheme::Trapezoid, 32).unwrap();
    let d = far_gaussian_demo(&[3.0], 6.0, &g, &q, Some(2.0)).unwrap();
    assert!(d.obs_energy <= d.paper_bound);
    assert_relative_eq!(d.target_energy, d.target_closed_form, max_relative = 1e-10);
    assert_relative_eq!(d.measure_lower_bound.unwrap(), PI.sqrt() / 4.0, max_relative = 1e-15);
    assert!(far_gaussian_demo(&[3.0], 6.0, &g, &q, Some(-1.0)).is_err());
    assert!(far_gaussian_demo(&[3.0], 0.0, &g, &q, None).is_err());
    let q2 = time_quadrature(2.0, QuadratureScheme::Trapezoid, 8).unwrap();
    assert!(far_gaussian_demo(&[3.0], 6.0, &g, &q2, None).is_err());
}
