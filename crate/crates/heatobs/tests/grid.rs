use approx::assert_relative_eq;
use heatobs::flags::Flag;
use heatobs::grid::*;
use heatobs::{Complex64, Error};
use proptest::prelude::*;

fn gaussian(grid: &TorusGrid, center: f64) -> GridFunction {
    GridFunction::from_real_fn(grid, |x| (-0.5 * x.iter().map(|v| (v - center).powi(2)).sum::<f64>()).exp())
}

#[test]
fn rejects_bad_grids() {
    assert!(matches!(make_grid(0, 1.0, 8), Err(Error::InvalidGrid(_))));
    assert!(matches!(make_grid(1, -1.0, 8), Err(Error::InvalidGrid(_))));
    assert!(matches!(make_grid(1, 1.0, 7), Err(Error::InvalidGrid(_))));
    assert!(matches!(make_grid(1, 1.0, 2), Err(Error::InvalidGrid(_))));
}

#[test]
fn coordinates_start_at_minus_half_side() {
    let g = make_grid(1, 10.0, 20).unwrap();
    assert_eq!(g.coord(0), -5.0);
    assert_eq!(g.coord(10), 0.0);
    assert_eq!(g.spacing(), 0.5);
}

#[test]
fn forward_of_gaussian_is_gaussian() {
    // With the unitary continuous convention e^{-|x|²/2} is its own transform.
    let g = make_grid(2, 30.0, 128).unwrap();
    let s = forward(&gaussian(&g, 0.0)).unwrap();
    for k in [[0i64, 0], [1, 0], [3, -2], [-5, 7]] {
        let xi2: f64 = k.iter().map(|&v| (v as f64 * g.frequency_step()).powi(2)).sum();
        let c = s.at(&k);
        assert!((c.re - (-0.5 * xi2).exp()).abs() < 1e-12, "k = {k:?}: {c}");
        assert!(c.im.abs() < 1e-12);
    }
}

#[test]
fn translation_is_a_phase() {
    let g = make_grid(1, 40.0, 256).unwrap();
    let a = forward(&gaussian(&g, 0.0)).unwrap();
    let b = forward(&gaussian(&g, 2.0)).unwrap();
    for j in 0..g.len() {
        let ph = Complex64::new(0.0, -2.0 * g.frequency(j)).exp();
        assert!((b.coeffs()[j] - a.coeffs()[j] * ph).norm() < 1e-12);
    }
}

#[test]
fn transform_enum_dispatch() {
    let g = make_grid(1, 10.0, 32).unwrap();
    let f = gaussian(&g, 0.0);
    let Transformed::Spectrum(s) = transform(&Transformed::Samples(f.clone()), Direction::Forward).unwrap() else {
        panic!("forward must give a spectrum");
    };
    let Transformed::Samples(back) = transform(&Transformed::Spectrum(s), Direction::Inverse).unwrap() else {
        panic!("inverse must give samples");
    };
    assert!(back.sub(&f).unwrap().norm_sq() < 1e-28);
}

#[test]
fn derivative_of_plane_wave() {
    let g = make_grid(1, 2.0 * std::f64::consts::PI, 64).unwrap();
    let f = GridFunction::from_fn(&g, |x| Complex64::new(0.0, 3.0 * x[0]).exp());
    let d = spectral_derivative(&f, &[2]).unwrap();
    for (a, b) in d.values().iter().zip(f.values()) {
        assert!((a + b * 9.0).norm() < 1e-10);
    }
    let d3 = spectral_derivative(&f, &[3]).unwrap();
    for (a, b) in d3.values().iter().zip(f.values()) {
        assert!((a - b * Complex64::new(0.0, -27.0)).norm() < 1e-9);
    }
}

#[test]
fn derivative_of_gaussian_matches_closed_form() {
    let g = make_grid(1, 40.0, 512).unwrap();
    let f = gaussian(&g, 0.0);
    let d = spectral_derivative(&f, &[1]).unwrap();
    for (j, v) in d.values().iter().enumerate() {
        let x = g.coord(j);
        assert!((v.re + x * (-0.5 * x * x).exp()).abs() < 1e-11);
    }
}

#[test]
fn derivative_order_limits() {
    let g = make_grid(1, 10.0, 32).unwrap();
    let f = gaussian(&g, 0.0);
    assert!(matches!(spectral_derivative(&f, &[7]), Err(Error::OrderTooHigh { order: 7, max: 6 })));
    assert!(spectral_derivative(&f, &[6]).is_ok());
    assert!(matches!(spectral_derivative_with_max(&f, &[4], 3), Err(Error::OrderTooHigh { .. })));
    assert!(spectral_derivative(&f, &[1, 1]).is_err());
}

#[test]
fn integrals() {
    let g = make_grid(2, 4.0, 16).unwrap();
    let one = GridFunction::from_real_fn(&g, |_| 1.0);
    assert_relative_eq!(integrate(&one, None, Integrand::Values).unwrap(), 16.0, max_relative = 1e-14);
    let f = gaussian(&make_grid(1, 40.0, 512).unwrap(), 0.0);
    let exact = std::f64::consts::PI.sqrt();
    assert_relative_eq!(integrate(&f, None, Integrand::SquaredModulus).unwrap(), exact, max_relative = 1e-12);
}

#[test]
fn tail_monitor() {
    let g = make_grid(1, 40.0, 512).unwrap();
    assert!(tail_flags(&gaussian(&g, 0.0), TAIL_THRESHOLD).is_clean());
    let near_edge = gaussian(&g, 17.0);
    assert!(tail_flags(&near_edge, TAIL_THRESHOLD).contains(Flag::PeriodizationRisk));
    assert_eq!(tail_fraction(&GridFunction::zeros(&g)), 0.0);
}

#[test]
fn rejects_non_finite() {
    let g = make_grid(1, 10.0, 8).unwrap();
    let mut v = vec![Complex64::new(1.0, 0.0); 8];
    v[3] = Complex64::new(f64::NAN, 0.0);
    let f = GridFunction::new(g.clone(), v).unwrap();
    assert!(matches!(f.check_finite(), Err(Error::NonFiniteInput(3))));
    assert!(matches!(forward(&f), Err(Error::NonFiniteInput(3))));
    assert!(GridFunction::new(g, vec![Complex64::new(0.0, 0.0); 5]).is_err());
}

#[test]
fn mismatched_grids() {
    let a = GridFunction::zeros(&make_grid(1, 10.0, 8).unwrap());
    let b = GridFunction::zeros(&make_grid(1, 12.0, 8).unwrap());
    assert!(matches!(a.sub(&b), Err(Error::GridMismatch)));
}

fn random_values(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parseval_and_roundtrip(vals in random_values(16 * 16), side in 1.0f64..50.0) {
        let g = make_grid(2, side, 16).unwrap();
        let f = GridFunction::new(g, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap();
        let s = forward(&f).unwrap();
        prop_assert!((s.energy() - f.norm_sq()).abs() <= 1e-12 * f.norm_sq());
        let back = inverse(&s).unwrap();
        prop_assert!(back.sub(&f).unwrap().norm_sq() <= 1e-24 * f.norm_sq());
    }

    #[test]
    fn index_roundtrip(n in 1usize..4, half in 2usize..6, pick in 0usize..10_000) {
        let g = make_grid(n, 3.0, 2 * half).unwrap();
        let flat = pick % g.len();
        let mut idx = vec![0; n];
        g.multi_index(flat, &mut idx);
        prop_assert_eq!(g.flat_index(&idx), flat);
        prop_assert!(idx.iter().all(|&i| i < 2 * half));
    }

    #[test]
    fn wavenumbers_cover_fft_range(half in 2usize..64) {
        let g = make_grid(1, 1.0, 2 * half).unwrap();
        let ks: Vec<i64> = (0..g.len()).map(|j| g.wavenumber(j)).collect();
        prop_assert_eq!(ks[0], 0);
        prop_assert_eq!(*ks.iter().min().unwrap(), -(half as i64));
        prop_assert_eq!(*ks.iter().max().unwrap(), half as i64 - 1);
    }

    #[test]
    fn multiplier_is_linear(a in random_values(32), b in random_values(32), s in -3.0f64..3.0) {
        let g = make_grid(1, 7.0, 32).unwrap();
        let fa = GridFunction::new(g.clone(), a.iter().map(|&(x, y)| Complex64::new(x, y)).collect()).unwrap();
        let fb = GridFunction::new(g.clone(), b.iter().map(|&(x, y)| Complex64::new(x, y)).collect()).unwrap();
        let mult = |j: usize| Complex64::new((-g.xi_sq(j)).exp(), g.frequency(j));
        let lhs = apply_multiplier(&fa.add(&fb.scaled(s)).unwrap(), mult).unwrap();
        let rhs = apply_multiplier(&fa, mult).unwrap().add(&apply_multiplier(&fb, mult).unwrap().scaled(s)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().norm_sq() <= 1e-24 * (1.0 + rhs.norm_sq()));
    }
}
