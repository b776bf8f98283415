use std::f64::consts::PI;

use approx::assert_relative_eq;
use heatobs::grid::{integrate, make_grid, GridFunction, Integrand};
use heatobs::heat::*;
use heatobs::{Complex64, Error};
use proptest::prelude::*;

#[test]
fn kernel_has_unit_mass() {
    for (n, t) in [(1, 0.1), (1, 2.0), (2, 0.5)] {
        let g = make_grid(n, 40.0, if n == 1 { 1024 } else { 256 }).unwrap();
        let k = GridFunction::from_real_fn(&g, |x| heat_kernel_eval(n, t, x).unwrap());
        assert_relative_eq!(integrate(&k, None, Integrand::Values).unwrap(), 1.0, max_relative = 1e-12);
    }
}

#[test]
fn kernel_rejects_bad_time() {
    assert!(matches!(heat_kernel_eval(1, 0.0, &[0.0]), Err(Error::InvalidTime(_))));
    assert!(matches!(heat_kernel_eval(1, f64::NAN, &[0.0]), Err(Error::InvalidTime(_))));
}

#[test]
fn kernel_peak() {
    assert_relative_eq!(heat_kernel_eval(2, 1.0, &[0.0, 0.0]).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-15);
}

#[test]
fn propagation_matches_closed_form() {
    let g = make_grid(1, 60.0, 2048).unwrap();
    let spec = GaussianSolutionSpec::new(vec![3.0]);
    let u0 = spec.sample(&g, 0.0).unwrap();
    for t in [0.25, 1.0, 4.0] {
        let num = propagate(&u0, t).unwrap();
        let exact = spec.sample(&g, t).unwrap();
        assert!(num.sub(&exact).unwrap().norm_sq() <= 1e-26 * exact.norm_sq());
        for x in [-1.0, 3.0, 10.0] {
            let expected = (4.0 * PI * (t + 1.0)).powf(-0.5) * (-(x - 3.0f64).powi(2) / (4.0 * (t + 1.0))).exp();
            assert_relative_eq!(gaussian_solution_eval(&spec, t, &[x]).unwrap(), expected, max_relative = 1e-14);
        }
    }
}

#[test]
fn propagate_zero_time_is_identity() {
    let g = make_grid(1, 10.0, 64).unwrap();
    let u = GaussianSolutionSpec::centered(1).sample(&g, 0.0).unwrap();
    assert_eq!(propagate(&u, 0.0).unwrap(), u);
    assert!(matches!(propagate(&u, -1.0), Err(Error::InvalidTime(_))));
}

#[test]
fn energy_of_evolved_gaussian() {
    // ∫ v(t)² = (8π(t+1))^{-n/2}.
    let g = make_grid(2, 40.0, 256).unwrap();
    let u = GaussianSolutionSpec::centered(2).sample(&g, 2.0).unwrap();
    assert_relative_eq!(u.norm_sq(), 1.0 / (8.0 * PI * 3.0), max_relative = 1e-12);
}

#[test]
fn multiplier_table() {
    let g = make_grid(1, 2.0 * PI, 16).unwrap();
    let m = heat_multiplier(&g, 0.5);
    for (j, v) in m.iter().enumerate() {
        let k = g.wavenumber(j) as f64;
        assert_relative_eq!(*v, (-0.5 * k * k).exp(), max_relative = 1e-14);
    }
}

#[test]
fn dimension_mismatch() {
    let g = make_grid(2, 10.0, 16).unwrap();
    assert!(matches!(GaussianSolutionSpec::centered(1).sample(&g, 0.0), Err(Error::GridMismatch)));
}

fn random_u(vals: &[(f64, f64)]) -> GridFunction {
    let g = make_grid(1, 12.0, vals.len()).unwrap();
    GridFunction::new(g, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn semigroup(vals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64), s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let u = random_u(&vals);
        let a = propagate(&propagate(&u, s).unwrap(), t).unwrap();
        let b = propagate(&u, s + t).unwrap();
        prop_assert!(a.sub(&b).unwrap().norm_sq() <= 1e-26 * (1.0 + u.norm_sq()));
    }

    #[test]
    fn energy_nonincreasing(vals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64), s in 0.0f64..2.0, dt in 0.0f64..2.0) {
        let u = random_u(&vals);
        let early = propagate(&u, s).unwrap().norm_sq();
        let late = propagate(&u, s + dt).unwrap().norm_sq();
        prop_assert!(late <= early * (1.0 + 1e-13));
    }
}
