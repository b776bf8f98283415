use approx::assert_relative_eq;
use heatobs::constants::*;
use heatobs::flags::Flag;
use heatobs::Error;
use proptest::prelude::*;

fn ln_c_obs_b(gamma: f64, l: f64, t: f64, c: f64) -> f64 {
    let log_term = 1.0 + (1.0 / gamma).ln();
    300.0 * (1.0 + c) * (1.0 + l) * (1.0 + l) * log_term * log_term * (1.0 + 1.0 / t)
}

#[test]
fn formula_examples() {
    assert_relative_eq!(c_spec_formula(2, 1.0, 3.0, 0.7).unwrap(), 2.8, max_relative = 1e-15);
    assert_relative_eq!(c_spec_formula(1, (-1.0f64).exp(), 1.0, 1.0).unwrap(), 4.0, max_relative = 1e-15);
    assert!(matches!(c_spec_formula(1, 0.0, 1.0, 1.0), Err(Error::InvalidThickness(_))));
    assert!(c_spec_formula(1, 0.5, -1.0, 1.0).is_err());
    assert_relative_eq!(c_hold_formula(1.0, 0.5).unwrap(), 10.48490665, epsilon = 1e-8);
    assert_relative_eq!(c_hold_formula(0.0, 0.25).unwrap(), 4.0 / 3.0 + 12f64.ln(), max_relative = 1e-15);
    assert!(matches!(c_hold_formula(1.0, 0.0), Err(Error::InvalidTheta(_))));
}

#[test]
fn corollary_example_overflows_in_log_space() {
    let c = corollary_chain(1, 1.0, 1.0, 0.5, 1.0, 1.0).unwrap();
    assert_eq!(c.c_obs_corollary.ln, 4800.0);
    assert!(c.c_obs_corollary.overflowed());
    assert!(c.flags.contains(Flag::Overflow));
    assert_relative_eq!(c.c_hold_corollary, 8.0, max_relative = 1e-15);
}

#[test]
fn small_l_limit() {
    let c = corollary_chain(1, 1.0, 1e-9, 0.25, 1.0, 2.0).unwrap();
    assert_relative_eq!(c.c_hold_corollary, 2.0 / 0.75, max_relative = 1e-8);
}

#[test]
fn log_value_roundtrip() {
    let v = LogValue::from_value(3.5);
    assert_relative_eq!(v.value(), 3.5, max_relative = 1e-15);
    assert!(v.flags().is_clean());
    let big = LogValue::from_ln(800.0);
    assert!(big.value().is_infinite() && big.flags().contains(Flag::Overflow));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn chain_matches_independent_evaluator(
        gamma in 0.01f64..=1.0,
        l in 0.1f64..10.0,
        theta in 0.05f64..0.95,
        t in 0.1f64..10.0,
        c in 0.1f64..5.0,
    ) {
        let ch = corollary_chain(2, gamma, l, theta, t, c).unwrap();
        let want = ln_c_obs_b(gamma, l, t, c);
        prop_assert!((ch.c_obs_corollary.ln - want).abs() <= 1e-12 * want);
        let spec = c * (1.0 + l) * (1.0 - gamma.ln());
        prop_assert!((ch.c_spec - spec).abs() <= 1e-12 * spec);
        let hold = (spec + 1.0).powi(2) / (1.0 - theta) + 12f64.ln();
        prop_assert!((ch.c_hold - hold).abs() <= 1e-12 * hold);
        prop_assert!((ch.c_obs.ln - 36.0 * (1.0 + 3.0 * hold) * (1.0 + 1.0 / t)).abs() <= 1e-12 * ch.c_obs.ln);
        if !ch.c_obs.overflowed() {
            prop_assert!((ch.c_obs.value().ln() - ch.c_obs.ln).abs() <= 1e-12 * ch.c_obs.ln.abs().max(1.0));
        }
    }

    #[test]
    fn monotone_in_every_argument(
        gamma in 0.01f64..0.9,
        dg in 0.0f64..0.1,
        l in 0.1f64..10.0,
        dl in 0.0f64..1.0,
        theta in 0.05f64..0.85,
        dth in 0.0f64..0.1,
        c in 0.1f64..5.0,
    ) {
        let base = c_spec_formula(1, gamma + dg, l, c).unwrap();
        prop_assert!(c_spec_formula(1, gamma, l, c).unwrap() >= base);
        prop_assert!(c_spec_formula(1, gamma + dg, l + dl, c).unwrap() >= base);
        prop_assert!(c_hold_formula(base, theta + dth).unwrap() >= c_hold_formula(base, theta).unwrap());
        prop_assert!(c_hold_formula(base * 1.1, theta).unwrap() >= c_hold_formula(base, theta).unwrap());
    }
}
