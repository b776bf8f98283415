//! Closed-form constants of the thickness → spectral → interpolation → observability chain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flags::{Flag, Flags};
use crate::observability::predicted_cobs;

/// A positive quantity stored by its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogValue {
    pub ln: f64,
}

impl LogValue {
    pub fn from_ln(ln: f64) -> Self {
        LogValue { ln }
    }

    pub fn from_value(v: f64) -> Self {
        LogValue { ln: v.ln() }
    }

    /// `true` when `exp(ln)` is not representable as a finite double.
    pub fn overflowed(&self) -> bool {
        self.ln > f64::MAX.ln()
    }

    /// `exp(ln)`, `+∞` on overflow.
    pub fn value(&self) -> f64 {
        if self.overflowed() {
            f64::INFINITY
        } else {
            self.ln.exp()
        }
    }

    pub fn flags(&self) -> Flags {
        let mut f = Flags::new();
        if self.overflowed() {
            f.raise(Flag::Overflow);
        }
        f
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThickness(gamma))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTheta(theta))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
    }
}

/// `C(1+L)(1+ln(1/γ))`. The dimension enters only through the generic constant.
pub fn c_spec_formula(_n: usize, gamma: f64, l: f64, generic_c: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_positive("L", l)?;
    check_positive("generic C", generic_c)?;
    Ok(generic_c * (1.0 + l) * (1.0 - gamma.ln()))
}

/// `(C_spec + 1)² / (1 − θ) + ln 12`.
pub fn c_hold_formula(c_spec: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if !(c_spec >= 0.0 && c_spec.is_finite()) {
        return Err(Error::InvalidParameter(format!("C_spec = {c_spec} must be nonnegative")));
    }
    Ok((c_spec + 1.0).powi(2) / (1.0 - theta) + 12f64.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantChain {
    pub n: usize,
    pub gamma: f64,
    pub l: f64,
    pub theta: f64,
    pub t_final: f64,
    pub generic_c: f64,
    pub c_spec: f64,
    /// Composed from `c_spec` through [`c_hold_formula`].
    pub c_hold: f64,
    /// [`predicted_cobs`] at the composed `c_hold`.
    pub c_obs: LogValue,
    /// `C(1+L)²(1+ln(1/γ))²/(1−θ)`.
    pub c_hold_corollary: f64,
    /// `exp[300(1+C)(1+L)²(1+ln(1/γ))²(1+1/T)]`.
    pub c_obs_corollary: LogValue,
    /// `c_hold / c_hold_corollary`.
    pub c_hold_ratio: f64,
    /// `ln c_obs / ln c_obs_corollary`.
    pub log_c_obs_ratio: f64,
    pub flags: Flags,
}

pub fn corollary_chain(n: usize, gamma: f64, l: f64, theta: f64, t_final: f64, generic_c: f64) -> Result<ConstantChain> {
    check_theta(theta)?;
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidTime(t_final));
    }
    let c_spec = c_spec_formula(n, gamma, l, generic_c)?;
    let c_hold = c_hold_formula(c_spec, theta)?;
    let c_obs = predicted_cobs(c_hold, t_final)?;
    let shape = (1.0 + l).powi(2) * (1.0 - gamma.ln()).powi(2);
    let c_hold_corollary = generic_c / (1.0 - theta) * shape;
    let c_obs_corollary = LogValue::from_ln(300.0 * (1.0 + generic_c) * shape * (1.0 + 1.0 / t_final));
    let mut flags = c_obs.flags();
    flags.extend(&c_obs_corollary.flags());
    if !c_hold.is_finite() || !c_hold_corollary.is_finite() {
        flags.raise(Flag::Overflow);
    }
    Ok(ConstantChain {
        n,
        gamma,
        l,
        theta,
        t_final,
        generic_c,
        c_spec,
        c_hold,
        c_obs,
        c_hold_corollary,
        c_obs_corollary,
        c_hold_ratio: c_hold / c_hold_corollary,
        log_c_obs_ratio: c_obs.ln / c_obs_corollary.ln,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        assert_eq!(c_spec_formula(1, 1.0, 2.0, 1.5).unwrap(), 4.5);
        assert!((c_spec_formula(1, (-1f64).exp(), 1.0, 1.0).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(c_spec_formula(1, 2.0, 1.0, 1.0), Err(Error::InvalidThickness(_))));
    }

    #[test]
    fn hold_examples() {
        assert!((c_hold_formula(1.0, 0.5).unwrap() - (8.0 + 12f64.ln())).abs() < 1e-12);
        assert!(matches!(c_hold_formula(1.0, 1.0), Err(Error::InvalidTheta(_))));
    }

    #[test]
    fn corollary_overflow_keeps_log() {
        let c = corollary_chain(1, 1.0, 1.0, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(c.c_obs_corollary.ln, 4800.0);
        assert!(c.c_obs_corollary.value().is_infinite());
        assert!(c.flags.contains(Flag::Overflow));
    }
}
