//! Weighted spaces, annulus decomposition, and audits of weighted inequalities.

mod audit;

pub use audit::{
    audit_inequality, calibrate, AuditInput, AuditReport, DerivForm, InequalityDescriptor, InequalityId, KnobKind,
    Knobs,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward, GridFunction, TorusGrid, SHELL_FRACTION};
use crate::sets::IndicatorMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// `e^{a|x|^ν}`.
    ExpGrowth { a: f64, nu: f64 },
    /// `⟨x⟩^ν`.
    PolyGrowth { nu: f64 },
    /// `e^{-|x|}`.
    ExpDecay,
    /// `⟨x⟩^{-ν}`.
    PolyDecay { nu: f64 },
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightSpec::ExpGrowth { a, nu } => a > 0.0 && nu > 0.0 && a.is_finite() && nu.is_finite(),
            WeightSpec::PolyGrowth { nu } | WeightSpec::PolyDecay { nu } => nu > 0.0 && nu.is_finite(),
            WeightSpec::ExpDecay => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("weight parameters out of range: {self:?}")))
        }
    }

    pub fn is_growth(&self) -> bool {
        matches!(self, WeightSpec::ExpGrowth { .. } | WeightSpec::PolyGrowth { .. })
    }
}

/// `⟨x⟩ = (1 + |x|²)^{1/2}`.
pub fn japanese_bracket(x: &[f64]) -> f64 {
    (1.0 + x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub fn weight_eval(w: &WeightSpec, x: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    match *w {
        WeightSpec::ExpGrowth { a, nu } => (a * r.powf(nu)).exp(),
        WeightSpec::PolyGrowth { nu } => japanese_bracket(x).powf(nu),
        WeightSpec::ExpDecay => (-r).exp(),
        WeightSpec::PolyDecay { nu } => japanese_bracket(x).powf(-nu),
    }
}

/// `h^n Σ w(x)|f(x)|²` with `x` in the fundamental cell.
pub fn weighted_norm_sq(f: &GridFunction, w: &WeightSpec) -> Result<f64> {
    w.validate()?;
    let grid = f.grid();
    let mut x = vec![0.0; grid.dim()];
    let mut s = 0.0;
    for (j, v) in f.values().iter().enumerate() {
        grid.point(j, &mut x);
        s += weight_eval(w, &x) * v.norm_sqr();
    }
    let out = s * grid.cell_volume();
    if !out.is_finite() {
        return Err(Error::NonFiniteInput(0));
    }
    Ok(out)
}

/// Fraction of `∫w|f|²` in the boundary shell.
pub fn weighted_tail_fraction(f: &GridFunction, w: &WeightSpec) -> f64 {
    let grid = f.grid();
    let limit = SHELL_FRACTION * grid.side();
    let mut x = vec![0.0; grid.dim()];
    let (mut total, mut shell) = (0.0, 0.0);
    for (j, v) in f.values().iter().enumerate() {
        grid.point(j, &mut x);
        let e = weight_eval(w, &x) * v.norm_sqr();
        total += e;
        if x.iter().any(|c| c.abs() > limit) {
            shell += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        shell / total
    }
}

/// Relative amplitude below which transformed coefficients count as round-off.
pub const SPECTRAL_NOISE_FLOOR: f64 = 1e-14;

/// `ln ∫|f̂|² e^{a|ξ|^s} dξ`, discarding coefficients below the round-off floor.
pub fn log_fourier_weighted_norm_sq(f: &GridFunction, a: f64, s: f64) -> Result<f64> {
    if !(a >= 0.0 && s > 0.0) {
        return Err(Error::InvalidParameter(format!("Fourier weight needs a >= 0, s > 0; got a = {a}, s = {s}")));
    }
    let spec = forward(f)?;
    let grid = f.grid();
    let peak = spec.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let floor = SPECTRAL_NOISE_FLOOR * peak;
    let dxi = grid.frequency_step().powi(grid.dim() as i32);
    let terms: Vec<f64> = spec
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > floor)
        .map(|(j, c)| 2.0 * c.norm().ln() + a * grid.xi_sq(j).powf(0.5 * s))
        .collect();
    Ok(dxi.ln() + log_sum_exp(&terms))
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Masks `Ω_j = {j−1 ≤ |x| < j}` for `j = 1..=jmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusSet {
    pub masks: Vec<IndicatorMask>,
}

impl AnnulusSet {
    /// `Ω_j`, 1-based.
    pub fn shell(&self, j: usize) -> &IndicatorMask {
        &self.masks[j - 1]
    }

    pub fn jmax(&self) -> usize {
        self.masks.len()
    }
}

pub fn annulus_masks(grid: &TorusGrid, jmax: usize) -> Result<AnnulusSet> {
    if jmax == 0 || jmax as f64 > 0.5 * grid.side() {
        return Err(Error::OutOfDomain(format!("jmax = {jmax} must lie in 1..={}", 0.5 * grid.side())));
    }
    let mut flags = vec![vec![false; grid.len()]; jmax];
    let mut x = vec![0.0; grid.dim()];
    for j in 0..grid.len() {
        grid.point(j, &mut x);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        for (k, f) in flags.iter_mut().enumerate() {
            let lo = k as f64;
            let hi = (k + 1) as f64;
            if r2 >= lo * lo && r2 < hi * hi {
                f[j] = true;
                break;
            }
        }
    }
    let masks = flags.into_iter().map(|f| IndicatorMask::new(grid.clone(), f)).collect::<Result<Vec<_>>>()?;
    Ok(AnnulusSet { masks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_values() {
        assert_eq!(weight_eval(&WeightSpec::ExpDecay, &[0.0]), 1.0);
        assert_eq!(weight_eval(&WeightSpec::PolyGrowth { nu: 3.0 }, &[0.0, 0.0]), 1.0);
        let v = weight_eval(&WeightSpec::ExpGrowth { a: 1.0, nu: 1.0 }, &[2.0]);
        assert!((v - 2f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn annulus_domain() {
        let g = crate::grid::make_grid(2, 10.0, 32).unwrap();
        assert!(matches!(annulus_masks(&g, 6), Err(Error::OutOfDomain(_))));
        assert_eq!(annulus_masks(&g, 5).unwrap().jmax(), 5);
    }

    #[test]
    fn lse() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
