//! Translated-Gaussian failure of ball-to-ball observability and the far-Gaussian argument.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flags::Flags;
use crate::grid::{integrate, tail_flags, GridFunction, Integrand, TorusGrid, TAIL_THRESHOLD};
use crate::heat::{gaussian_solution_eval, propagate, GaussianSolutionSpec};
use crate::observability::{space_time_observation, TimeQuadrature};
use crate::sets::{rasterize, IndicatorMask, SetSpec};
use crate::weak_obs::{weighted_norm_sq, WeightSpec};

/// `u_k(t, x) = (4π(t+1))^{-n/2} e^{-|x - k e₁|²/(4(t+1))}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TranslatedGaussianFamily {
    pub n: usize,
    pub k: f64,
}

impl TranslatedGaussianFamily {
    pub fn new(n: usize, k: f64) -> Self {
        TranslatedGaussianFamily { n, k }
    }

    pub fn spec(&self) -> GaussianSolutionSpec {
        let mut c = vec![0.0; self.n];
        c[0] = self.k;
        GaussianSolutionSpec::new(c)
    }

    pub fn sample(&self, grid: &TorusGrid, t: f64) -> Result<GridFunction> {
        self.spec().sample(grid, t)
    }
}

pub fn translated_gaussian_eval(fam: &TranslatedGaussianFamily, t: f64, x: &[f64]) -> Result<f64> {
    gaussian_solution_eval(&fam.spec(), t, x)
}

fn check_radii(r: f64, r_outer: f64) -> Result<()> {
    if !(r > 0.0 && r_outer.is_finite()) {
        return Err(Error::InvalidRadii(format!("need r > 0, got r = {r}")));
    }
    if r_outer <= r {
        return Err(Error::InvalidRadii(format!("need r' > r, got r = {r}, r' = {r_outer}")));
    }
    Ok(())
}

/// Smallest `k` for which the closed-form ratio bound applies: `max(r + √(2n(T+1)), r')`.
pub fn bound_threshold(n: usize, t_final: f64, r: f64, r_outer: f64) -> f64 {
    (r + (2.0 * n as f64 * (t_final + 1.0)).sqrt()).max(r_outer)
}

/// `T(3r/σ)^n exp[((σ/3)² − (2σ/3)(k − r)) / (2(T+1))]` with `σ = r' − r`.
pub fn ratio_bound_closed_form(n: usize, t_final: f64, r: f64, r_outer: f64, k: f64) -> Result<f64> {
    check_radii(r, r_outer)?;
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidTime(t_final));
    }
    let threshold = bound_threshold(n, t_final, r, r_outer);
    if !(k > threshold) {
        return Err(Error::BoundNotApplicable(format!("k = {k} must exceed {threshold}")));
    }
    let sigma = r_outer - r;
    let exponent = ((sigma / 3.0).powi(2) - 2.0 * sigma / 3.0 * (k - r)) / (2.0 * (t_final + 1.0));
    Ok(t_final * (3.0 * r / sigma).powi(n as i32) * exponent.exp())
}

/// Grid for index `k`: side `≥ 2k + 40` rounded up to an even integer, `cells_per_unit` samples per unit length.
pub fn counterexample_grid(n: usize, k: f64, cells_per_unit: usize) -> Result<TorusGrid> {
    let side = (2.0 * k.abs() + 40.0).ceil();
    let side = if side as u64 % 2 == 1 { side + 1.0 } else { side };
    let m = side as usize * cells_per_unit;
    TorusGrid::new(n, side, m + m % 2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioNumeric {
    /// `∫₀^T ∫_{B_r} u_k²`.
    pub num: f64,
    /// `∫_{B_{r'}} u_k(T)²`.
    pub den: f64,
    pub ratio: f64,
    pub flags: Flags,
}

pub fn ratio_numeric(
    n: usize,
    t_final: f64,
    r: f64,
    r_outer: f64,
    k: f64,
    grid: &TorusGrid,
    quad: &TimeQuadrature,
) -> Result<RatioNumeric> {
    check_radii(r, r_outer)?;
    if grid.dim() != n {
        return Err(Error::GridMismatch);
    }
    if (quad.t_final - t_final).abs() > 1e-12 * t_final {
        return Err(Error::InvalidParameter("quadrature horizon differs from T".into()));
    }
    let fam = TranslatedGaussianFamily::new(n, k);
    let u0 = fam.sample(grid, 0.0)?;
    let inner = rasterize(&SetSpec::centered_ball(n, r), grid)?;
    let outer = rasterize(&SetSpec::centered_ball(n, r_outer), grid)?;
    let num = closed_form_observation(&fam, grid, &inner, quad)?;
    let ut = fam.sample(grid, t_final)?;
    let den = integrate(&ut, Some(&outer), Integrand::SquaredModulus)?;
    if !(den > 0.0) {
        return Err(Error::ObservationVanishes);
    }
    let mut flags = tail_flags(&u0, TAIL_THRESHOLD);
    flags.extend(&tail_flags(&ut, TAIL_THRESHOLD));
    Ok(RatioNumeric { num, den, ratio: num / den, flags })
}

// The family is sampled from its closed form at every node. Propagating by FFT
// puts a roundoff floor near 1e-32 of the peak energy, which swamps the far tails.
fn closed_form_observation(
    fam: &TranslatedGaussianFamily,
    grid: &TorusGrid,
    mask: &IndicatorMask,
    quad: &TimeQuadrature,
) -> Result<f64> {
    let mut total = 0.0;
    for (&t, &w) in quad.nodes.iter().zip(&quad.weights) {
        total += w * integrate(&fam.sample(grid, t)?, Some(mask), Integrand::SquaredModulus)?;
    }
    Ok(total)
}

/// `∫ρ|u_k(T)|² / ∫₀^T∫_{B_r} u_k²`.
pub fn weighted_failure_ratio(
    n: usize,
    t_final: f64,
    r: f64,
    k: f64,
    weight: &WeightSpec,
    grid: &TorusGrid,
    quad: &TimeQuadrature,
) -> Result<(f64, Flags)> {
    if !(r > 0.0) {
        return Err(Error::InvalidRadii(format!("need r > 0, got {r}")));
    }
    if grid.dim() != n {
        return Err(Error::GridMismatch);
    }
    let fam = TranslatedGaussianFamily::new(n, k);
    let u0 = fam.sample(grid, 0.0)?;
    let ball = rasterize(&SetSpec::centered_ball(n, r), grid)?;
    let den = closed_form_observation(&fam, grid, &ball, quad)?;
    let ut = fam.sample(grid, t_final)?;
    let num = weighted_norm_sq(&ut, weight)?;
    if !(den > 0.0) {
        return Err(Error::ObservationVanishes);
    }
    let mut flags = tail_flags(&u0, TAIL_THRESHOLD);
    flags.extend(&tail_flags(&ut, TAIL_THRESHOLD));
    Ok((num / den, flags))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarGaussianDemo {
    /// `∫₀¹ ∫_{|x−x₀|≥L} |v|²`.
    pub obs_energy: f64,
    /// `(2π)^{-n/2} e^{-L²/8}`.
    pub paper_bound: f64,
    /// `∫|v(1)|²` by quadrature.
    pub target_energy: f64,
    /// `4^{-n} π^{-n/2}`.
    pub target_closed_form: f64,
    /// `(2C)^{-1} π^{n/2}` for a supplied candidate constant.
    pub measure_lower_bound: Option<f64>,
    pub flags: Flags,
}

pub fn far_gaussian_bound(n: usize, l: f64) -> f64 {
    (2.0 * PI).powf(-0.5 * n as f64) * (-l * l / 8.0).exp()
}

pub fn far_gaussian_target(n: usize) -> f64 {
    4f64.powi(-(n as i32)) * PI.powf(-0.5 * n as f64)
}

/// Evolves `v(0) = (4π)^{-n/2}e^{-|x−x₀|²/4}` over `[0, 1]` and measures its energy outside `B_L(x₀)`.
pub fn far_gaussian_demo(
    x0: &[f64],
    l: f64,
    grid: &TorusGrid,
    quad: &TimeQuadrature,
    c_candidate: Option<f64>,
) -> Result<FarGaussianDemo> {
    let n = x0.len();
    if grid.dim() != n {
        return Err(Error::GridMismatch);
    }
    if !(l > 0.0) {
        return Err(Error::InvalidRadii(format!("need L > 0, got {l}")));
    }
    if (quad.t_final - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("far-Gaussian demo integrates over [0, 1]".into()));
    }
    let spec = GaussianSolutionSpec::new(x0.to_vec());
    let v0 = spec.sample(grid, 0.0)?;
    let outside = rasterize(&SetSpec::complement(SetSpec::ball(x0.to_vec(), l)), grid)?;
    let obs_energy = space_time_observation(&v0, &outside, quad)?;
    let v1 = propagate(&v0, 1.0)?;
    let target_energy = v1.norm_sq();
    let mut flags = tail_flags(&v0, TAIL_THRESHOLD);
    flags.extend(&tail_flags(&v1, TAIL_THRESHOLD));
    let measure_lower_bound = match c_candidate {
        Some(c) if c > 0.0 => Some(PI.powf(0.5 * n as f64) / (2.0 * c)),
        Some(c) => return Err(Error::InvalidParameter(format!("candidate constant {c} must be positive"))),
        None => None,
    };
    Ok(FarGaussianDemo {
        obs_energy,
        paper_bound: far_gaussian_bound(n, l),
        target_energy,
        target_closed_form: far_gaussian_target(n),
        measure_lower_bound,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_domain() {
        assert!(matches!(ratio_bound_closed_form(1, 1.0, 1.0, 1.0, 10.0), Err(Error::InvalidRadii(_))));
        assert!(matches!(ratio_bound_closed_form(1, 1.0, 1.0, 2.0, 2.5), Err(Error::BoundNotApplicable(_))));
        let b = ratio_bound_closed_form(1, 1.0, 1.0, 2.0, 10.0).unwrap();
        assert!((b - 3.0 * (-53.0f64 / 36.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn far_bound_value() {
        assert!((far_gaussian_bound(1, 4.0) - 0.05399096651318806).abs() < 1e-15);
        assert!((far_gaussian_target(1) - 0.14104739588693907).abs() < 1e-15);
    }

    #[test]
    fn grid_sizing() {
        let g = counterexample_grid(1, 20.0, 100).unwrap();
        assert_eq!(g.side(), 80.0);
        assert_eq!(g.samples_per_dim(), 8000);
    }
}
