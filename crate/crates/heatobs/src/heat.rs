//! Exact heat semigroup on the torus and closed-form Gaussian solutions.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_multiplier, GridFunction, TorusGrid};

/// `K(t, x) = (4πt)^{-n/2} e^{-|x|²/4t}`.
pub fn heat_kernel_eval(n: usize, t: f64, x: &[f64]) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidTime(t));
    }
    debug_assert_eq!(x.len(), n);
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok((4.0 * PI * t).powf(-0.5 * n as f64) * (-r2 / (4.0 * t)).exp())
}

/// `e^{tΔ} u` as the multiplier `e^{-t|ξ|²}`.
pub fn propagate(u: &GridFunction, t: f64) -> Result<GridFunction> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    if t == 0.0 {
        u.check_finite()?;
        return Ok(u.clone());
    }
    let grid = u.grid().clone();
    apply_multiplier(u, |j| Complex64::new((-t * grid.xi_sq(j)).exp(), 0.0))
}

/// Heat multipliers `e^{-t|ξ|²}` for every FFT position.
pub fn heat_multiplier(grid: &TorusGrid, t: f64) -> Vec<f64> {
    (0..grid.len()).map(|j| (-t * grid.xi_sq(j)).exp()).collect()
}

/// The solution with initial datum `(4π)^{-n/2} e^{-|x-x₀|²/4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSolutionSpec {
    pub n: usize,
    pub center: Vec<f64>,
}

impl GaussianSolutionSpec {
    pub fn new(center: Vec<f64>) -> Self {
        GaussianSolutionSpec { n: center.len(), center }
    }

    pub fn centered(n: usize) -> Self {
        GaussianSolutionSpec { n, center: vec![0.0; n] }
    }

    pub fn sample(&self, grid: &TorusGrid, t: f64) -> Result<GridFunction> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidTime(t));
        }
        if grid.dim() != self.n {
            return Err(Error::GridMismatch);
        }
        Ok(GridFunction::from_real_fn(grid, |x| gaussian_value(&self.center, t, x)))
    }
}

fn gaussian_value(center: &[f64], t: f64, x: &[f64]) -> f64 {
    let n = center.len() as f64;
    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
    (4.0 * PI * (t + 1.0)).powf(-0.5 * n) * (-r2 / (4.0 * (t + 1.0))).exp()
}

/// `v(t, x) = (4π(t+1))^{-n/2} e^{-|x-x₀|²/(4(t+1))}`.
pub fn gaussian_solution_eval(spec: &GaussianSolutionSpec, t: f64, x: &[f64]) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    Ok(gaussian_value(&spec.center, t, x))
}
