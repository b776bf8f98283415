//! Band-limited functions, the spectral-inequality constant, and the good/bad cube split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{apply_multiplier, forward, integrate, spectral_derivative, GridFunction, Integrand, TorusGrid};
pub use crate::linalg::EigEstimate;
use crate::linalg::{largest_eigenvalue, EigOptions};
use crate::sets::IndicatorMask;

/// Frequency-ball radius `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLimitSpec {
    pub n: f64,
}

impl BandLimitSpec {
    pub fn new(n: f64) -> Self {
        BandLimitSpec { n }
    }

    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(Error::InvalidParameter(format!("band limit {} must be positive", self.n)));
        }
        let max = grid.max_frequency();
        if self.n >= max {
            return Err(Error::BandLimitTooLarge { n: self.n, max });
        }
        Ok(())
    }

    /// FFT positions with `|ξ| ≤ N`.
    pub fn indices(&self, grid: &TorusGrid) -> Vec<usize> {
        let n2 = self.n * self.n;
        (0..grid.len()).filter(|&j| grid.xi_sq(j) <= n2).collect()
    }
}

/// Zeroes every mode with `|ξ| > N`.
pub fn bandlimit_project(f: &GridFunction, band: BandLimitSpec) -> Result<GridFunction> {
    band.validate(f.grid())?;
    let grid = f.grid().clone();
    let n2 = band.n * band.n;
    apply_multiplier(f, |j| {
        if grid.xi_sq(j) <= n2 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Unit-norm real function with spectrum in `B_N`, from projected white noise.
pub fn random_bandlimited(grid: &TorusGrid, band: BandLimitSpec, seed: u64) -> Result<GridFunction> {
    band.validate(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Complex64> = (0..grid.len()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
    let f = GridFunction::new(grid.clone(), noise)?;
    let p = bandlimit_project(&f, band)?;
    let real: Vec<Complex64> = p.values().iter().map(|v| Complex64::new(v.re, 0.0)).collect();
    let out = GridFunction::new(grid.clone(), real)?;
    let nrm = out.norm_sq().sqrt();
    if nrm == 0.0 {
        return Err(Error::ZeroInput);
    }
    Ok(out.scaled(1.0 / nrm))
}

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub eig: EigOptions,
    /// Smallest resolvable `λ_min`.
    pub floor: f64,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { eig: EigOptions::default(), floor: 1e-14, seed: 0x5eed }
    }
}

/// Hermitian operator `v ↦ P χ P v` on the coefficients of the band, in the unitary DFT basis.
pub(crate) struct BandConcentration {
    grid: TorusGrid,
    band: Vec<usize>,
    weight: Vec<f64>,
    buf: Vec<Complex64>,
}

impl BandConcentration {
    pub(crate) fn new(grid: &TorusGrid, band: Vec<usize>, weight: Vec<f64>) -> Self {
        BandConcentration { grid: grid.clone(), band, weight, buf: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub(crate) fn dim(&self) -> usize {
        self.band.len()
    }

    pub(crate) fn apply(&mut self, x: &[Complex64], y: &mut [Complex64]) {
        let (n, m) = (self.grid.dim(), self.grid.samples_per_dim());
        let s = 1.0 / (self.grid.len() as f64).sqrt();
        self.buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (&j, &xi) in self.band.iter().zip(x) {
            self.buf[j] = xi * s;
        }
        fft_nd(n, m, &mut self.buf, true);
        for (v, w) in self.buf.iter_mut().zip(&self.weight) {
            *v *= w;
        }
        fft_nd(n, m, &mut self.buf, false);
        for (yi, &j) in y.iter_mut().zip(&self.band) {
            *yi = self.buf[j] * s;
        }
    }
}

/// Best constant `1/λ_min` with `λ_min = min ∫_E|f|² / ∫|f|²` over the band, via `1 − λ_max(P χ_{E^c} P)`.
pub fn spectral_constant_estimate(
    mask: &IndicatorMask,
    band: BandLimitSpec,
    opts: &SpectralOptions,
) -> Result<EigEstimate> {
    let grid = mask.grid();
    band.validate(grid)?;
    if mask.count() == 0 {
        return Err(Error::EmptyObservationSet);
    }
    let complement: Vec<f64> = mask.flags().iter().map(|&b| if b { 0.0 } else { 1.0 }).collect();
    let mut op = BandConcentration::new(grid, band.indices(grid), complement);
    let dim = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let mut apply = |x: &[Complex64], y: &mut [Complex64]| {
        op.apply(x, y);
        Ok(())
    };
    let top = largest_eigenvalue(&mut apply, &start, &opts.eig)?;
    let est = top.estimate;
    if !est.converged {
        return Err(Error::NotConverged { iterations: est.iterations, residual: est.residual });
    }
    let lambda_min = 1.0 - est.value;
    if lambda_min < opts.floor {
        return Err(Error::ConstantEffectivelyInfinite { lambda_min });
    }
    Ok(EigEstimate { value: 1.0 / lambda_min, ..est })
}

/// `h(s) = s^n (s−1)^{−n} − 1`.
pub fn a0_defect(n: usize, s: f64) -> f64 {
    (s / (s - 1.0)).powi(n as i32) - 1.0
}

/// Root of `h(s) = 1/2` on `[2, ∞)` by bisection.
pub fn solve_a0(n: usize) -> f64 {
    let target = 0.5;
    let mut lo = 2.0;
    let mut hi = 4.0;
    while a0_defect(n, hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if a0_defect(n, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (a0_defect(n, lo) - target).abs() < (a0_defect(n, hi) - target).abs() {
        lo
    } else {
        hi
    }
}

/// Unit cubes centered on integer points, with per-cube energy and good/bad label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubeClassification {
    pub cubes_per_axis: usize,
    pub good: Vec<bool>,
    pub energy: Vec<f64>,
    pub a0: f64,
    pub beta_max: usize,
}

impl CubeClassification {
    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    pub fn good_energy(&self) -> f64 {
        self.energy.iter().zip(&self.good).filter(|(_, &g)| g).map(|(e, _)| e).sum()
    }

    pub fn good_count(&self) -> usize {
        self.good.iter().filter(|&&g| g).count()
    }
}

/// Multi-indices `β ∈ ℕ^n` with `lo ≤ |β| ≤ hi`.
pub fn multi_indices(n: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>, lo: usize) {
        if cur.len() == n {
            if cur.iter().sum::<usize>() >= lo {
                out.push(cur.clone());
            }
            return;
        }
        for b in 0..=left {
            cur.push(b);
            rec(n, left - b, cur, out, lo);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, hi, &mut Vec::new(), &mut out, lo);
    out
}

/// Cube index of every sample: `floor(x + 1/2) mod Λ` per axis, flattened row-major.
pub(crate) fn cube_of_samples(grid: &TorusGrid) -> Result<(usize, Vec<usize>)> {
    let side = grid.side();
    if (side - side.round()).abs() > 1e-12 * side.max(1.0) {
        return Err(Error::CubesDontTile(side));
    }
    let k = side.round() as i64;
    let m = grid.samples_per_dim();
    let axis: Vec<usize> = (0..m).map(|i| ((grid.coord(i) + 0.5).floor() as i64).rem_euclid(k) as usize).collect();
    let n = grid.dim();
    let cube = (0..grid.len())
        .map(|flat| {
            let mut r = flat;
            let mut idx = 0usize;
            let mut mul = 1usize;
            for _ in 0..n {
                idx += axis[r % m] * mul;
                mul *= k as usize;
                r /= m;
            }
            idx
        })
        .collect();
    Ok((k as usize, cube))
}

/// A cube is good when `∫_Q|∂^β f|² ≤ A₀^{|β|} N^{2|β|} ∫_Q|f|²` for all `1 ≤ |β| ≤ βmax`.
pub fn classify_cubes(f: &GridFunction, band: BandLimitSpec, beta_max: usize) -> Result<CubeClassification> {
    let grid = f.grid();
    band.validate(grid)?;
    if beta_max == 0 {
        return Err(Error::InvalidParameter("beta_max must be at least 1".into()));
    }
    let (k, cube) = cube_of_samples(grid)?;
    if f.is_zero() {
        return Err(Error::ZeroInput);
    }
    let n = grid.dim();
    let ncubes = k.pow(n as u32);
    let hv = grid.cell_volume();
    let per_cube = |g: &GridFunction| {
        let mut e = vec![0.0; ncubes];
        for (v, &c) in g.values().iter().zip(&cube) {
            e[c] += v.norm_sqr() * hv;
        }
        e
    };
    let energy = per_cube(f);
    let a0 = solve_a0(n);
    let mut good = vec![true; ncubes];
    for beta in multi_indices(n, 1, beta_max) {
        let order = beta.iter().sum::<usize>() as i32;
        let factor = a0.powi(order) * band.n.powi(2 * order);
        let d = per_cube(&spectral_derivative(f, &beta)?);
        for q in 0..ncubes {
            if d[q] > factor * energy[q] {
                good[q] = false;
            }
        }
    }
    Ok(CubeClassification { cubes_per_axis: k, good, energy, a0, beta_max })
}

/// Minimal `C′` with `‖f‖² ≤ C′(∫_E|f|² + ∫_{|ξ|>N}|f̂|²)`.
pub fn uncertainty_audit(f: &GridFunction, mask: &IndicatorMask, band: BandLimitSpec) -> Result<f64> {
    band.validate(f.grid())?;
    let observed = integrate(f, Some(mask), Integrand::SquaredModulus)?;
    let spec = forward(f)?;
    let n2 = band.n * band.n;
    let grid = f.grid().clone();
    let tail = spec.weighted_energy(|j| if grid.xi_sq(j) > n2 { 1.0 } else { 0.0 });
    let denom = observed + tail;
    if denom == 0.0 {
        return Err(Error::ZeroInput);
    }
    Ok(f.norm_sq() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a0_closed_forms() {
        assert!((solve_a0(1) - 3.0).abs() < 1e-12);
        let r = 1.5f64.sqrt();
        assert!((solve_a0(2) - r / (r - 1.0)).abs() < 1e-9);
        for n in 1..6 {
            assert!(solve_a0(n) >= 2.0);
            assert!((a0_defect(n, solve_a0(n)) - 0.5).abs() < 1e-11);
        }
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 1, 3).len(), 3);
        assert_eq!(multi_indices(2, 1, 3).len(), 9);
        assert_eq!(multi_indices(2, 0, 0), vec![vec![0, 0]]);
    }

    #[test]
    fn band_too_large() {
        let g = crate::grid::make_grid(1, 10.0, 32).unwrap();
        assert!(matches!(BandLimitSpec::new(11.0).validate(&g), Err(Error::BandLimitTooLarge { .. })));
    }
}
