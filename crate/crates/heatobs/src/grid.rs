//! Periodic box `[-Λ/2, Λ/2)^n` sampled at `M` points per axis.
//!
//! Transforms follow the continuum convention `f̂(ξ) = (2π)^{-n/2} ∫ f(x) e^{-ix·ξ} dx`,
//! so `h^n Σ|f|² = (2π/Λ)^n Σ|f̂|²`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::flags::{Flag, Flags};
use crate::sets::IndicatorMask;

pub const MAX_DERIVATIVE_ORDER: usize = 6;
/// Relative mass allowed in the outer shell before a result is flagged.
pub const TAIL_THRESHOLD: f64 = 1e-12;
/// Stricter threshold for audits that multiply by growing weights.
pub const GROWTH_TAIL_THRESHOLD: f64 = 1e-14;
/// Cells with some `|x_d| > SHELL_FRACTION·Λ` form the boundary shell.
pub const SHELL_FRACTION: f64 = 0.45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    side: f64,
    m: usize,
}

pub fn make_grid(n: usize, side: f64, m: usize) -> Result<TorusGrid> {
    TorusGrid::new(n, side, m)
}

impl TorusGrid {
    pub fn new(n: usize, side: f64, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidGrid(format!("side length {side} must be positive")));
        }
        if m < 4 || m % 2 != 0 {
            return Err(Error::InvalidGrid(format!("samples per axis {m} must be even and >= 4")));
        }
        if (m as f64).powi(n as i32) > 1e9 {
            return Err(Error::InvalidGrid(format!("{m}^{n} samples is too large")));
        }
        Ok(TorusGrid { n, side, m })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn samples_per_dim(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.m as f64
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// `π M / Λ`, the largest representable frequency magnitude per axis.
    pub fn max_frequency(&self) -> f64 {
        PI * self.m as f64 / self.side
    }

    /// Frequency spacing `2π/Λ`.
    pub fn frequency_step(&self) -> f64 {
        2.0 * PI / self.side
    }

    /// Coordinate of sample `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.side + i as f64 * self.spacing()
    }

    pub fn multi_index(&self, flat: usize, out: &mut [usize]) {
        let mut r = flat;
        for d in (0..self.n).rev() {
            out[d] = r % self.m;
            r /= self.m;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.m + i)
    }

    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let mut r = flat;
        for d in (0..self.n).rev() {
            out[d] = self.coord(r % self.m);
            r /= self.m;
        }
    }

    /// Signed lattice index `k ∈ [-M/2, M/2)` stored at FFT position `j`.
    pub fn wavenumber(&self, j: usize) -> i64 {
        if j < self.m / 2 {
            j as i64
        } else {
            j as i64 - self.m as i64
        }
    }

    /// `ξ = 2πk/Λ` at FFT position `j`.
    pub fn frequency(&self, j: usize) -> f64 {
        self.frequency_step() * self.wavenumber(j) as f64
    }

    /// `|ξ|²` at flat FFT position.
    pub fn xi_sq(&self, flat: usize) -> f64 {
        let mut r = flat;
        let mut s = 0.0;
        for _ in 0..self.n {
            let xi = self.frequency(r % self.m);
            s += xi * xi;
            r /= self.m;
        }
        s
    }

    /// `|ξ|²` for every FFT position.
    pub fn xi_sq_table(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.xi_sq(j)).collect()
    }

    pub(crate) fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        GridFunction { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|j| {
                grid.point(j, &mut x);
                f(&x)
            })
            .collect();
        GridFunction { grid: grid.clone(), values }
    }

    pub fn from_real_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `h^n Σ |f|²`.
    pub fn norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// `h^n Σ f ḡ`.
    pub fn inner(&self, other: &GridFunction) -> Result<Complex64> {
        self.grid.check_same(&other.grid)?;
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn scaled(&self, s: f64) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridFunction { grid: self.grid.clone(), values })
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(GridFunction { grid: self.grid.clone(), values })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            Some(i) => Err(Error::NonFiniteInput(i)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFunction {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl SpectrumFunction {
    pub fn new(grid: TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(SpectrumFunction { grid, coeffs })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Coefficients in FFT order.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient at signed wavenumbers `k`.
    pub fn at(&self, k: &[i64]) -> Complex64 {
        let m = self.grid.samples_per_dim() as i64;
        let flat = k.iter().fold(0usize, |acc, &ki| acc * m as usize + ki.rem_euclid(m) as usize);
        self.coeffs[flat]
    }

    /// `(2π/Λ)^n Σ |f̂_k|²`.
    pub fn energy(&self) -> f64 {
        let dxi = self.grid.frequency_step().powi(self.grid.dim() as i32);
        dxi * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `(2π/Λ)^n Σ |f̂_k|² w(ξ_k)` with `w` given per FFT position.
    pub fn weighted_energy(&self, w: impl Fn(usize) -> f64) -> f64 {
        let dxi = self.grid.frequency_step().powi(self.grid.dim() as i32);
        dxi * self.coeffs.iter().enumerate().map(|(j, c)| c.norm_sqr() * w(j)).sum::<f64>()
    }
}

fn sign_parity(grid: &TorusGrid, flat: usize) -> f64 {
    let m = grid.samples_per_dim();
    let mut r = flat;
    let mut s = 0usize;
    for _ in 0..grid.dim() {
        s += r % m;
        r /= m;
    }
    if s % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Continuum-normalized forward transform.
pub fn forward(f: &GridFunction) -> Result<SpectrumFunction> {
    f.check_finite()?;
    let grid = f.grid.clone();
    let mut data = f.values.clone();
    fft_nd(grid.dim(), grid.samples_per_dim(), &mut data, false);
    let scale = (grid.spacing() / (2.0 * PI).sqrt()).powi(grid.dim() as i32);
    for (j, c) in data.iter_mut().enumerate() {
        *c *= scale * sign_parity(&grid, j);
    }
    Ok(SpectrumFunction { grid, coeffs: data })
}

/// Inverse of [`forward`].
pub fn inverse(s: &SpectrumFunction) -> Result<GridFunction> {
    if let Some(i) = s.coeffs.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFiniteInput(i));
    }
    let grid = s.grid.clone();
    let scale = ((2.0 * PI).sqrt() / grid.side()).powi(grid.dim() as i32);
    let mut data: Vec<Complex64> = s
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| c * (scale * sign_parity(&grid, j)))
        .collect();
    fft_nd(grid.dim(), grid.samples_per_dim(), &mut data, true);
    Ok(GridFunction { grid, values: data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transformed {
    Spectrum(SpectrumFunction),
    Samples(GridFunction),
}

/// Direction-tagged wrapper over [`forward`] and [`inverse`].
pub fn transform(f: &Transformed, direction: Direction) -> Result<Transformed> {
    match (f, direction) {
        (Transformed::Samples(g), Direction::Forward) => Ok(Transformed::Spectrum(forward(g)?)),
        (Transformed::Spectrum(s), Direction::Inverse) => Ok(Transformed::Samples(inverse(s)?)),
        _ => Err(Error::InvalidParameter("transform direction does not match operand".into())),
    }
}

/// Applies the Fourier multiplier `mult(j)` given per FFT position.
pub fn apply_multiplier(f: &GridFunction, mult: impl Fn(usize) -> Complex64) -> Result<GridFunction> {
    f.check_finite()?;
    let grid = f.grid.clone();
    let mut data = f.values.clone();
    fft_nd(grid.dim(), grid.samples_per_dim(), &mut data, false);
    let inv_len = 1.0 / grid.len() as f64;
    for (j, c) in data.iter_mut().enumerate() {
        *c *= mult(j) * inv_len;
    }
    fft_nd(grid.dim(), grid.samples_per_dim(), &mut data, true);
    Ok(GridFunction { grid, values: data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    Values,
    SquaredModulus,
}

/// Riemann sum `h^n Σ` over the (masked) cells. `Values` integrates the real part.
pub fn integrate(f: &GridFunction, mask: Option<&IndicatorMask>, integrand: Integrand) -> Result<f64> {
    let term = |v: &Complex64| match integrand {
        Integrand::Values => v.re,
        Integrand::SquaredModulus => v.norm_sqr(),
    };
    let sum: f64 = match mask {
        Some(m) => {
            f.grid.check_same(m.grid())?;
            f.values.iter().zip(m.flags()).filter(|(_, &b)| b).map(|(v, _)| term(v)).sum()
        }
        None => f.values.iter().map(term).sum(),
    };
    Ok(sum * f.grid.cell_volume())
}

/// `∂^β f` computed as the multiplier `(iξ)^β`; the Nyquist index is zeroed on odd-order axes.
pub fn spectral_derivative(f: &GridFunction, beta: &[usize]) -> Result<GridFunction> {
    spectral_derivative_with_max(f, beta, MAX_DERIVATIVE_ORDER)
}

pub fn spectral_derivative_with_max(f: &GridFunction, beta: &[usize], max_order: usize) -> Result<GridFunction> {
    let grid = f.grid();
    if beta.len() != grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "multi-index has {} entries, grid dimension is {}",
            beta.len(),
            grid.dim()
        )));
    }
    let order: usize = beta.iter().sum();
    if order > max_order {
        return Err(Error::OrderTooHigh { order, max: max_order });
    }
    if order == 0 {
        f.check_finite()?;
        return Ok(f.clone());
    }
    let m = grid.samples_per_dim();
    let n = grid.dim();
    let per_axis: Vec<Vec<Complex64>> = beta
        .iter()
        .map(|&b| {
            (0..m)
                .map(|j| {
                    if b % 2 == 1 && j == m / 2 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, grid.frequency(j)).powu(b as u32)
                    }
                })
                .collect()
        })
        .collect();
    apply_multiplier(f, |flat| {
        let mut r = flat;
        let mut acc = Complex64::new(1.0, 0.0);
        for d in (0..n).rev() {
            acc *= per_axis[d][r % m];
            r /= m;
        }
        acc
    })
}

fn in_shell(grid: &TorusGrid, flat: usize) -> bool {
    let m = grid.samples_per_dim();
    let limit = SHELL_FRACTION * grid.side();
    let mut r = flat;
    for _ in 0..grid.dim() {
        if grid.coord(r % m).abs() > limit {
            return true;
        }
        r /= m;
    }
    false
}

/// Fraction of `∫|f|²` carried by the boundary shell.
pub fn tail_fraction(f: &GridFunction) -> f64 {
    let mut total = 0.0;
    let mut shell = 0.0;
    for (j, v) in f.values.iter().enumerate() {
        let e = v.norm_sqr();
        total += e;
        if in_shell(&f.grid, j) {
            shell += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        shell / total
    }
}

/// `PERIODIZATION_RISK` when the shell fraction reaches `threshold`.
pub fn tail_flags(f: &GridFunction, threshold: f64) -> Flags {
    let mut flags = Flags::new();
    if tail_fraction(f) >= threshold {
        flags.raise(Flag::PeriodizationRisk);
    }
    flags
}
