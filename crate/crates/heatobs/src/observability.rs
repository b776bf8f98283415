//! Observability and interpolation constants, time quadrature, and the telescoping schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::LogValue;
use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::flags::{Flag, Flags};
use crate::grid::{integrate, GridFunction, Integrand, TorusGrid};
use crate::heat::propagate;
use crate::linalg::{largest_eigenvalue, pcg, EigEstimate, EigOptions};
use crate::sets::IndicatorMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureScheme {
    Trapezoid,
    LogRefined,
}

/// Nodes in `(0, T]` with positive weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeQuadrature {
    pub t_final: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub scheme: QuadratureScheme,
}

/// Trapezoid nodes `iT/K`, or `K` geometric nodes from `T/K²` to `T`.
///
/// The interval `[0, t_1]` is carried by the first node in both schemes, so `Σw = T`.
pub fn time_quadrature(t_final: f64, scheme: QuadratureScheme, k: usize) -> Result<TimeQuadrature> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidTime(t_final));
    }
    if k < 2 {
        return Err(Error::TooFewNodes(k));
    }
    let nodes: Vec<f64> = match scheme {
        QuadratureScheme::Trapezoid => (1..=k).map(|i| t_final * i as f64 / k as f64).collect(),
        QuadratureScheme::LogRefined => {
            let ratio = (k as f64).powi(2).ln();
            (1..=k)
                .map(|i| {
                    if i == k {
                        t_final
                    } else {
                        t_final * (-(ratio * (k - i) as f64 / (k - 1) as f64)).exp()
                    }
                })
                .collect()
        }
    };
    let mut weights = vec![0.0; k];
    weights[0] = nodes[0];
    for i in 0..k - 1 {
        let half = 0.5 * (nodes[i + 1] - nodes[i]);
        weights[i] += half;
        weights[i + 1] += half;
    }
    Ok(TimeQuadrature { t_final, nodes, weights, scheme })
}

impl TimeQuadrature {
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * g(t)).sum()
    }

    /// Zeroes the weights of nodes outside `window`.
    pub fn restrict(&self, window: &TimeWindowSet) -> Result<TimeQuadrature> {
        if (window.t_final - self.t_final).abs() > 1e-12 * self.t_final {
            return Err(Error::InvalidParameter("time window and quadrature horizons differ".into()));
        }
        let weights = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| if window.contains(t) { w } else { 0.0 })
            .collect();
        Ok(TimeQuadrature { weights, ..self.clone() })
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Finite union of disjoint closed subintervals of `(0, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWindowSet {
    pub t_final: f64,
    pub intervals: Vec<(f64, f64)>,
}

impl TimeWindowSet {
    pub fn new(t_final: f64, intervals: Vec<(f64, f64)>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if intervals.is_empty() {
            return bad("time window set is empty");
        }
        for (i, &(a, b)) in intervals.iter().enumerate() {
            if !(a > 0.0 && b > a && b < t_final) {
                return bad("time windows must satisfy 0 < a < b < T");
            }
            if i > 0 && a <= intervals[i - 1].1 {
                return bad("time windows must be sorted and disjoint");
            }
        }
        Ok(TimeWindowSet { t_final, intervals })
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| t >= a && t <= b)
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

/// Unnormalized spectrum of `u₀`, evolved on demand.
struct Evolver {
    grid: TorusGrid,
    spectrum: Vec<Complex64>,
    xi_sq: Vec<f64>,
    buf: Vec<Complex64>,
}

impl Evolver {
    fn new(u0: &GridFunction) -> Result<Self> {
        u0.check_finite()?;
        let grid = u0.grid().clone();
        let mut spectrum = u0.values().to_vec();
        fft_nd(grid.dim(), grid.samples_per_dim(), &mut spectrum, false);
        let xi_sq = grid.xi_sq_table();
        Ok(Evolver { buf: vec![Complex64::new(0.0, 0.0); grid.len()], grid, spectrum, xi_sq })
    }

    fn at(&mut self, t: f64) -> &[Complex64] {
        let inv = 1.0 / self.grid.len() as f64;
        for ((b, s), x) in self.buf.iter_mut().zip(&self.spectrum).zip(&self.xi_sq) {
            *b = s * ((-t * x).exp() * inv);
        }
        fft_nd(self.grid.dim(), self.grid.samples_per_dim(), &mut self.buf, true);
        &self.buf
    }

    fn masked_energy(&mut self, t: f64, mask: Option<&IndicatorMask>) -> f64 {
        let hv = self.grid.cell_volume();
        let vals = self.at(t);
        let s: f64 = match mask {
            Some(m) => vals.iter().zip(m.flags()).filter(|(_, &b)| b).map(|(v, _)| v.norm_sqr()).sum(),
            None => vals.iter().map(|v| v.norm_sqr()).sum(),
        };
        s * hv
    }
}

/// `Σ w_i ∫_E |u(t_i)|²` with `u = e^{tΔ}u₀`.
pub fn space_time_observation(u0: &GridFunction, mask: &IndicatorMask, quad: &TimeQuadrature) -> Result<f64> {
    u0.grid().check_same(mask.grid())?;
    let mut ev = Evolver::new(u0)?;
    Ok(quad.nodes.iter().zip(&quad.weights).map(|(&t, &w)| w * ev.masked_energy(t, Some(mask))).sum())
}

/// `(∫|u(T)|², Σ w_i ∫_E |u(t_i)|²)`.
pub fn obs_forms(u0: &GridFunction, mask: &IndicatorMask, t_final: f64, quad: &TimeQuadrature) -> Result<(f64, f64)> {
    check_horizon(t_final, quad)?;
    u0.grid().check_same(mask.grid())?;
    if u0.is_zero() {
        return Err(Error::ZeroInput);
    }
    let mut ev = Evolver::new(u0)?;
    let num = ev.masked_energy(t_final, None);
    let den = quad.nodes.iter().zip(&quad.weights).map(|(&t, &w)| w * ev.masked_energy(t, Some(mask))).sum();
    Ok((num, den))
}

fn check_horizon(t_final: f64, quad: &TimeQuadrature) -> Result<()> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidTime(t_final));
    }
    if (quad.t_final - t_final).abs() > 1e-12 * t_final {
        return Err(Error::InvalidParameter(format!(
            "quadrature horizon {} differs from T = {t_final}",
            quad.t_final
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct ObsOptions {
    pub eig: EigOptions,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// First Tikhonov shift is this factor times the Gramian trace.
    pub reg_factor: f64,
    /// Shifts grow by 100× after a failed solve, up to this factor times the trace.
    pub max_reg_factor: f64,
    pub seed: u64,
}

impl Default for ObsOptions {
    fn default() -> Self {
        ObsOptions {
            eig: EigOptions { tol: 1e-8, relative: true, max_krylov: 120, max_restarts: 6, power_max_iter: 2000 },
            cg_tol: 1e-12,
            cg_max_iter: 2000,
            reg_factor: 1e-12,
            max_reg_factor: 1e-2,
            seed: 0x0b5e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObsEstimate {
    pub estimate: EigEstimate,
    /// Tikhonov shift applied to the Gramian, zero when none.
    pub shift: f64,
    pub cg_iterations: usize,
    pub flags: Flags,
}

/// Observability Gramian `Σ w_i e^{t_iΔ} χ_E e^{t_iΔ}` in unitary Fourier coordinates.
struct Gramian {
    grid: TorusGrid,
    decay: Vec<Vec<f64>>,
    weights: Vec<f64>,
    mask: Vec<f64>,
    shift: f64,
    buf: Vec<Complex64>,
}

impl Gramian {
    fn new(mask: &IndicatorMask, quad: &TimeQuadrature) -> Self {
        let grid = mask.grid().clone();
        let xi = grid.xi_sq_table();
        let (decay, weights): (Vec<Vec<f64>>, Vec<f64>) = quad
            .nodes
            .iter()
            .zip(&quad.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&t, &w)| (xi.iter().map(|x| (-t * x).exp()).collect(), w))
            .unzip();
        let m = mask.flags().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Gramian { buf: vec![Complex64::new(0.0, 0.0); grid.len()], grid, decay, weights, mask: m, shift: 0.0 }
    }

    /// Exact Fourier diagonal `Σ w_i e^{−2t_i|ξ|²} · |E|/|torus|`.
    fn diagonal(&self) -> Vec<f64> {
        let frac = self.mask.iter().sum::<f64>() / self.mask.len() as f64;
        (0..self.grid.len())
            .map(|j| self.decay.iter().zip(&self.weights).map(|(d, w)| w * d[j] * d[j]).sum::<f64>() * frac)
            .collect()
    }

    fn apply(&mut self, x: &[Complex64], y: &mut [Complex64]) {
        let (n, m) = (self.grid.dim(), self.grid.samples_per_dim());
        let inv = 1.0 / self.grid.len() as f64;
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = xi * self.shift);
        for (d, &w) in self.decay.iter().zip(&self.weights) {
            for ((b, xi), di) in self.buf.iter_mut().zip(x).zip(d) {
                *b = xi * *di;
            }
            fft_nd(n, m, &mut self.buf, true);
            for (b, c) in self.buf.iter_mut().zip(&self.mask) {
                *b *= c;
            }
            fft_nd(n, m, &mut self.buf, false);
            for ((yi, b), di) in y.iter_mut().zip(&self.buf).zip(d) {
                *yi += b * (w * di * inv);
            }
        }
    }
}

/// Best constant `sup ∫|u(T)|² / Σ w_i ∫_E|u(t_i)|²`.
///
/// Computed as the top eigenvalue of `R B⁻¹ R` with `R = e^{TΔ}` and `B` the Gramian,
/// using Lanczos outside and preconditioned CG for each `B`-solve.
pub fn obs_constant_estimate(
    mask: &IndicatorMask,
    t_final: f64,
    quad: &TimeQuadrature,
    opts: &ObsOptions,
) -> Result<ObsEstimate> {
    check_horizon(t_final, quad)?;
    if mask.count() == 0 {
        return Err(Error::EmptyObservationSet);
    }
    if quad.weights.iter().all(|&w| w <= 0.0) {
        return Err(Error::InvalidParameter("quadrature has no positive weights".into()));
    }
    let grid = mask.grid().clone();
    let dim = grid.len();
    let r: Vec<f64> = grid.xi_sq_table().iter().map(|x| (-t_final * x).exp()).collect();
    let mut gram = Gramian::new(mask, quad);
    let diag = gram.diagonal();
    let trace: f64 = diag.iter().sum();
    let eps_reg = opts.reg_factor * trace;
    let mut flags = Flags::new();
    // Fourier basis vectors are the first curvature probes.
    let min_diag = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_diag < eps_reg {
        gram.shift = eps_reg;
        flags.raise(Flag::Regularized);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    start[0] += Complex64::new(dim as f64, 0.0).sqrt();
    let max_shift = opts.max_reg_factor * trace;

    let mut cg_iters = 0usize;
    loop {
        let shift = gram.shift;
        let prec: Vec<f64> = diag.iter().map(|d| 1.0 / (d + shift).max(eps_reg.max(f64::MIN_POSITIVE))).collect();
        // Set when a solve fails; the pass is abandoned and retried with a larger shift.
        let mut failure: Option<(usize, f64)> = None;
        let result = {
            let gram = &mut gram;
            let failure = &mut failure;
            let cg_iters = &mut cg_iters;
            let mut op = |x: &[Complex64], y: &mut [Complex64]| -> Result<()> {
                let b: Vec<Complex64> = x.iter().zip(&r).map(|(v, ri)| v * ri).collect();
                let mut apply_b = |p: &[Complex64], q: &mut [Complex64]| {
                    gram.apply(p, q);
                    Ok(())
                };
                let mut apply_p = |p: &[Complex64], q: &mut [Complex64]| {
                    for ((qi, pi), di) in q.iter_mut().zip(p).zip(&prec) {
                        *qi = pi * di;
                    }
                    Ok(())
                };
                let out = pcg(&mut apply_b, &mut apply_p, &b, None, opts.cg_tol, opts.cg_max_iter)?;
                *cg_iters += out.iterations;
                let flat = shift == 0.0 && out.min_curvature < eps_reg;
                if !out.converged || flat {
                    *failure = Some((out.iterations, out.relative_residual));
                    return Err(Error::NotConverged { iterations: out.iterations, residual: out.relative_residual });
                }
                for ((yi, zi), ri) in y.iter_mut().zip(&out.x).zip(&r) {
                    *yi = zi * ri;
                }
                Ok(())
            };
            largest_eigenvalue(&mut op, &start, &opts.eig)
        };
        if let Some((iterations, residual)) = failure {
            let next = if gram.shift == 0.0 { eps_reg } else { gram.shift * 100.0 };
            if next > max_shift {
                return Err(Error::NotConverged { iterations, residual });
            }
            gram.shift = next;
            flags.raise(Flag::Regularized);
            continue;
        }
        let result = result?;
        if !result.estimate.converged {
            flags.raise(Flag::NotConverged);
        }
        return Ok(ObsEstimate { estimate: result.estimate, shift: gram.shift, cg_iterations: cg_iters, flags });
    }
}

/// `c(u₀) = [ln∫|u(T)|² − θ ln∫_E|u(T)|² − (1−θ) ln∫|u₀|²] / (1 + 1/T)`.
pub fn interpolation_constant(u0: &GridFunction, mask: &IndicatorMask, t_final: f64, theta: f64) -> Result<f64> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidTime(t_final));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidTheta(theta));
    }
    u0.grid().check_same(mask.grid())?;
    if u0.is_zero() {
        return Err(Error::ZeroInput);
    }
    let ut = propagate(u0, t_final)?;
    let total = ut.norm_sq();
    let observed = integrate(&ut, Some(mask), Integrand::SquaredModulus)?;
    if !(observed > 0.0) {
        return Err(Error::ObservationVanishes);
    }
    let initial = u0.norm_sq();
    Ok((total.ln() - theta * observed.ln() - (1.0 - theta) * initial.ln()) / (1.0 + 1.0 / t_final))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TelescopeSchedule {
    pub t_final: f64,
    pub lambda: f64,
    lambda_sq: f64,
    pub l: f64,
    pub l1: f64,
    /// `1 / (2 − λ⁻²)`.
    pub mu: f64,
    /// `1 + λ + 2C_Hold(1+λ)/λ`.
    pub c_prime: f64,
    pub c_hold: f64,
}

pub fn telescope_schedule(t_final: f64, lambda: f64, l: f64, l1: f64, c_hold: f64) -> Result<TelescopeSchedule> {
    build_schedule(t_final, lambda, lambda * lambda, l, l1, c_hold)
}

fn build_schedule(t_final: f64, lambda: f64, lambda_sq: f64, l: f64, l1: f64, c_hold: f64) -> Result<TelescopeSchedule> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidTime(t_final));
    }
    if !(lambda > std::f64::consts::FRAC_1_SQRT_2 && lambda < 1.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    if !(0.0 < l && l < l1 && l1 < t_final) {
        return Err(Error::InvalidParameter(format!("need 0 < l < l1 < T, got l = {l}, l1 = {l1}")));
    }
    if !(c_hold >= 0.0 && c_hold.is_finite()) {
        return Err(Error::InvalidParameter(format!("C_Hold {c_hold} must be nonnegative")));
    }
    let mu = 1.0 / (2.0 - 1.0 / lambda_sq);
    let c_prime = 1.0 + lambda + 2.0 * c_hold * (1.0 + lambda) / lambda;
    Ok(TelescopeSchedule { t_final, lambda, lambda_sq, l, l1, mu, c_prime, c_hold })
}

impl TelescopeSchedule {
    /// `l₁ = 2T/3`, `l = T/3`, `λ = √(2/3)`.
    pub fn defaults(t_final: f64, c_hold: f64) -> Result<Self> {
        build_schedule(t_final, (2.0f64 / 3.0).sqrt(), 2.0 / 3.0, t_final / 3.0, 2.0 * t_final / 3.0, c_hold)
    }

    /// `l_m = l + λ^{m−1}(l₁ − l)` for `m ≥ 1`.
    pub fn level(&self, m: usize) -> f64 {
        assert!(m >= 1, "levels start at m = 1");
        let k = m - 1;
        let pow = self.lambda_sq.powi((k / 2) as i32) * if k % 2 == 1 { self.lambda } else { 1.0 };
        self.l + pow * (self.l1 - self.l)
    }

    /// `ln C_obs = ln 3 + 2C_Hold + μC′/(l₁ − l₃)`.
    pub fn log_c_obs(&self) -> LogValue {
        LogValue::from_ln(3f64.ln() + 2.0 * self.c_hold + self.mu * self.c_prime / (self.l1 - self.level(3)))
    }
}

/// `exp[36(1 + 3C_Hold)(1 + 1/T)]` in log space.
pub fn predicted_cobs(c_hold: f64, t_final: f64) -> Result<LogValue> {
    if !(c_hold >= 0.0 && c_hold.is_finite()) {
        return Err(Error::InvalidParameter(format!("C_Hold {c_hold} must be nonnegative")));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidTime(t_final));
    }
    Ok(LogValue::from_ln(36.0 * (1.0 + 3.0 * c_hold) * (1.0 + 1.0 / t_final)))
}
