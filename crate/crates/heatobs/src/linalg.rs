//! Matrix-free Hermitian eigensolvers and conjugate gradients on complex vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Converged extremal Rayleigh value with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigEstimate {
    pub value: f64,
    /// `‖Ax − value·x‖ / ‖x‖` at the returned vector.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(a: &mut [Complex64], s: f64) {
    for v in a.iter_mut() {
        *v *= s;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    /// Absolute residual target, or relative to the Ritz value when `relative`.
    pub tol: f64,
    pub relative: bool,
    /// Krylov dimension per cycle.
    pub max_krylov: usize,
    pub max_restarts: usize,
    pub power_max_iter: usize,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions { tol: 1e-8, relative: false, max_krylov: 200, max_restarts: 10, power_max_iter: 20_000 }
    }
}

#[derive(Debug, Clone)]
pub struct EigVector {
    pub estimate: EigEstimate,
    pub vector: Vec<Complex64>,
}

type Apply<'a> = dyn FnMut(&[Complex64], &mut [Complex64]) -> Result<()> + 'a;

fn threshold(opts: &EigOptions, value: f64) -> f64 {
    if opts.relative {
        opts.tol * value.abs().max(f64::MIN_POSITIVE)
    } else {
        opts.tol
    }
}

fn true_residual(apply: &mut Apply<'_>, v: &[Complex64], value: f64) -> Result<f64> {
    let mut av = vec![Complex64::new(0.0, 0.0); v.len()];
    apply(v, &mut av)?;
    axpy(Complex64::new(-value, 0.0), v, &mut av);
    Ok(norm(&av) / norm(v))
}

/// Largest eigenvalue of a Hermitian operator by restarted Lanczos with full reorthogonalization.
pub fn lanczos_largest(apply: &mut Apply<'_>, start: &[Complex64], opts: &EigOptions) -> Result<EigVector> {
    let dim = start.len();
    let mut q0 = start.to_vec();
    let nrm = norm(&q0);
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(Error::InvalidParameter("Lanczos start vector must be nonzero and finite".into()));
    }
    scale(&mut q0, 1.0 / nrm);
    let mut total_iters = 0;
    let mut best = EigVector {
        estimate: EigEstimate { value: f64::NAN, residual: f64::INFINITY, iterations: 0, converged: false },
        vector: q0.clone(),
    };
    for _cycle in 0..=opts.max_restarts {
        let kmax = opts.max_krylov.min(dim).max(1);
        let mut basis: Vec<Vec<Complex64>> = vec![q0.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![Complex64::new(0.0, 0.0); dim];
        let mut ritz: Option<(f64, Vec<f64>)> = None;
        let mut exhausted = false;
        for j in 0..kmax {
            apply(&basis[j], &mut w)?;
            total_iters += 1;
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            axpy(Complex64::new(-a, 0.0), &basis[j], &mut w);
            if j > 0 {
                axpy(Complex64::new(-beta[j - 1], 0.0), &basis[j - 1], &mut w);
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
            }
            let b = norm(&w);
            let scale_ref = alpha.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
            exhausted = b <= 1e-13 * scale_ref || j + 1 == dim;
            let check = exhausted || j + 1 == kmax || j < 10 || j % 5 == 4;
            if check {
                let (theta, s) = tridiagonal_top(&alpha, &beta);
                let est = b * s[j].abs();
                ritz = Some((theta, s));
                if exhausted || est <= threshold(opts, theta) {
                    beta.push(b);
                    break;
                }
            }
            beta.push(b);
            if j + 1 < kmax {
                let mut next = w.clone();
                scale(&mut next, 1.0 / b);
                basis.push(next);
            }
        }
        let (theta, s) = ritz.expect("at least one Ritz check per cycle");
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        for (q, &c) in basis.iter().zip(&s) {
            axpy(Complex64::new(c, 0.0), q, &mut v);
        }
        let vn = norm(&v);
        scale(&mut v, 1.0 / vn);
        let residual = true_residual(apply, &v, theta)?;
        total_iters += 1;
        let converged = residual <= threshold(opts, theta) || (exhausted && residual <= 1e3 * threshold(opts, theta));
        best = EigVector {
            estimate: EigEstimate { value: theta, residual, iterations: total_iters, converged },
            vector: v.clone(),
        };
        if converged {
            return Ok(best);
        }
        q0 = v;
    }
    Ok(best)
}

fn tridiagonal_top(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (imax, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty tridiagonal");
    (theta, eig.eigenvectors.column(imax).iter().copied().collect())
}

/// Largest eigenvalue of a positive semidefinite operator by power iteration.
pub fn power_iteration(apply: &mut Apply<'_>, start: &[Complex64], opts: &EigOptions) -> Result<EigVector> {
    let dim = start.len();
    let mut v = start.to_vec();
    let nrm = norm(&v);
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(Error::InvalidParameter("power iteration start vector must be nonzero and finite".into()));
    }
    scale(&mut v, 1.0 / nrm);
    let mut av = vec![Complex64::new(0.0, 0.0); dim];
    let mut theta = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.power_max_iter {
        apply(&v, &mut av)?;
        theta = dot(&v, &av).re;
        let mut r = av.clone();
        axpy(Complex64::new(-theta, 0.0), &v, &mut r);
        residual = norm(&r);
        if residual <= threshold(opts, theta) {
            return Ok(EigVector {
                estimate: EigEstimate { value: theta, residual, iterations: it, converged: true },
                vector: v,
            });
        }
        let n = norm(&av);
        if n == 0.0 {
            break;
        }
        v.copy_from_slice(&av);
        scale(&mut v, 1.0 / n);
    }
    Ok(EigVector {
        estimate: EigEstimate { value: theta, residual, iterations: opts.power_max_iter, converged: false },
        vector: v,
    })
}

/// Lanczos, then power iteration seeded with the Lanczos vector if Lanczos stalls.
pub fn largest_eigenvalue(apply: &mut Apply<'_>, start: &[Complex64], opts: &EigOptions) -> Result<EigVector> {
    let lz = lanczos_largest(apply, start, opts)?;
    if lz.estimate.converged {
        return Ok(lz);
    }
    let pw = power_iteration(apply, &lz.vector, opts)?;
    if pw.estimate.converged || pw.estimate.residual < lz.estimate.residual {
        let mut out = pw;
        out.estimate.iterations += lz.estimate.iterations;
        Ok(out)
    } else {
        Ok(lz)
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    /// `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
    /// Smallest `⟨p, Ap⟩ / ⟨p, p⟩` seen along search directions.
    pub min_curvature: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for a Hermitian positive definite operator.
pub fn pcg(
    apply: &mut Apply<'_>,
    precondition: &mut Apply<'_>,
    b: &[Complex64],
    x0: Option<&[Complex64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let dim = b.len();
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); dim]);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![Complex64::new(0.0, 0.0); dim],
            iterations: 0,
            relative_residual: 0.0,
            min_curvature: f64::INFINITY,
            converged: true,
        });
    }
    let mut r = b.to_vec();
    let mut ap = vec![Complex64::new(0.0, 0.0); dim];
    if x0.is_some() {
        apply(&x, &mut ap)?;
        axpy(Complex64::new(-1.0, 0.0), &ap, &mut r);
    }
    let mut z = vec![Complex64::new(0.0, 0.0); dim];
    precondition(&r, &mut z)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    let mut min_curv = f64::INFINITY;
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        apply(&p, &mut ap)?;
        let pap = dot(&p, &ap).re;
        let pp = dot(&p, &p).re;
        min_curv = min_curv.min(pap / pp);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        axpy(Complex64::new(alpha, 0.0), &p, &mut x);
        axpy(Complex64::new(-alpha, 0.0), &ap, &mut r);
        rel = norm(&r) / bnorm;
        it += 1;
        if rel <= tol {
            break;
        }
        precondition(&r, &mut z)?;
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + *pi * beta;
        }
    }
    Ok(CgOutcome { x, iterations: it, relative_residual: rel, min_curvature: min_curv, converged: rel <= tol })
}
