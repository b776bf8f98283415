//! Numerical laboratory for observability of the heat equation on `ℝⁿ`.
//!
//! `ℝⁿ` is approximated by a large periodic torus on which the heat semigroup is
//! an exact Fourier multiplier. On top of that sit thickness analysis of
//! observation sets, spectral-inequality and observability constant estimation,
//! closed-form constant chains, explicit counterexample families, and an audit
//! engine for weighted inequalities.

pub mod constants;
pub mod counterexample;
pub mod error;
mod fft;
pub mod flags;
pub mod grid;
pub mod heat;
pub mod linalg;
pub mod observability;
pub mod runner;
pub mod sets;
pub mod spectral;
pub mod weak_obs;

pub use error::{Error, Result};
pub use flags::{Flag, Flags};
pub use rustfft::num_complex::Complex64;
