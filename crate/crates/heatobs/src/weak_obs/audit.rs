use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{
    annulus_masks, log_fourier_weighted_norm_sq, log_sum_exp, weighted_norm_sq, weighted_tail_fraction, WeightSpec,
};
use crate::error::{Error, Result};
use crate::flags::{Flag, Flags};
use crate::grid::{
    integrate, spectral_derivative, GridFunction, Integrand, GROWTH_TAIL_THRESHOLD, MAX_DERIVATIVE_ORDER,
    TAIL_THRESHOLD,
};
use crate::heat::propagate;
use crate::observability::{space_time_observation, TimeQuadrature};
use crate::sets::{rasterize, SetSpec};
use crate::spectral::multi_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InequalityId {
    PersistExp,
    PersistPoly,
    DerivSup,
    SmallnessAnnulus,
    RingChain,
    WeightedDecay,
    SeriesSum,
    WeakInterpExp,
    WeakInterpPoly,
    LocalRecovery,
    SupportedObs,
    ConcentratedObs,
}

impl InequalityId {
    pub const ALL: [InequalityId; 12] = [
        InequalityId::PersistExp,
        InequalityId::PersistPoly,
        InequalityId::DerivSup,
        InequalityId::SmallnessAnnulus,
        InequalityId::RingChain,
        InequalityId::WeightedDecay,
        InequalityId::SeriesSum,
        InequalityId::WeakInterpExp,
        InequalityId::WeakInterpPoly,
        InequalityId::LocalRecovery,
        InequalityId::SupportedObs,
        InequalityId::ConcentratedObs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InequalityId::PersistExp => "PERSIST_EXP",
            InequalityId::PersistPoly => "PERSIST_POLY",
            InequalityId::DerivSup => "DERIV_SUP",
            InequalityId::SmallnessAnnulus => "SMALLNESS_ANNULUS",
            InequalityId::RingChain => "RING_CHAIN",
            InequalityId::WeightedDecay => "WEIGHTED_DECAY",
            InequalityId::SeriesSum => "SERIES_SUM",
            InequalityId::WeakInterpExp => "WEAK_INTERP_EXP",
            InequalityId::WeakInterpPoly => "WEAK_INTERP_POLY",
            InequalityId::LocalRecovery => "LOCAL_RECOVERY",
            InequalityId::SupportedObs => "SUPPORTED_OBS",
            InequalityId::ConcentratedObs => "CONCENTRATED_OBS",
        }
    }

    /// Name of the unpinned constant, if the inequality has one.
    pub fn knob_name(self) -> Option<&'static str> {
        match self {
            InequalityId::DerivSup
            | InequalityId::SmallnessAnnulus
            | InequalityId::RingChain
            | InequalityId::WeightedDecay
            | InequalityId::LocalRecovery
            | InequalityId::SupportedObs => Some("C"),
            InequalityId::WeakInterpExp => Some("C'"),
            InequalityId::WeakInterpPoly => Some("C''"),
            InequalityId::PersistExp
            | InequalityId::PersistPoly
            | InequalityId::SeriesSum
            | InequalityId::ConcentratedObs => None,
        }
    }

    /// Whether the right side depends on the unpinned exponent `θ`.
    pub fn uses_theta(self) -> bool {
        matches!(
            self,
            InequalityId::SmallnessAnnulus
                | InequalityId::RingChain
                | InequalityId::WeightedDecay
                | InequalityId::WeakInterpExp
                | InequalityId::WeakInterpPoly
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KnobKind {
    Pinned,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knobs {
    pub theta: f64,
    pub c: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        Knobs { theta: 0.5, c: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityDescriptor {
    pub id: InequalityId,
    pub knobs: Knobs,
}

impl InequalityDescriptor {
    pub fn new(id: InequalityId) -> Self {
        InequalityDescriptor { id, knobs: Knobs::default() }
    }

    pub fn with_knobs(id: InequalityId, knobs: Knobs) -> Self {
        InequalityDescriptor { id, knobs }
    }

    /// Every constant on the right side and whether it is a fixed number or a generic knob.
    pub fn knob_declaration(&self) -> Vec<(&'static str, KnobKind)> {
        use KnobKind::*;
        let mut out = match self.id {
            InequalityId::PersistExp => vec![("2^{n/2}", Pinned), ("a^{2/(2-nu)} t^{nu/(2-nu)}", Pinned)],
            InequalityId::PersistPoly => vec![("4^{nu+2} Gamma(nu/2+n)", Pinned), ("1+t^{nu/4}", Pinned)],
            InequalityId::DerivSup => vec![("a^{-(2|alpha|+3n)/(2s)} (alpha!)^{1/s}", Pinned)],
            InequalityId::SmallnessAnnulus => vec![("j^{(n-1)(1-theta)}", Pinned)],
            InequalityId::RingChain => vec![("j^{n-1}", Pinned)],
            InequalityId::WeightedDecay => vec![("1+a^{-n} Gamma(a/(2|ln theta|))", Pinned)],
            InequalityId::SeriesSum => vec![("e^a/|ln theta| Gamma(a/|ln b|) |ln b|^{-a/|ln theta|}", Pinned)],
            InequalityId::WeakInterpExp => vec![("sqrt(1+a^{-n} Gamma(a/(2|ln theta|)))", Pinned)],
            InequalityId::WeakInterpPoly => vec![("1+T^{nu/2}", Pinned)],
            InequalityId::LocalRecovery => vec![("1/T", Pinned)],
            InequalityId::SupportedObs => vec![("1/T", Pinned)],
            InequalityId::ConcentratedObs => vec![("2^{n/2+1} pi^{n/2} T^{n/2-1} e^{4r^2/T} / (V_n (r^M)^n mu^2)", Pinned)],
        };
        if let Some(name) = self.id.knob_name() {
            out.push((name, Generic));
        }
        if self.id.uses_theta() {
            out.push(("theta", Generic));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum DerivForm {
    /// `C^{|α|+1} a^{-(2|α|+3n)/(2s)} (α!)^{1/s}` with Fourier weight `e^{a|ξ|^s}`.
    Lemma { s: f64 },
    /// `e^{C(1+b²)(1+1/a)} |α|!/b^{|α|}` with Fourier weight `e^{a|ξ|²}`.
    Corollary { b: f64 },
}

/// Data for one audit; the variant must match the descriptor.
#[derive(Debug, Clone, Copy)]
pub enum AuditInput<'a> {
    PersistExp { u0: &'a GridFunction, a: f64, nu: f64, t: f64 },
    PersistPoly { u0: &'a GridFunction, nu: f64, t: f64 },
    DerivSup { f: &'a GridFunction, a: f64, form: DerivForm, max_order: usize },
    SmallnessAnnulus { f: &'a GridFunction, a: f64, j: usize },
    RingChain { f: &'a GridFunction, a: f64, j: usize },
    WeightedDecay { f: &'a GridFunction, a: f64, t: f64, eps: f64 },
    SeriesSum { a: f64, b: f64, theta: f64 },
    WeakInterpExp { u0: &'a GridFunction, a: f64, t: f64, eps: f64 },
    WeakInterpPoly { u0: &'a GridFunction, nu: f64, t: f64, eps: f64 },
    /// Inner radius `r_inner` observed at time `T` from the ball of radius `r_outer`.
    LocalRecovery { u0: &'a GridFunction, t: f64, r_inner: f64, r_outer: f64, quad: &'a TimeQuadrature },
    SupportedObs { u0: &'a GridFunction, t: f64, r: f64, m: f64, quad: &'a TimeQuadrature },
    ConcentratedObs { u0: &'a GridFunction, t: f64, r: f64, m: f64, quad: &'a TimeQuadrature },
}

impl AuditInput<'_> {
    pub fn id(&self) -> InequalityId {
        match self {
            AuditInput::PersistExp { .. } => InequalityId::PersistExp,
            AuditInput::PersistPoly { .. } => InequalityId::PersistPoly,
            AuditInput::DerivSup { .. } => InequalityId::DerivSup,
            AuditInput::SmallnessAnnulus { .. } => InequalityId::SmallnessAnnulus,
            AuditInput::RingChain { .. } => InequalityId::RingChain,
            AuditInput::WeightedDecay { .. } => InequalityId::WeightedDecay,
            AuditInput::SeriesSum { .. } => InequalityId::SeriesSum,
            AuditInput::WeakInterpExp { .. } => InequalityId::WeakInterpExp,
            AuditInput::WeakInterpPoly { .. } => InequalityId::WeakInterpPoly,
            AuditInput::LocalRecovery { .. } => InequalityId::LocalRecovery,
            AuditInput::SupportedObs { .. } => InequalityId::SupportedObs,
            AuditInput::ConcentratedObs { .. } => InequalityId::ConcentratedObs,
        }
    }

    fn function(&self) -> Option<&GridFunction> {
        match *self {
            AuditInput::PersistExp { u0, .. }
            | AuditInput::PersistPoly { u0, .. }
            | AuditInput::WeakInterpExp { u0, .. }
            | AuditInput::WeakInterpPoly { u0, .. }
            | AuditInput::LocalRecovery { u0, .. }
            | AuditInput::SupportedObs { u0, .. }
            | AuditInput::ConcentratedObs { u0, .. } => Some(u0),
            AuditInput::DerivSup { f, .. }
            | AuditInput::SmallnessAnnulus { f, .. }
            | AuditInput::RingChain { f, .. }
            | AuditInput::WeightedDecay { f, .. } => Some(f),
            AuditInput::SeriesSum { .. } => None,
        }
    }

    fn params(&self) -> String {
        match *self {
            AuditInput::PersistExp { a, nu, t, .. } => format!("a={a},nu={nu},t={t}"),
            AuditInput::PersistPoly { nu, t, .. } => format!("nu={nu},t={t}"),
            AuditInput::DerivSup { a, form, max_order, .. } => format!("a={a},form={form:?},max_order={max_order}"),
            AuditInput::SmallnessAnnulus { a, j, .. } | AuditInput::RingChain { a, j, .. } => format!("a={a},j={j}"),
            AuditInput::WeightedDecay { a, t, eps, .. } | AuditInput::WeakInterpExp { a, t, eps, .. } => {
                format!("a={a},t={t},eps={eps}")
            }
            AuditInput::SeriesSum { a, b, theta } => format!("a={a},b={b},theta={theta}"),
            AuditInput::WeakInterpPoly { nu, t, eps, .. } => format!("nu={nu},t={t},eps={eps}"),
            AuditInput::LocalRecovery { t, r_inner, r_outer, quad, .. } => {
                format!("t={t},r_inner={r_inner},r_outer={r_outer},nodes={}", quad.nodes.len())
            }
            AuditInput::SupportedObs { t, r, m, quad, .. } | AuditInput::ConcentratedObs { t, r, m, quad, .. } => {
                format!("t={t},r={r},m={m},nodes={}", quad.nodes.len())
            }
        }
    }

    fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.params().as_bytes());
        if let Some(f) = self.function() {
            let g = f.grid();
            eat(&(g.dim() as u64).to_le_bytes());
            eat(&g.side().to_le_bytes());
            eat(&(g.samples_per_dim() as u64).to_le_bytes());
            for v in f.values() {
                eat(&v.re.to_le_bytes());
                eat(&v.im.to_le_bytes());
            }
        }
        let mut s = String::new();
        let _ = write!(s, "{h:016x}");
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub id: InequalityId,
    pub params: String,
    pub inputs_digest: String,
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_ln: f64,
    pub rhs_ln: f64,
    /// `rhs / lhs`.
    pub margin: f64,
    /// Logarithm of the right-side factors that do not involve the generic knob.
    pub pinned_ln: f64,
    /// Logarithm of the knob-dependent factor at the supplied knob.
    pub knob_ln: f64,
    pub knobs: Knobs,
    /// Smallest knob making every checked instance hold, clamped at zero.
    pub minimal_generic_constant: Option<f64>,
    pub binding_term: String,
    pub details: Vec<(String, f64)>,
    pub flags: Flags,
}

impl AuditReport {
    pub fn holds(&self) -> bool {
        self.margin >= 1.0
    }
}

#[derive(Debug, Clone, Copy)]
enum KnobEntry {
    None,
    /// `e^{κC}`.
    Exp(f64),
    /// `C^p`.
    Power(f64),
    /// `base + slope·C`.
    Affine { base: f64, slope: f64 },
}

#[derive(Debug, Clone)]
struct Term {
    label: String,
    lhs_ln: f64,
    pinned_ln: f64,
    knob: KnobEntry,
}

impl Term {
    fn knob_ln(&self, c: f64) -> f64 {
        match self.knob {
            KnobEntry::None => 0.0,
            KnobEntry::Exp(k) => k * c,
            KnobEntry::Power(p) => p * c.ln(),
            KnobEntry::Affine { base, slope } => (base + slope * c).ln(),
        }
    }

    fn rhs_ln(&self, c: f64) -> f64 {
        self.pinned_ln + self.knob_ln(c)
    }

    fn minimal_c(&self) -> Option<f64> {
        if self.lhs_ln == f64::NEG_INFINITY {
            return match self.knob {
                KnobEntry::None => None,
                _ => Some(0.0),
            };
        }
        let gap = self.lhs_ln - self.pinned_ln;
        let c = match self.knob {
            KnobEntry::None => return None,
            KnobEntry::Exp(k) => gap / k,
            KnobEntry::Power(p) => (gap / p).exp(),
            KnobEntry::Affine { base, slope } => (gap.exp() - base) / slope,
        };
        Some(if c.is_nan() { f64::INFINITY } else { c.max(0.0) })
    }
}

fn margin_of(lhs_ln: f64, rhs_ln: f64) -> f64 {
    if lhs_ln == f64::NEG_INFINITY && rhs_ln == f64::NEG_INFINITY {
        1.0
    } else {
        (rhs_ln - lhs_ln).exp()
    }
}

fn precondition(ok: bool, clause: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::PreconditionFailed(clause.to_string()))
    }
}

fn ln_norm_sq(f: &GridFunction) -> f64 {
    f.norm_sq().ln()
}

fn ball_energy_ln(f: &GridFunction, r: f64) -> Result<f64> {
    let n = f.grid().dim();
    let ball = rasterize(&SetSpec::centered_ball(n, r), f.grid())?;
    Ok(integrate(f, Some(&ball), Integrand::SquaredModulus)?.ln())
}

/// `ln(1 + a^{-n} Γ(x))`.
fn ln_one_plus_gamma(a: f64, n: usize, x: f64) -> f64 {
    log_sum_exp(&[0.0, -(n as f64) * a.ln() + ln_gamma(x)])
}

fn growth_tail(f: &GridFunction, w: &WeightSpec, flags: &mut Flags) {
    if weighted_tail_fraction(f, w) >= GROWTH_TAIL_THRESHOLD {
        flags.raise(Flag::PeriodizationRisk);
    }
}

fn plain_tail(f: &GridFunction, flags: &mut Flags) {
    if crate::grid::tail_fraction(f) >= TAIL_THRESHOLD {
        flags.raise(Flag::PeriodizationRisk);
    }
}

fn factorial_ln(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// `Σ_{k≥1} b^{θ^k} e^{-ak}` until the geometric tail bound is below `1e-12` of the sum.
pub(crate) fn series_partial_sum(a: f64, b: f64, theta: f64) -> f64 {
    let mut sum = 0.0;
    let mut k = 1u32;
    loop {
        sum += b.powf(theta.powi(k as i32)) * (-a * k as f64).exp();
        let tail = (-a * (k + 1) as f64).exp() / (1.0 - (-a).exp());
        if tail < 1e-12 * sum || k > 1_000_000 {
            return sum;
        }
        k += 1;
    }
}

fn build_terms(desc: &InequalityDescriptor, input: &AuditInput<'_>, flags: &mut Flags) -> Result<Vec<Term>> {
    let theta = desc.knobs.theta;
    let ln_theta = theta.ln().abs();
    let single = |label: &str, lhs_ln: f64, pinned_ln: f64, knob: KnobEntry| {
        vec![Term { label: label.to_string(), lhs_ln, pinned_ln, knob }]
    };
    match *input {
        AuditInput::PersistExp { u0, a, nu, t } => {
            precondition(a > 0.0, "a > 0")?;
            precondition(nu > 0.0 && nu <= 1.0, "nu in (0, 1]")?;
            precondition(t > 0.0, "t > 0")?;
            let w = WeightSpec::ExpGrowth { a, nu };
            let ut = propagate(u0, t)?;
            growth_tail(u0, &w, flags);
            growth_tail(&ut, &w, flags);
            let n = u0.grid().dim() as f64;
            let lhs = 0.5 * weighted_norm_sq(&ut, &w)?.ln();
            let pinned = 0.5 * n * 2f64.ln()
                + a.powf(2.0 / (2.0 - nu)) * t.powf(nu / (2.0 - nu))
                + 0.5 * weighted_norm_sq(u0, &w)?.ln();
            Ok(single("norm", lhs, pinned, KnobEntry::None))
        }
        AuditInput::PersistPoly { u0, nu, t } => {
            precondition(nu >= 0.0, "nu >= 0")?;
            precondition(t > 0.0, "t > 0")?;
            let ut = propagate(u0, t)?;
            let mut norm = |f: &GridFunction| -> Result<f64> {
                if nu == 0.0 {
                    Ok(f.norm_sq())
                } else {
                    let w = WeightSpec::PolyGrowth { nu };
                    growth_tail(f, &w, flags);
                    weighted_norm_sq(f, &w)
                }
            };
            let n = u0.grid().dim() as f64;
            let lhs = 0.5 * norm(&ut)?.ln();
            let pinned = (nu + 2.0) * 4f64.ln()
                + ln_gamma(0.5 * nu + n)
                + (1.0 + t.powf(0.25 * nu)).ln()
                + 0.5 * norm(u0)?.ln();
            Ok(single("norm", lhs, pinned, KnobEntry::None))
        }
        AuditInput::DerivSup { f, a, form, max_order } => {
            precondition(a > 0.0, "a > 0")?;
            precondition(max_order <= MAX_DERIVATIVE_ORDER, "max_order <= 6")?;
            plain_tail(f, flags);
            let n = f.grid().dim();
            let s = match form {
                DerivForm::Lemma { s } => {
                    precondition(s > 0.0, "s > 0")?;
                    s
                }
                DerivForm::Corollary { b } => {
                    precondition(b > 0.0, "b > 0")?;
                    2.0
                }
            };
            let half_w = 0.5 * log_fourier_weighted_norm_sq(f, a, s)?;
            let mut terms = Vec::new();
            for alpha in multi_indices(n, 0, max_order) {
                let order = alpha.iter().sum::<usize>();
                let d = spectral_derivative(f, &alpha)?;
                let sup = d.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
                let (pinned, knob) = match form {
                    DerivForm::Lemma { s } => {
                        let alpha_fact: f64 = alpha.iter().map(|&k| factorial_ln(k)).sum();
                        (
                            -((2 * order + 3 * n) as f64) / (2.0 * s) * a.ln() + alpha_fact / s + half_w,
                            KnobEntry::Power((order + 1) as f64),
                        )
                    }
                    DerivForm::Corollary { b } => (
                        factorial_ln(order) - order as f64 * b.ln() + half_w,
                        KnobEntry::Exp((1.0 + b * b) * (1.0 + 1.0 / a)),
                    ),
                };
                terms.push(Term { label: format!("alpha={alpha:?}"), lhs_ln: sup.ln(), pinned_ln: pinned, knob });
            }
            Ok(terms)
        }
        AuditInput::SmallnessAnnulus { f, a, j } => {
            precondition(a > 0.0, "a > 0")?;
            precondition(j >= 1, "j >= 1")?;
            check_theta(theta)?;
            plain_tail(f, flags);
            let n = f.grid().dim() as f64;
            let ann = annulus_masks(f.grid(), j + 1)?;
            let outer = integrate(f, Some(ann.shell(j + 1)), Integrand::SquaredModulus)?.ln();
            let inner = integrate(f, Some(ann.shell(j)), Integrand::SquaredModulus)?.ln();
            let w = log_fourier_weighted_norm_sq(f, a, 2.0)?;
            let pinned = (n - 1.0) * (1.0 - theta) * (j as f64).ln() + theta * inner + (1.0 - theta) * w;
            Ok(single("annulus", outer, pinned, KnobEntry::Exp(1.0 + 1.0 / a)))
        }
        AuditInput::RingChain { f, a, j } => {
            precondition(a > 0.0, "a > 0")?;
            precondition(j >= 1, "j >= 1")?;
            check_theta(theta)?;
            plain_tail(f, flags);
            let n = f.grid().dim() as f64;
            let ann = annulus_masks(f.grid(), j + 1)?;
            let outer = integrate(f, Some(ann.shell(j + 1)), Integrand::SquaredModulus)?.ln();
            let core = integrate(f, Some(ann.shell(1)), Integrand::SquaredModulus)?.ln();
            let w = log_fourier_weighted_norm_sq(f, a, 2.0)?;
            let tj = theta.powi(j as i32);
            let pinned = (n - 1.0) * (j as f64).ln() + tj * core + (1.0 - tj) * w;
            Ok(single("ring", outer, pinned, KnobEntry::Exp(1.0 + 1.0 / a)))
        }
        AuditInput::WeightedDecay { f, a, t, eps } => {
            precondition(a > 0.0, "a > 0")?;
            precondition(t > 0.0, "t > 0")?;
            precondition(eps > 0.0, "eps > 0")?;
            check_theta(theta)?;
            plain_tail(f, flags);
            let n = f.grid().dim();
            let grid = f.grid();
            let mut x = vec![0.0; n];
            let mut s = 0.0;
            for (j, v) in f.values().iter().enumerate() {
                grid.point(j, &mut x);
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                s += (-a * r).exp() * v.norm_sqr();
            }
            let lhs = (s * grid.cell_volume()).ln();
            let w = log_fourier_weighted_norm_sq(f, t, 2.0)?;
            let b1 = ball_energy_ln(f, 1.0)?;
            let pinned = ln_one_plus_gamma(a, n, a / (2.0 * ln_theta))
                + log_sum_exp(&[eps.ln() + w, eps.powf(-2.0 * ln_theta / a) + b1]);
            Ok(single("weighted", lhs, pinned, KnobEntry::Exp(1.0 + 1.0 / t + a)))
        }
        AuditInput::SeriesSum { a, b, theta: th } => {
            precondition(a > 0.0, "a > 0")?;
            precondition(b > 0.0 && b < 1.0, "b in (0, 1)")?;
            precondition(th > 0.0 && th < 1.0, "theta in (0, 1)")?;
            flags.raise(Flag::Interpretation);
            let lt = th.ln().abs();
            let lb = b.ln().abs();
            let lhs = series_partial_sum(a, b, th).ln();
            let rhs = a - lt.ln() + ln_gamma(a / lb) - (a / lt) * lb.ln();
            Ok(single("series", lhs, rhs, KnobEntry::None))
        }
        AuditInput::WeakInterpExp { u0, a, t, eps } => {
            precondition(a > 0.0, "a > 0")?;
            precondition(t > 0.0, "T > 0")?;
            precondition(eps > 0.0, "eps > 0")?;
            check_theta(theta)?;
            let n = u0.grid().dim();
            let w = WeightSpec::ExpGrowth { a, nu: 1.0 };
            growth_tail(u0, &w, flags);
            let ut = propagate(u0, t)?;
            let lhs = ln_norm_sq(&ut);
            let weighted = weighted_norm_sq(u0, &w)?.ln();
            let b1 = ball_energy_ln(&ut, 1.0)?;
            let pinned = 0.5 * ln_one_plus_gamma(a, n, a / (2.0 * ln_theta))
                + log_sum_exp(&[eps.ln() + weighted, -eps.ln() + eps.powf(-4.0 * ln_theta / a) + b1]);
            Ok(single("interp", lhs, pinned, KnobEntry::Exp(1.0 + 1.0 / t + a + a * a * t)))
        }
        AuditInput::WeakInterpPoly { u0, nu, t, eps } => {
            precondition(nu > 0.0 && nu <= 1.0, "nu in (0, 1]")?;
            precondition(t > 0.0, "T > 0")?;
            precondition(eps > 0.0 && eps < 1.0, "eps in (0, 1)")?;
            check_theta(theta)?;
            let w = WeightSpec::PolyGrowth { nu };
            growth_tail(u0, &w, flags);
            let ut = propagate(u0, t)?;
            let lhs = ln_norm_sq(&ut);
            let weighted = weighted_norm_sq(u0, &w)?.ln();
            let b1 = ball_energy_ln(&ut, 1.0)?;
            let inner_exp = ((3.0 * ln_theta + 1.0) * eps.powf(-1.0 / nu)).exp();
            let pinned = (1.0 + t.powf(0.5 * nu)).ln() + log_sum_exp(&[eps.ln() + weighted, inner_exp + b1]);
            Ok(single("interp", lhs, pinned, KnobEntry::Exp(1.0 + 1.0 / t)))
        }
        AuditInput::LocalRecovery { u0, t, r_inner, r_outer, quad } => {
            precondition(t > 0.0, "T > 0")?;
            precondition(r_inner > 0.0 && r_inner < r_outer, "0 < r' < r")?;
            check_quad(quad, t)?;
            plain_tail(u0, flags);
            let n = u0.grid().dim() as f64;
            let ut = propagate(u0, t)?;
            let lhs = ball_energy_ln(&ut, r_inner)?;
            let ball = rasterize(&SetSpec::centered_ball(u0.grid().dim(), r_outer), u0.grid())?;
            let den = space_time_observation(u0, &ball, quad)?.ln();
            let slope = n / (r_outer - r_inner).powi(2);
            Ok(single("local", lhs, den, KnobEntry::Affine { base: 1.0 / t, slope }))
        }
        AuditInput::SupportedObs { u0, t, r, m, quad } => {
            precondition(t > 0.0, "T > 0")?;
            precondition(r > 0.0 && m > r, "M > r > 0")?;
            check_quad(quad, t)?;
            let grid = u0.grid();
            let support = rasterize(&SetSpec::centered_ball(grid.dim(), r), grid)?;
            let escapes = u0.values().iter().zip(support.flags()).any(|(v, &inside)| !inside && v.norm() != 0.0);
            precondition(!escapes, "supp u0 within B_r")?;
            let n = grid.dim() as f64;
            let ut = propagate(u0, t)?;
            plain_tail(&ut, flags);
            let lhs = ln_norm_sq(&ut);
            let ball = rasterize(&SetSpec::centered_ball(grid.dim(), m), grid)?;
            let den = space_time_observation(u0, &ball, quad)?.ln();
            let slope = n / (m - r).powi(2);
            Ok(single("supported", lhs, den, KnobEntry::Affine { base: 1.0 / t, slope }))
        }
        AuditInput::ConcentratedObs { u0, t, r, m, quad } => {
            precondition(t > 0.0, "T > 0")?;
            precondition(r > 0.0 && m > 0.0, "r > 0 and M > 0")?;
            check_quad(quad, t)?;
            precondition(u0.values().iter().all(|v| v.im == 0.0 && v.re >= 0.0), "u0 >= 0")?;
            let grid = u0.grid();
            let n = grid.dim();
            let nf = n as f64;
            let total = integrate(u0, None, Integrand::Values)?;
            let ball_r = rasterize(&SetSpec::centered_ball(n, r), grid)?;
            let inside = integrate(u0, Some(&ball_r), Integrand::Values)?;
            precondition(total > 0.0 && inside > 0.0, "integral of u0 over B_r is positive")?;
            let mu = (inside / total).min(1.0 - f64::EPSILON);
            let ut = propagate(u0, t)?;
            plain_tail(&ut, flags);
            let lhs = ln_norm_sq(&ut);
            let ball_m = rasterize(&SetSpec::centered_ball(n, m), grid)?;
            let den = space_time_observation(u0, &ball_m, quad)?.ln();
            let ln_vn = 0.5 * nf * PI.ln() - ln_gamma(0.5 * nf + 1.0);
            let pinned = (0.5 * nf + 1.0) * 2f64.ln() + 0.5 * nf * PI.ln() + (0.5 * nf - 1.0) * t.ln()
                - ln_vn
                - nf * r.min(m).ln()
                - 2.0 * mu.ln()
                + 4.0 * r * r / t
                + den;
            Ok(vec![Term { label: format!("mu={mu}"), lhs_ln: lhs, pinned_ln: pinned, knob: KnobEntry::None }])
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTheta(theta))
    }
}

fn check_quad(quad: &TimeQuadrature, t: f64) -> Result<()> {
    if (quad.t_final - t).abs() > 1e-12 * t {
        return Err(Error::InvalidParameter("quadrature horizon differs from T".into()));
    }
    Ok(())
}

/// Evaluates both sides in log space at the descriptor's knobs.
pub fn audit_inequality(desc: &InequalityDescriptor, input: &AuditInput<'_>) -> Result<AuditReport> {
    if input.id() != desc.id {
        return Err(Error::PreconditionFailed(format!(
            "input for {} supplied to {}",
            input.id().as_str(),
            desc.id.as_str()
        )));
    }
    let params = input.params();
    let inputs_digest = input.digest();
    let c = desc.knobs.c;
    if desc.id.knob_name().is_some() && !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("generic constant {c} must be nonnegative")));
    }
    if let Some(f) = input.function() {
        f.check_finite()?;
        if f.is_zero() {
            return Ok(AuditReport {
                id: desc.id,
                params,
                inputs_digest,
                lhs: 0.0,
                rhs: 0.0,
                lhs_ln: f64::NEG_INFINITY,
                rhs_ln: f64::NEG_INFINITY,
                margin: 1.0,
                pinned_ln: f64::NEG_INFINITY,
                knob_ln: 0.0,
                knobs: desc.knobs,
                minimal_generic_constant: desc.id.knob_name().map(|_| 0.0),
                binding_term: "vacuous".into(),
                details: Vec::new(),
                flags: Flags::from(Flag::VacuousInput),
            });
        }
    }
    let mut flags = Flags::new();
    let terms = build_terms(desc, input, &mut flags)?;
    let mut binding = 0;
    let mut worst = f64::INFINITY;
    let mut details = Vec::new();
    let mut minimal: Option<f64> = None;
    for (i, term) in terms.iter().enumerate() {
        let m = margin_of(term.lhs_ln, term.rhs_ln(c));
        if m < worst || i == 0 {
            worst = m;
            binding = i;
        }
        if let Some(mc) = term.minimal_c() {
            minimal = Some(minimal.map_or(mc, |v: f64| v.max(mc)));
            if terms.len() > 1 {
                details.push((term.label.clone(), mc));
            }
        }
    }
    let term = &terms[binding];
    let rhs_ln = term.rhs_ln(c);
    let margin = margin_of(term.lhs_ln, rhs_ln);
    if term.lhs_ln == f64::NEG_INFINITY && rhs_ln == f64::NEG_INFINITY {
        flags.raise(Flag::VacuousInput);
    }
    if margin.is_nan() {
        flags.raise(Flag::Failed);
    }
    Ok(AuditReport {
        id: desc.id,
        params,
        inputs_digest,
        lhs: term.lhs_ln.exp(),
        rhs: rhs_ln.exp(),
        lhs_ln: term.lhs_ln,
        rhs_ln,
        margin,
        pinned_ln: term.pinned_ln,
        knob_ln: term.knob_ln(c),
        knobs: desc.knobs,
        minimal_generic_constant: minimal,
        binding_term: term.label.clone(),
        details,
        flags,
    })
}

/// Largest minimal knob over a probe set, at the descriptor's `θ`.
pub fn calibrate(desc: &InequalityDescriptor, probes: &[AuditInput<'_>]) -> Result<f64> {
    if desc.id.knob_name().is_none() {
        return Err(Error::InvalidParameter(format!("{} has no generic constant", desc.id.as_str())));
    }
    let mut best: f64 = 0.0;
    for p in probes {
        let r = audit_inequality(desc, p)?;
        if let Some(c) = r.minimal_generic_constant {
            best = best.max(c);
        }
    }
    Ok(best)
}
