//! Declarative experiment configs, deterministic parameter sweeps, and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::corollary_chain;
use crate::counterexample::{bound_threshold, counterexample_grid, ratio_bound_closed_form, ratio_numeric};
use crate::error::{Error, Result};
use crate::flags::{Flag, Flags};
use crate::grid::{make_grid, tail_flags, GridFunction, TorusGrid, TAIL_THRESHOLD};
use crate::heat::GaussianSolutionSpec;
use crate::observability::{
    interpolation_constant, obs_constant_estimate, time_quadrature, ObsOptions, QuadratureScheme, TimeQuadrature,
    TimeWindowSet,
};
use crate::sets::{rasterize, thickness_profile, IndicatorMask, SetSpec};
use crate::spectral::{random_bandlimited, spectral_constant_estimate, BandLimitSpec, SpectralOptions};
use crate::weak_obs::{audit_inequality, AuditInput, DerivForm, InequalityDescriptor, InequalityId, Knobs};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable read by the command-line tool for the worker count.
pub const WORKERS_ENV: &str = "HEATOBS_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Thickness,
    SpectralSweep,
    ObsEstimate,
    Interpolation,
    Counterexample,
    ConstantsChain,
    Audit,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Thickness => "thickness",
            ExperimentKind::SpectralSweep => "spectral-sweep",
            ExperimentKind::ObsEstimate => "obs-estimate",
            ExperimentKind::Interpolation => "interpolation",
            ExperimentKind::Counterexample => "counterexample",
            ExperimentKind::ConstantsChain => "constants-chain",
            ExperimentKind::Audit => "audit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ExperimentKind::Thickness,
            ExperimentKind::SpectralSweep,
            ExperimentKind::ObsEstimate,
            ExperimentKind::Interpolation,
            ExperimentKind::Counterexample,
            ExperimentKind::ConstantsChain,
            ExperimentKind::Audit,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub side: f64,
    pub m: usize,
}

fn default_nodes() -> usize {
    16
}

fn default_scheme() -> QuadratureScheme {
    QuadratureScheme::Trapezoid
}

fn default_theta() -> f64 {
    0.5
}

fn default_one() -> f64 {
    1.0
}

fn default_samples() -> usize {
    1
}

fn default_cells() -> usize {
    100
}

fn default_max_order() -> usize {
    3
}

/// Initial data for sampled experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// Heat-kernel profile at time `spread`; sample 0 is centered, later samples are shifted by up to 1 per axis.
    Gaussian {
        #[serde(default)]
        spread: f64,
    },
    RandomBandlimited { band: f64 },
    /// Gaussian profile cut off outside the centered ball of radius `radius`.
    TruncatedGaussian {
        #[serde(default)]
        spread: f64,
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivFormConfig {
    Lemma,
    Corollary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub inequality: InequalityId,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_one")]
    pub c: f64,
    pub data: Option<DataSpec>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub nu: Vec<f64>,
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub j: Vec<usize>,
    /// Fourier weight exponent of the lemma form.
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub r_outer: Vec<f64>,
    #[serde(default)]
    pub m: Vec<f64>,
    pub deriv_form: Option<DerivFormConfig>,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Thickness {
        scales: Vec<f64>,
    },
    SpectralSweep {
        bands: Vec<f64>,
    },
    ObsEstimate {
        t_values: Vec<f64>,
        #[serde(default = "default_scheme")]
        scheme: QuadratureScheme,
        #[serde(default = "default_nodes")]
        nodes: usize,
        /// Observation windows `[a, b] ⊂ (0, T)`; the whole interval when absent.
        windows: Option<Vec<(f64, f64)>>,
    },
    Interpolation {
        t_values: Vec<f64>,
        #[serde(default = "default_theta")]
        theta: f64,
        samples: usize,
        data: DataSpec,
    },
    Counterexample {
        t_final: f64,
        r: f64,
        r_outer: f64,
        ks: Vec<f64>,
        #[serde(default = "default_cells")]
        cells_per_unit: usize,
        #[serde(default = "default_scheme")]
        scheme: QuadratureScheme,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    ConstantsChain {
        gammas: Vec<f64>,
        scales: Vec<f64>,
        thetas: Vec<f64>,
        t_values: Vec<f64>,
        #[serde(default = "default_one")]
        generic_c: f64,
    },
    Audit(AuditConfig),
}

impl Experiment {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::Thickness { .. } => ExperimentKind::Thickness,
            Experiment::SpectralSweep { .. } => ExperimentKind::SpectralSweep,
            Experiment::ObsEstimate { .. } => ExperimentKind::ObsEstimate,
            Experiment::Interpolation { .. } => ExperimentKind::Interpolation,
            Experiment::Counterexample { .. } => ExperimentKind::Counterexample,
            Experiment::ConstantsChain { .. } => ExperimentKind::ConstantsChain,
            Experiment::Audit(_) => ExperimentKind::Audit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Dimension for experiments that size their own grids.
    pub n: Option<usize>,
    pub grid: Option<GridConfig>,
    pub set: Option<SetSpec>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        match value.get("schema_version") {
            Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
            Some(v) => return Err(Error::Config(format!("schema_version: unsupported value {v}"))),
            None => return Err(Error::Config("schema_version: missing".into())),
        }
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

fn field_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {e}"))
}

/// A report value.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_float(*v),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// Full-precision scientific notation, 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone)]
struct Row {
    key: Vec<f64>,
    cells: Vec<Cell>,
    flags: Flags,
    error: Option<String>,
    wall_ms: f64,
}

impl Row {
    fn failed(key: Vec<f64>, mut cells: Vec<Cell>, width: usize, e: &Error) -> Row {
        cells.resize(width, Cell::F(f64::NAN));
        Row { key, cells, flags: Flags::from(Flag::Failed), error: Some(e.to_string()), wall_ms: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub rows: usize,
    pub flagged_rows: usize,
    pub csv_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub timings_path: PathBuf,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    schema_version: u32,
    kind: &'a str,
    seed: u64,
    columns: &'a [&'a str],
    rows: usize,
    flagged_rows: usize,
    errors: Vec<(usize, String)>,
    config: &'a ExperimentConfig,
}

/// Seed of tuple `index`: the first word of the ChaCha stream `index` under the master seed.
pub fn tuple_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

fn build_grid(cfg: &ExperimentConfig) -> Result<TorusGrid> {
    let g = cfg.grid.ok_or_else(|| field_err("grid", "required for this experiment"))?;
    make_grid(g.n, g.side, g.m).map_err(|e| field_err("grid", e))
}

fn build_mask(cfg: &ExperimentConfig, grid: &TorusGrid) -> Result<IndicatorMask> {
    let spec = cfg.set.as_ref().ok_or_else(|| field_err("set", "required for this experiment"))?;
    rasterize(spec, grid).map_err(|e| field_err("set", e))
}

fn nonempty<T>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(field_err(field, "must not be empty"))
    } else {
        Ok(())
    }
}

/// Samples initial data number `sample` with its tuple seed.
pub fn sample_data(data: &DataSpec, grid: &TorusGrid, sample: usize, seed: u64) -> Result<GridFunction> {
    let n = grid.dim();
    let shifted_center = |spread: f64| -> Result<GridFunction> {
        let center = if sample == 0 {
            vec![0.0; n]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        GaussianSolutionSpec::new(center).sample(grid, spread)
    };
    match *data {
        DataSpec::Gaussian { spread } => shifted_center(spread),
        DataSpec::RandomBandlimited { band } => random_bandlimited(grid, BandLimitSpec::new(band), seed),
        DataSpec::TruncatedGaussian { spread, radius } => {
            let g = GaussianSolutionSpec::centered(n).sample(grid, spread)?;
            let ball = rasterize(&SetSpec::centered_ball(n, radius), grid)?;
            let values = g
                .values()
                .iter()
                .zip(ball.flags())
                .map(|(v, &inside)| if inside { *v } else { Default::default() })
                .collect();
            GridFunction::new(grid.clone(), values)
        }
    }
}

fn validate_data(data: &DataSpec) -> Result<()> {
    let ok = match *data {
        DataSpec::Gaussian { spread } => spread >= 0.0 && spread.is_finite(),
        DataSpec::RandomBandlimited { band } => band > 0.0 && band.is_finite(),
        DataSpec::TruncatedGaussian { spread, radius } => spread >= 0.0 && radius > 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(field_err("data", format!("out of range: {data:?}")))
    }
}

struct Plan {
    columns: Vec<&'static str>,
    rows: Vec<Row>,
}

fn timed(key: Vec<f64>, width: usize, prefix: Vec<Cell>, f: impl FnOnce() -> Result<(Vec<Cell>, Flags)>) -> Row {
    let start = Instant::now();
    let mut row = match f() {
        Ok((mut out, flags)) => {
            let mut cells = prefix;
            cells.append(&mut out);
            Row { key, cells, flags, error: None, wall_ms: 0.0 }
        }
        Err(e) => Row::failed(key, prefix, width - 1, &e),
    };
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

fn run_thickness(cfg: &ExperimentConfig, scales: &[f64]) -> Result<Plan> {
    nonempty("experiment.scales", scales)?;
    let grid = build_grid(cfg)?;
    let mask = build_mask(cfg, &grid)?;
    let columns = vec!["L", "gamma_min", "gamma_max", "gamma_mean", "gamma_uncertainty", "argmin_offset", "flags"];
    let w = columns.len();
    let rows = scales
        .par_iter()
        .map(|&l| {
            timed(vec![l], w, vec![Cell::F(l)], || {
                let r = thickness_profile(&mask, l)?;
                let offset = r.argmin_offset.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(":");
                Ok((
                    vec![
                        Cell::F(r.gamma_min),
                        Cell::F(r.gamma_max),
                        Cell::F(r.gamma_mean),
                        Cell::F(r.gamma_uncertainty),
                        Cell::S(offset),
                    ],
                    Flags::new(),
                ))
            })
        })
        .collect();
    Ok(Plan { columns, rows })
}

fn run_spectral(cfg: &ExperimentConfig, bands: &[f64], seed: u64) -> Result<Plan> {
    nonempty("experiment.bands", bands)?;
    let grid = build_grid(cfg)?;
    let mask = build_mask(cfg, &grid)?;
    for &b in bands {
        BandLimitSpec::new(b).validate(&grid).map_err(|e| field_err("experiment.bands", e))?;
    }
    let columns = vec!["N", "lambda_min", "C_est", "iterations", "residual", "flags"];
    let w = columns.len();
    let rows = bands
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let opts = SpectralOptions { seed: tuple_seed(seed, i as u64), ..SpectralOptions::default() };
            let start = Instant::now();
            let mut row = match spectral_constant_estimate(&mask, BandLimitSpec::new(n), &opts) {
                Ok(e) => Row {
                    key: vec![n],
                    cells: vec![
                        Cell::F(n),
                        Cell::F(1.0 / e.value),
                        Cell::F(e.value),
                        Cell::U(e.iterations as u64),
                        Cell::F(e.residual),
                    ],
                    flags: Flags::new(),
                    error: None,
                    wall_ms: 0.0,
                },
                Err(Error::ConstantEffectivelyInfinite { lambda_min }) => Row {
                    key: vec![n],
                    cells: vec![Cell::F(n), Cell::F(lambda_min), Cell::F(f64::INFINITY), Cell::Empty, Cell::Empty],
                    flags: Flags::from(Flag::Overflow),
                    error: Some(format!("lambda_min = {lambda_min:e} is below the resolution floor")),
                    wall_ms: 0.0,
                },
                Err(e) => Row::failed(vec![n], vec![Cell::F(n)], w - 1, &e),
            };
            row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            row
        })
        .collect();
    Ok(Plan { columns, rows })
}

fn obs_quadrature(t: f64, scheme: QuadratureScheme, nodes: usize, windows: Option<&[(f64, f64)]>) -> Result<TimeQuadrature> {
    let q = time_quadrature(t, scheme, nodes)?;
    match windows {
        Some(w) => q.restrict(&TimeWindowSet::new(t, w.to_vec())?),
        None => Ok(q),
    }
}

fn run_obs(
    cfg: &ExperimentConfig,
    t_values: &[f64],
    scheme: QuadratureScheme,
    nodes: usize,
    windows: Option<&[(f64, f64)]>,
    seed: u64,
) -> Result<Plan> {
    nonempty("experiment.t_values", t_values)?;
    let grid = build_grid(cfg)?;
    let mask = build_mask(cfg, &grid)?;
    for &t in t_values {
        obs_quadrature(t, scheme, nodes, windows).map_err(|e| field_err("experiment", e))?;
    }
    let columns = vec!["T", "nodes", "C_obs", "iterations", "residual", "shift", "cg_iterations", "flags"];
    let w = columns.len();
    let rows = t_values
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            timed(vec![t], w, vec![Cell::F(t)], || {
                let q = obs_quadrature(t, scheme, nodes, windows)?;
                let opts = ObsOptions { seed: tuple_seed(seed, i as u64), ..ObsOptions::default() };
                let e = obs_constant_estimate(&mask, t, &q, &opts)?;
                Ok((
                    vec![
                        Cell::U(q.nodes.len() as u64),
                        Cell::F(e.estimate.value),
                        Cell::U(e.estimate.iterations as u64),
                        Cell::F(e.estimate.residual),
                        Cell::F(e.shift),
                        Cell::U(e.cg_iterations as u64),
                    ],
                    e.flags,
                ))
            })
        })
        .collect();
    Ok(Plan { columns, rows })
}

fn run_interpolation(
    cfg: &ExperimentConfig,
    t_values: &[f64],
    theta: f64,
    samples: usize,
    data: &DataSpec,
    seed: u64,
) -> Result<Plan> {
    nonempty("experiment.t_values", t_values)?;
    if samples == 0 {
        return Err(field_err("experiment.samples", "must be positive"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(field_err("experiment.theta", Error::InvalidTheta(theta)));
    }
    validate_data(data)?;
    let grid = build_grid(cfg)?;
    let mask = build_mask(cfg, &grid)?;
    let tuples: Vec<(f64, usize)> = t_values.iter().flat_map(|&t| (0..samples).map(move |s| (t, s))).collect();
    let columns = vec!["T", "sample", "seed", "theta", "c", "flags"];
    let w = columns.len();
    let rows = tuples
        .par_iter()
        .enumerate()
        .map(|(i, &(t, s))| {
            let sd = tuple_seed(seed, i as u64);
            timed(vec![t, s as f64], w, vec![Cell::F(t), Cell::U(s as u64), Cell::U(sd), Cell::F(theta)], || {
                let u0 = sample_data(data, &grid, s, sd)?;
                let c = interpolation_constant(&u0, &mask, t, theta)?;
                Ok((vec![Cell::F(c)], tail_flags(&u0, TAIL_THRESHOLD)))
            })
        })
        .collect();
    Ok(Plan { columns, rows })
}

#[allow(clippy::too_many_arguments)]
fn run_counterexample(
    cfg: &ExperimentConfig,
    t_final: f64,
    r: f64,
    r_outer: f64,
    ks: &[f64],
    cells: usize,
    scheme: QuadratureScheme,
    nodes: usize,
) -> Result<Plan> {
    nonempty("experiment.ks", ks)?;
    let n = cfg.n.unwrap_or(1);
    if n == 0 {
        return Err(field_err("n", "must be positive"));
    }
    if cells == 0 {
        return Err(field_err("experiment.cells_per_unit", "must be positive"));
    }
    let quad = time_quadrature(t_final, scheme, nodes).map_err(|e| field_err("experiment.t_final", e))?;
    if !(r > 0.0 && r_outer > r) {
        return Err(field_err("experiment.r_outer", Error::InvalidRadii(format!("need 0 < r < r', got {r}, {r_outer}"))));
    }
    let threshold = bound_threshold(n, t_final, r, r_outer);
    let columns = vec!["k", "num", "den", "ratio", "closed_form_bound", "flags"];
    let w = columns.len();
    let rows = ks
        .par_iter()
        .map(|&k| {
            timed(vec![k], w, vec![Cell::F(k)], || {
                let grid = counterexample_grid(n, k, cells)?;
                let out = ratio_numeric(n, t_final, r, r_outer, k, &grid, &quad)?;
                let bound = if k > threshold { ratio_bound_closed_form(n, t_final, r, r_outer, k)? } else { f64::NAN };
                Ok((vec![Cell::F(out.num), Cell::F(out.den), Cell::F(out.ratio), Cell::F(bound)], out.flags))
            })
        })
        .collect();
    Ok(Plan { columns, rows })
}

fn run_chain(
    cfg: &ExperimentConfig,
    gammas: &[f64],
    scales: &[f64],
    thetas: &[f64],
    t_values: &[f64],
    generic_c: f64,
) -> Result<Plan> {
    for (name, v) in [
        ("experiment.gammas", gammas),
        ("experiment.scales", scales),
        ("experiment.thetas", thetas),
        ("experiment.t_values", t_values),
    ] {
        nonempty(name, v)?;
    }
    let n = cfg.n.unwrap_or(1);
    let mut tuples = Vec::new();
    for &g in gammas {
        for &l in scales {
            for &th in thetas {
                for &t in t_values {
                    tuples.push([g, l, th, t]);
                }
            }
        }
    }
    let columns = vec![
        "gamma",
        "L",
        "theta",
        "T",
        "c_spec",
        "c_hold",
        "ln_c_obs",
        "c_hold_corollary",
        "ln_c_obs_corollary",
        "flags",
    ];
    let w = columns.len();
    let rows = tuples
        .par_iter()
        .map(|&[g, l, th, t]| {
            timed(vec![g, l, th, t], w, vec![Cell::F(g), Cell::F(l), Cell::F(th), Cell::F(t)], || {
                let c = corollary_chain(n, g, l, th, t, generic_c)?;
                Ok((
                    vec![
                        Cell::F(c.c_spec),
                        Cell::F(c.c_hold),
                        Cell::F(c.c_obs.ln),
                        Cell::F(c.c_hold_corollary),
                        Cell::F(c.c_obs_corollary.ln),
                    ],
                    c.flags,
                ))
            })
        })
        .collect();
    Ok(Plan { columns, rows })
}

/// One point of an audit sweep; unused fields keep their defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditTuple {
    pub a: f64,
    pub nu: f64,
    pub t: f64,
    pub eps: f64,
    pub j: usize,
    pub s: f64,
    pub b: f64,
    pub r: f64,
    pub r_outer: f64,
    pub m: f64,
    pub sample: usize,
}

/// Parameter names each inequality depends on, in sweep order.
pub fn audit_parameters(id: InequalityId, form: DerivFormConfig) -> &'static [&'static str] {
    match id {
        InequalityId::PersistExp => &["a", "nu", "t"],
        InequalityId::PersistPoly => &["nu", "t"],
        InequalityId::DerivSup => match form {
            DerivFormConfig::Lemma => &["a", "s"],
            DerivFormConfig::Corollary => &["a", "b"],
        },
        InequalityId::SmallnessAnnulus | InequalityId::RingChain => &["a", "j"],
        InequalityId::WeightedDecay | InequalityId::WeakInterpExp => &["a", "t", "eps"],
        InequalityId::SeriesSum => &["a", "b"],
        InequalityId::WeakInterpPoly => &["nu", "t", "eps"],
        InequalityId::LocalRecovery => &["t", "r", "r_outer"],
        InequalityId::SupportedObs | InequalityId::ConcentratedObs => &["t", "r", "m"],
    }
}

fn audit_list(cfg: &AuditConfig, name: &str) -> Vec<f64> {
    let (v, default): (Vec<f64>, f64) = match name {
        "a" => (cfg.a.clone(), 1.0),
        "nu" => (cfg.nu.clone(), 1.0),
        "t" => (cfg.t.clone(), 1.0),
        "eps" => (cfg.eps.clone(), 0.5),
        "j" => (cfg.j.iter().map(|&j| j as f64).collect(), 1.0),
        "s" => (cfg.s.clone(), 2.0),
        "b" => (cfg.b.clone(), 0.5),
        "r" => (cfg.r.clone(), 1.0),
        "r_outer" => (cfg.r_outer.clone(), 2.0),
        "m" => (cfg.m.clone(), 2.0),
        _ => unreachable!("unknown audit parameter {name}"),
    };
    if v.is_empty() {
        vec![default]
    } else {
        v
    }
}

/// Cartesian product of the relevant parameter lists and the sample index.
pub fn audit_tuples(cfg: &AuditConfig) -> Vec<AuditTuple> {
    let form = cfg.deriv_form.unwrap_or(DerivFormConfig::Lemma);
    let names = audit_parameters(cfg.inequality, form);
    let lists: Vec<Vec<f64>> = names.iter().map(|n| audit_list(cfg, n)).collect();
    let samples = if cfg.inequality == InequalityId::SeriesSum { 1 } else { cfg.samples.max(1) };
    let base = AuditTuple {
        a: 1.0,
        nu: 1.0,
        t: 1.0,
        eps: 0.5,
        j: 1,
        s: 2.0,
        b: 0.5,
        r: 1.0,
        r_outer: 2.0,
        m: 2.0,
        sample: 0,
    };
    let mut out = vec![base];
    for (name, list) in names.iter().zip(&lists) {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for t in &out {
            for &v in list {
                let mut t = *t;
                match *name {
                    "a" => t.a = v,
                    "nu" => t.nu = v,
                    "t" => t.t = v,
                    "eps" => t.eps = v,
                    "j" => t.j = v as usize,
                    "s" => t.s = v,
                    "b" => t.b = v,
                    "r" => t.r = v,
                    "r_outer" => t.r_outer = v,
                    "m" => t.m = v,
                    _ => unreachable!(),
                }
                next.push(t);
            }
        }
        out = next;
    }
    out.into_iter().flat_map(|t| (0..samples).map(move |s| AuditTuple { sample: s, ..t })).collect()
}

/// Runs the audit for one tuple on prepared data.
pub fn audit_tuple(
    desc: &InequalityDescriptor,
    cfg: &AuditConfig,
    tuple: &AuditTuple,
    u0: Option<&GridFunction>,
) -> Result<crate::weak_obs::AuditReport> {
    let need = || u0.ok_or_else(|| Error::InvalidParameter("audit requires data".into()));
    let quad = |t: f64| time_quadrature(t, QuadratureScheme::Trapezoid, cfg.nodes);
    let tp = *tuple;
    let form = match cfg.deriv_form.unwrap_or(DerivFormConfig::Lemma) {
        DerivFormConfig::Lemma => DerivForm::Lemma { s: tp.s },
        DerivFormConfig::Corollary => DerivForm::Corollary { b: tp.b },
    };
    let q;
    let input = match cfg.inequality {
        InequalityId::PersistExp => AuditInput::PersistExp { u0: need()?, a: tp.a, nu: tp.nu, t: tp.t },
        InequalityId::PersistPoly => AuditInput::PersistPoly { u0: need()?, nu: tp.nu, t: tp.t },
        InequalityId::DerivSup => AuditInput::DerivSup { f: need()?, a: tp.a, form, max_order: cfg.max_order },
        InequalityId::SmallnessAnnulus => AuditInput::SmallnessAnnulus { f: need()?, a: tp.a, j: tp.j },
        InequalityId::RingChain => AuditInput::RingChain { f: need()?, a: tp.a, j: tp.j },
        InequalityId::WeightedDecay => AuditInput::WeightedDecay { f: need()?, a: tp.a, t: tp.t, eps: tp.eps },
        InequalityId::SeriesSum => AuditInput::SeriesSum { a: tp.a, b: tp.b, theta: desc.knobs.theta },
        InequalityId::WeakInterpExp => AuditInput::WeakInterpExp { u0: need()?, a: tp.a, t: tp.t, eps: tp.eps },
        InequalityId::WeakInterpPoly => AuditInput::WeakInterpPoly { u0: need()?, nu: tp.nu, t: tp.t, eps: tp.eps },
        InequalityId::LocalRecovery => {
            q = quad(tp.t)?;
            AuditInput::LocalRecovery { u0: need()?, t: tp.t, r_inner: tp.r, r_outer: tp.r_outer, quad: &q }
        }
        InequalityId::SupportedObs => {
            q = quad(tp.t)?;
            AuditInput::SupportedObs { u0: need()?, t: tp.t, r: tp.r, m: tp.m, quad: &q }
        }
        InequalityId::ConcentratedObs => {
            q = quad(tp.t)?;
            AuditInput::ConcentratedObs { u0: need()?, t: tp.t, r: tp.r, m: tp.m, quad: &q }
        }
    };
    audit_inequality(desc, &input)
}

fn run_audit(cfg: &ExperimentConfig, ac: &AuditConfig, seed: u64) -> Result<Plan> {
    let id = ac.inequality;
    let desc = InequalityDescriptor::with_knobs(id, Knobs { theta: ac.theta, c: ac.c });
    if id.uses_theta() || id == InequalityId::SeriesSum {
        if !(ac.theta > 0.0 && ac.theta < 1.0) {
            return Err(field_err("experiment.theta", Error::InvalidTheta(ac.theta)));
        }
    }
    if !(ac.c >= 0.0 && ac.c.is_finite()) {
        return Err(field_err("experiment.c", "must be finite and nonnegative"));
    }
    let needs_data = id != InequalityId::SeriesSum;
    let grid = if needs_data { Some(build_grid(cfg)?) } else { None };
    let data = if needs_data {
        let d = ac.data.ok_or_else(|| field_err("experiment.data", "required for this inequality"))?;
        validate_data(&d)?;
        Some(d)
    } else {
        None
    };
    let form = ac.deriv_form.unwrap_or(DerivFormConfig::Lemma);
    let names = audit_parameters(id, form);
    let tuples = audit_tuples(ac);
    let mut columns: Vec<&'static str> = vec!["inequality", "sample"];
    columns.extend_from_slice(names);
    columns.extend_from_slice(&[
        "lhs",
        "rhs",
        "margin",
        "pinned_ln",
        "knob_ln",
        "minimal_generic_constant",
        "binding_term",
        "inputs_digest",
        "flags",
    ]);
    let w = columns.len();
    let rows = tuples
        .par_iter()
        .map(|tp| {
            let values: Vec<f64> = names
                .iter()
                .map(|&n| match n {
                    "a" => tp.a,
                    "nu" => tp.nu,
                    "t" => tp.t,
                    "eps" => tp.eps,
                    "j" => tp.j as f64,
                    "s" => tp.s,
                    "b" => tp.b,
                    "r" => tp.r,
                    "r_outer" => tp.r_outer,
                    "m" => tp.m,
                    _ => unreachable!(),
                })
                .collect();
            let mut key = values.clone();
            key.push(tp.sample as f64);
            let mut prefix = vec![Cell::S(id.as_str().into()), Cell::U(tp.sample as u64)];
            prefix.extend(values.iter().map(|&v| Cell::F(v)));
            // The data depend on the sample only, so equal samples share a seed across parameters.
            let sd = tuple_seed(seed, tp.sample as u64);
            timed(key, w, prefix, || {
                let u0 = match (&grid, &data) {
                    (Some(g), Some(d)) => Some(sample_data(d, g, tp.sample, sd)?),
                    _ => None,
                };
                let rep = audit_tuple(&desc, ac, tp, u0.as_ref())?;
                let mut flags = rep.flags.clone();
                if !rep.holds() && flags.is_clean() {
                    flags.raise(Flag::Failed);
                }
                Ok((
                    vec![
                        Cell::F(rep.lhs),
                        Cell::F(rep.rhs),
                        Cell::F(rep.margin),
                        Cell::F(rep.pinned_ln),
                        Cell::F(rep.knob_ln),
                        rep.minimal_generic_constant.map_or(Cell::Empty, Cell::F),
                        Cell::S(rep.binding_term),
                        Cell::S(rep.inputs_digest),
                    ],
                    flags,
                ))
            })
        })
        .collect();
    Ok(Plan { columns, rows })
}

/// Runs `cfg` on a pool of `workers` threads (0 for all logical cores) and writes
/// `<kind>.csv`, `<kind>.json` and `<kind>.timings.csv` into `out_dir`.
pub fn run_config(cfg: &ExperimentConfig, out_dir: &Path, seed: u64, workers: usize) -> Result<RunSummary> {
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(field_err("schema_version", format!("unsupported value {}", cfg.schema_version)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))?;
    let kind = cfg.experiment.kind();
    let mut plan = pool.install(|| match &cfg.experiment {
        Experiment::Thickness { scales } => run_thickness(cfg, scales),
        Experiment::SpectralSweep { bands } => run_spectral(cfg, bands, seed),
        Experiment::ObsEstimate { t_values, scheme, nodes, windows } => {
            run_obs(cfg, t_values, *scheme, *nodes, windows.as_deref(), seed)
        }
        Experiment::Interpolation { t_values, theta, samples, data } => {
            run_interpolation(cfg, t_values, *theta, *samples, data, seed)
        }
        Experiment::Counterexample { t_final, r, r_outer, ks, cells_per_unit, scheme, nodes } => {
            run_counterexample(cfg, *t_final, *r, *r_outer, ks, *cells_per_unit, *scheme, *nodes)
        }
        Experiment::ConstantsChain { gammas, scales, thetas, t_values, generic_c } => {
            run_chain(cfg, gammas, scales, thetas, t_values, *generic_c)
        }
        Experiment::Audit(ac) => run_audit(cfg, ac, seed),
    })?;
    plan.rows.sort_by(|x, y| {
        x.key.iter().zip(&y.key).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    write_report(cfg, kind, &plan, out_dir, seed)
}

fn write_report(cfg: &ExperimentConfig, kind: ExperimentKind, plan: &Plan, out_dir: &Path, seed: u64) -> Result<RunSummary> {
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", kind.as_str()));
    let sidecar_path = out_dir.join(format!("{}.json", kind.as_str()));
    let timings_path = out_dir.join(format!("{}.timings.csv", kind.as_str()));
    let io = |e: csv::Error| Error::Io(e.to_string());

    let mut w = csv::Writer::from_path(&csv_path).map_err(io)?;
    w.write_record(&plan.columns).map_err(io)?;
    let mut flagged = 0;
    let mut errors = Vec::new();
    for (i, row) in plan.rows.iter().enumerate() {
        let mut rec: Vec<String> = row.cells.iter().map(Cell::render).collect();
        rec.push(row.flags.to_string());
        w.write_record(&rec).map_err(io)?;
        if !row.flags.is_clean() {
            flagged += 1;
        }
        if let Some(e) = &row.error {
            errors.push((i, e.clone()));
        }
    }
    w.flush()?;

    let mut t = csv::Writer::from_path(&timings_path).map_err(io)?;
    t.write_record(["row", "wall_ms"]).map_err(io)?;
    for (i, row) in plan.rows.iter().enumerate() {
        t.write_record([i.to_string(), format!("{:.3}", row.wall_ms)]).map_err(io)?;
    }
    t.flush()?;

    let side = Sidecar {
        schema_version: SCHEMA_VERSION,
        kind: kind.as_str(),
        seed,
        columns: &plan.columns,
        rows: plan.rows.len(),
        flagged_rows: flagged,
        errors,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&sidecar_path, json + "\n")?;

    Ok(RunSummary { kind, rows: plan.rows.len(), flagged_rows: flagged, csv_path, sidecar_path, timings_path })
}

/// Column choices for plot files, per report kind.
fn plot_columns(kind: ExperimentKind) -> (&'static [&'static str], bool) {
    // The flag marks reports whose second column is plotted on a log scale.
    match kind {
        ExperimentKind::SpectralSweep => (&["N", "C_est"], true),
        ExperimentKind::Counterexample => (&["k", "ratio", "closed_form_bound"], false),
        ExperimentKind::ConstantsChain => (&["gamma", "ln_c_obs"], false),
        ExperimentKind::Thickness => (&["L", "gamma_min"], false),
        ExperimentKind::ObsEstimate => (&["T", "C_obs"], true),
        ExperimentKind::Interpolation => (&["sample", "c"], false),
        ExperimentKind::Audit => (&["sample", "margin"], true),
    }
}

/// Reads `<report>.csv` and its JSON sidecar and writes a whitespace-separated numeric file.
///
/// Rows with a non-finite plotted value are dropped. Returns the path written.
pub fn emit_plot_data(report_csv: &Path, out_dir: &Path) -> Result<PathBuf> {
    let sidecar = report_csv.with_extension("json");
    let meta: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(&sidecar).map_err(|e| Error::Config(format!("{}: {e}", sidecar.display())))?,
    )
    .map_err(|e| Error::Config(format!("{}: {e}", sidecar.display())))?;
    let kind = meta
        .get("kind")
        .and_then(|k| k.as_str())
        .and_then(ExperimentKind::parse)
        .ok_or_else(|| Error::Config(format!("{}: missing or unknown kind", sidecar.display())))?;
    let mut rdr =
        csv::Reader::from_path(report_csv).map_err(|e| Error::Config(format!("{}: {e}", report_csv.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
    let (cols, log_second) = plot_columns(kind);
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == *c).ok_or_else(|| Error::Config(format!("report lacks column {c}")))
        })
        .collect::<Result<_>>()?;
    let mut body = String::new();
    let mut count = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let mut vals = Vec::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            let v: f64 = rec.get(i).unwrap_or("").parse().unwrap_or(f64::NAN);
            vals.push(if k == 1 && log_second { v.ln() } else { v });
        }
        if !vals[1].is_finite() {
            continue;
        }
        let line: Vec<String> = vals.iter().map(|&v| format_float(v)).collect();
        let _ = writeln!(body, "{}", line.join(" "));
        count += 1;
    }
    if count == 0 {
        return Err(Error::Config(format!("{}: report has no plottable rows", report_csv.display())));
    }
    fs::create_dir_all(out_dir)?;
    let mut header = String::from("#");
    for (k, c) in cols.iter().enumerate() {
        if k == 1 && log_second {
            let _ = write!(header, " ln_{c}");
        } else {
            let _ = write!(header, " {c}");
        }
    }
    let path = out_dir.join(format!("{}.dat", kind.as_str()));
    fs::write(&path, format!("{header}\n{body}"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_tuple() {
        assert_ne!(tuple_seed(1, 0), tuple_seed(1, 1));
        assert_eq!(tuple_seed(7, 3), tuple_seed(7, 3));
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn schema_checked_first() {
        let e = ExperimentConfig::from_toml_str("schema_version = 9\n").unwrap_err();
        assert!(e.to_string().contains("schema_version"));
    }
}
