//! Declarative subsets of the torus, their rasterization, and the sliding-window thickness analyzer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    FullSpace,
    /// Open ball `|x - center| < radius`.
    Ball { center: Vec<f64>, radius: f64 },
    /// Half-open box `corner ≤ x < corner + sides`.
    Box { corner: Vec<f64>, sides: Vec<f64> },
    /// `(x_axis - phase) mod period < width`.
    PeriodicStripes { axis: usize, width: f64, period: f64, phase: f64 },
    /// `cell` tested on the representative of `x` in `[-period/2, period/2)^n`.
    PeriodicPattern { cell: Box<SetSpec>, period: f64 },
    Union { sets: Vec<SetSpec> },
    Intersection { sets: Vec<SetSpec> },
    Complement { set: Box<SetSpec> },
}

impl SetSpec {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        SetSpec::Ball { center, radius }
    }

    pub fn centered_ball(n: usize, radius: f64) -> Self {
        SetSpec::Ball { center: vec![0.0; n], radius }
    }

    pub fn stripes(axis: usize, width: f64, period: f64) -> Self {
        SetSpec::PeriodicStripes { axis, width, period, phase: 0.0 }
    }

    pub fn complement(spec: SetSpec) -> Self {
        SetSpec::Complement { set: Box::new(spec) }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            SetSpec::FullSpace => Ok(()),
            SetSpec::Ball { center, radius } => {
                if center.len() != n {
                    return bad(format!("ball center has {} coordinates, expected {n}", center.len()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("ball radius {radius} must be positive"));
                }
                Ok(())
            }
            SetSpec::Box { corner, sides } => {
                if corner.len() != n || sides.len() != n {
                    return bad(format!("box needs {n} corner and side entries"));
                }
                if sides.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return bad("box sides must be positive".into());
                }
                Ok(())
            }
            SetSpec::PeriodicStripes { axis, width, period, phase } => {
                if *axis >= n {
                    return bad(format!("stripe axis {axis} out of range for dimension {n}"));
                }
                if !(period.is_finite() && *period > 0.0 && width.is_finite() && *width > 0.0) {
                    return bad("stripe width and period must be positive".into());
                }
                if width > period {
                    return bad(format!("stripe width {width} exceeds period {period}"));
                }
                if !phase.is_finite() {
                    return bad("stripe phase must be finite".into());
                }
                Ok(())
            }
            SetSpec::PeriodicPattern { cell, period } => {
                if !(period.is_finite() && *period > 0.0) {
                    return bad(format!("pattern period {period} must be positive"));
                }
                cell.validate(n)
            }
            SetSpec::Union { sets } | SetSpec::Intersection { sets } => {
                sets.iter().try_for_each(|s| s.validate(n))
            }
            SetSpec::Complement { set } => set.validate(n),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            SetSpec::FullSpace => true,
            SetSpec::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                d2 < radius * radius
            }
            SetSpec::Box { corner, sides } => x
                .iter()
                .zip(corner.iter().zip(sides))
                .all(|(&a, (&c, &s))| a >= c && a < c + s),
            SetSpec::PeriodicStripes { axis, width, period, phase } => {
                (x[*axis] - phase).rem_euclid(*period) < *width
            }
            SetSpec::PeriodicPattern { cell, period } => {
                let y: Vec<f64> = x.iter().map(|&a| (a + 0.5 * period).rem_euclid(*period) - 0.5 * period).collect();
                cell.contains(&y)
            }
            SetSpec::Union { sets } => sets.iter().any(|s| s.contains(x)),
            SetSpec::Intersection { sets } => sets.iter().all(|s| s.contains(x)),
            SetSpec::Complement { set } => !set.contains(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMask {
    grid: TorusGrid,
    flags: Vec<bool>,
}

impl IndicatorMask {
    pub fn new(grid: TorusGrid, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != grid.len() {
            return Err(Error::InvalidGrid(format!("mask has {} cells, grid has {}", flags.len(), grid.len())));
        }
        Ok(IndicatorMask { grid, flags })
    }

    pub fn full(grid: &TorusGrid) -> Self {
        IndicatorMask { grid: grid.clone(), flags: vec![true; grid.len()] }
    }

    pub fn empty(grid: &TorusGrid) -> Self {
        IndicatorMask { grid: grid.clone(), flags: vec![false; grid.len()] }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }

    /// `h^n · #true`.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    pub fn volume_fraction(&self) -> f64 {
        self.count() as f64 / self.flags.len() as f64
    }

    pub fn complement(&self) -> Self {
        IndicatorMask { grid: self.grid.clone(), flags: self.flags.iter().map(|b| !b).collect() }
    }

    pub fn union(&self, other: &IndicatorMask) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let flags = self.flags.iter().zip(&other.flags).map(|(a, b)| *a || *b).collect();
        Ok(IndicatorMask { grid: self.grid.clone(), flags })
    }

    pub fn intersection(&self, other: &IndicatorMask) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let flags = self.flags.iter().zip(&other.flags).map(|(a, b)| *a && *b).collect();
        Ok(IndicatorMask { grid: self.grid.clone(), flags })
    }

    pub fn is_subset_of(&self, other: &IndicatorMask) -> bool {
        self.grid == other.grid && self.flags.iter().zip(&other.flags).all(|(a, b)| !a || *b)
    }
}

/// Cell-center membership.
pub fn rasterize(spec: &SetSpec, grid: &TorusGrid) -> Result<IndicatorMask> {
    spec.validate(grid.dim())?;
    let mut x = vec![0.0; grid.dim()];
    let flags = (0..grid.len())
        .map(|j| {
            grid.point(j, &mut x);
            spec.contains(&x)
        })
        .collect();
    Ok(IndicatorMask { grid: grid.clone(), flags })
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThicknessReport {
    pub l: f64,
    /// Cells per window side.
    pub window_cells: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_mean: f64,
    /// `n · 2h / L`.
    pub gamma_uncertainty: f64,
    /// Lower corner of a minimizing window, as grid indices.
    pub argmin_offset: Vec<usize>,
    /// Window counts binned by density over `[0, 1]`.
    pub histogram: [u64; HISTOGRAM_BINS],
}

/// Cyclic window sums of width `w` along every axis.
pub(crate) fn window_counts(mask: &IndicatorMask, w: usize) -> Vec<u32> {
    let grid = mask.grid();
    let n = grid.dim();
    let m = grid.samples_per_dim();
    let total = grid.len();
    let mut counts: Vec<u32> = mask.flags().iter().map(|&b| b as u32).collect();
    let mut line = vec![0u32; m];
    for axis in 0..n {
        let stride = m.pow((n - 1 - axis) as u32);
        let outer = total / (m * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * m * stride + inner;
                for (i, l) in line.iter_mut().enumerate() {
                    *l = counts[base + i * stride];
                }
                let mut s: u32 = line[..w].iter().sum();
                for i in 0..m {
                    counts[base + i * stride] = s;
                    s = s + line[(i + w) % m] - line[i];
                }
            }
        }
    }
    counts
}

/// Minimal window density `|E ∩ (x + LQ)| / L^n` over grid-aligned offsets with periodic wrap.
///
/// Windows span `w = round(L/h)` cells per axis and densities are `count / w^n`.
pub fn thickness_profile(mask: &IndicatorMask, l: f64) -> Result<ThicknessReport> {
    let grid = mask.grid();
    let h = grid.spacing();
    if !(l.is_finite() && l >= 2.0 * h) {
        return Err(Error::ScaleTooFine { l, h });
    }
    if l > grid.side() {
        return Err(Error::ScaleTooCoarse { l, side: grid.side() });
    }
    let n = grid.dim();
    let w = ((l / h).round() as usize).clamp(2, grid.samples_per_dim());
    let counts = window_counts(mask, w);
    let cells = (w as f64).powi(n as i32);
    let (mut min_c, mut min_j, mut max_c, mut sum) = (u32::MAX, 0usize, 0u32, 0f64);
    let mut histogram = [0u64; HISTOGRAM_BINS];
    for (j, &c) in counts.iter().enumerate() {
        if c < min_c {
            min_c = c;
            min_j = j;
        }
        max_c = max_c.max(c);
        sum += c as f64;
        let d = c as f64 / cells;
        let bin = ((d * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    let mut argmin_offset = vec![0; n];
    grid.multi_index(min_j, &mut argmin_offset);
    Ok(ThicknessReport {
        l,
        window_cells: w,
        gamma_min: (min_c as f64 / cells).clamp(0.0, 1.0),
        gamma_max: (max_c as f64 / cells).clamp(0.0, 1.0),
        gamma_mean: sum / (counts.len() as f64 * cells),
        gamma_uncertainty: n as f64 * 2.0 * h / l,
        argmin_offset,
        histogram,
    })
}

pub fn is_thick(mask: &IndicatorMask, gamma: f64, l: f64, tol: f64) -> Result<bool> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidThickness(gamma));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be nonnegative")));
    }
    Ok(thickness_profile(mask, l)?.gamma_min >= gamma - tol)
}
