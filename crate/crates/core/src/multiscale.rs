//! Multiscale sums of β²: Jones-function profiles on a geometric scale grid,
//! Carleson sums with an atom quadrature over the set, least-squares growth
//! fits and β-floor scans over four-corner stages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beta::{beta2, beta2_budget, BetaError};
use crate::fourcorner::{build_4corner_ek, FourCornerError};
use crate::geom::{Point2, SegmentSet};
use crate::snowflake::Representation;
use crate::source::Composite;
use crate::tree::{Atom, TreeError, DEFAULT_NODE_BUDGET};

pub const DEFAULT_REL_TOL: f64 = 1e-4;
pub const MAX_ATOMS: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum MultiscaleError {
    #[error("scale ratio must exceed 1, got {0}")]
    BadRatio(f64),
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("outer gap must be positive, got {0}")]
    BadGap(f64),
    #[error("a fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Beta(#[from] BetaError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    FourCorner(#[from] FourCornerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub m: u32,
    pub r: f64,
    pub beta_sq: f64,
    pub err: f64,
    pub mass_in_ball: f64,
    /// Running sum `Σ_{m' <= m} β² ln ρ`.
    pub partial_sum: f64,
}

/// `∫_0^δ β²(x, r) dr/r` discretized on `r_m = δ ρ^{-m}`, `m = 0..=m_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JonesProfile {
    pub x: Point2,
    pub delta: f64,
    pub ratio: f64,
    pub samples: Vec<ProfileSample>,
    pub partial_sum: f64,
    /// Size of the next term if β² stayed at its last value.
    pub tail_estimate: f64,
    /// `Σ err · ln ρ`, the certified error of `partial_sum`.
    pub err: f64,
}

fn check_grid(delta: f64, ratio: f64) -> Result<(), MultiscaleError> {
    if !(ratio > 1.0 && ratio.is_finite()) {
        return Err(MultiscaleError::BadRatio(ratio));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(MultiscaleError::BadRadius(delta));
    }
    Ok(())
}

pub fn jones_profile(
    source: &Composite,
    x: Point2,
    delta: f64,
    ratio: f64,
    m_max: u32,
    rel_tol: f64,
) -> Result<JonesProfile, MultiscaleError> {
    jones_profile_budget(source, x, delta, ratio, m_max, rel_tol, DEFAULT_NODE_BUDGET)
}

pub fn jones_profile_budget(
    source: &Composite,
    x: Point2,
    delta: f64,
    ratio: f64,
    m_max: u32,
    rel_tol: f64,
    node_budget: u64,
) -> Result<JonesProfile, MultiscaleError> {
    check_grid(delta, ratio)?;
    let ln = ratio.ln();
    let mut samples = Vec::with_capacity(m_max as usize + 1);
    let (mut sum, mut err) = (0.0, 0.0);
    for m in 0..=m_max {
        let r = delta * ratio.powi(-(m as i32));
        let b = beta2_budget(source, x, r, rel_tol, node_budget)?;
        sum += b.beta_sq * ln;
        err += b.err * ln;
        samples.push(ProfileSample { m, r, beta_sq: b.beta_sq, err: b.err, mass_in_ball: b.mass_in_ball, partial_sum: sum });
    }
    let tail_estimate = samples.last().map_or(0.0, |s| s.beta_sq * ln);
    Ok(JonesProfile { x, delta, ratio, samples, partial_sum: sum, tail_estimate, err })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlesonSample {
    pub at: Point2,
    pub weight: f64,
    pub inner_sum: f64,
    pub inner_err: f64,
}

/// `∫_{B(x,R)} ∫_0^R β²(y, r) dr/r dH¹(y)` by atom quadrature in `y` and
/// the Jones grid `r_m = R ρ^{-m}` in `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonEstimate {
    pub x: Point2,
    pub radius: f64,
    pub value: f64,
    pub outer_gap: f64,
    pub ratio: f64,
    pub m_max: u32,
    pub samples: Vec<CarlesonSample>,
    /// Certified error from β truncation only; quadrature error is not included.
    pub err_budget: f64,
}

impl CarlesonEstimate {
    pub fn total_weight(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum()
    }
}

/// Quadrature atoms of `outer` lying in the open ball `B(x, R)`.
pub fn outer_atoms(outer: &Composite, x: Point2, radius: f64, outer_gap: f64) -> Result<Vec<Atom>, MultiscaleError> {
    if !(outer_gap > 0.0) {
        return Err(MultiscaleError::BadGap(outer_gap));
    }
    Ok(outer.atoms(outer_gap, MAX_ATOMS)?.into_iter().filter(|a| a.at.dist(x) < radius).collect())
}

pub struct CarlesonGrid {
    pub outer_gap: f64,
    pub ratio: f64,
    pub m_max: u32,
    pub rel_tol: f64,
    /// Tree nodes allowed per β query.
    pub node_budget: u64,
}

pub fn carleson_sum(
    source: &Composite,
    x: Point2,
    radius: f64,
    grid: &CarlesonGrid,
) -> Result<CarlesonEstimate, MultiscaleError> {
    carleson_sum_over(source, source, x, radius, grid)
}

/// Carleson sum where the outer integral runs over `outer` only (a part of
/// `source`) while β is measured on all of `source`.
pub fn carleson_sum_over(
    source: &Composite,
    outer: &Composite,
    x: Point2,
    radius: f64,
    grid: &CarlesonGrid,
) -> Result<CarlesonEstimate, MultiscaleError> {
    check_grid(radius, grid.ratio)?;
    let atoms = outer_atoms(outer, x, radius, grid.outer_gap)?;
    let samples = atoms
        .par_iter()
        .map(|a| {
            let p = jones_profile_budget(source, a.at, radius, grid.ratio, grid.m_max, grid.rel_tol, grid.node_budget)?;
            Ok(CarlesonSample { at: a.at, weight: a.weight, inner_sum: p.partial_sum, inner_err: p.err })
        })
        .collect::<Result<Vec<_>, MultiscaleError>>()?;
    // sequential accumulation in atom order keeps the value reproducible
    let value = samples.iter().map(|s| s.weight * s.inner_sum).sum();
    let err_budget = samples.iter().map(|s| s.weight * s.inner_err).sum();
    Ok(CarlesonEstimate {
        x,
        radius,
        value,
        outer_gap: grid.outer_gap,
        ratio: grid.ratio,
        m_max: grid.m_max,
        samples,
        err_budget,
    })
}

/// Lower bound for a Carleson estimate from β at its center:
/// `ρ^{-3} Σ_k W_k β²(x, r_{k+2}) ln ρ`, with `W_k` the weight of atoms in
/// `B(x, r_{k+2})`. For `|y - x| < r_{k+2}` and `ρ >= 2` the ball
/// `B(x, r_{k+2})` sits inside `B(y, r_{k+1})`, so
/// `β²(y, r_{k+1}) >= ρ^{-3} β²(x, r_{k+2})`.
pub fn center_lower_bound(source: &Composite, est: &CarlesonEstimate, rel_tol: f64) -> Result<f64, MultiscaleError> {
    if est.ratio < 2.0 {
        return Err(MultiscaleError::BadRatio(est.ratio));
    }
    let ln = est.ratio.ln();
    let mut total = 0.0;
    for k in 0..est.m_max.saturating_sub(1) {
        let r = est.radius * est.ratio.powi(-(k as i32 + 2));
        let w: f64 = est.samples.iter().filter(|s| s.at.dist(est.x) < r).map(|s| s.weight).sum();
        if w == 0.0 {
            continue;
        }
        let b = beta2(source, est.x, r, rel_tol)?;
        total += w * (b.beta_sq - b.err).max(0.0) * ln;
    }
    Ok(total * est.ratio.powi(-3))
}

/// Ordinary least squares `y ≈ slope·x + intercept` with Pearson correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub pearson: f64,
    pub residuals: Vec<f64>,
    /// Constant `x` or `y`: slope and correlation are not meaningful.
    pub degenerate: bool,
}

pub fn growth_fit(xs: &[f64], ys: &[f64]) -> Result<GrowthFit, MultiscaleError> {
    if xs.len() != ys.len() {
        return Err(MultiscaleError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(MultiscaleError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let degenerate = sxx == 0.0 || syy == 0.0;
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let pearson = if degenerate { 0.0 } else { (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0) };
    let residuals = xs.iter().zip(ys).map(|(x, y)| y - (slope * x + intercept)).collect();
    Ok(GrowthFit { xs: xs.to_vec(), ys: ys.to_vec(), slope, intercept, pearson, residuals, degenerate })
}

/// Fit of `ln β²` against `m` for a profile's samples with `m` in `ms`.
pub fn profile_log_fit(profile: &JonesProfile, ms: std::ops::RangeInclusive<u32>) -> Result<GrowthFit, MultiscaleError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = profile
        .samples
        .iter()
        .filter(|s| ms.contains(&s.m))
        .map(|s| (s.m as f64, s.beta_sq.ln()))
        .unzip();
    growth_fit(&xs, &ys)
}

/// Sampled x: all endpoints and midpoints of a set.
pub fn endpoints_and_midpoints(set: &SegmentSet) -> Vec<Point2> {
    let mut pts: Vec<Point2> = set.segments().iter().flat_map(|s| [s.a, s.midpoint(), s.b]).collect();
    pts.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    pts.dedup();
    pts
}

/// `r_points` evenly spaced radii in `[6, 12]·4^{-j}`.
pub fn floor_radii(j: u32, r_points: usize) -> Vec<f64> {
    let s = 0.25f64.powi(j as i32);
    if r_points == 1 {
        return vec![6.0 * s];
    }
    (0..r_points).map(|i| (6.0 + 6.0 * i as f64 / (r_points - 1) as f64) * s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorEntry {
    pub k: u32,
    pub j: u32,
    pub floor: f64,
    pub at: Point2,
    pub r: f64,
}

/// Minimum of β² over `points × radii`, with its location.
pub fn beta_floor(set: &SegmentSet, points: &[Point2], radii: &[f64]) -> Result<(f64, Point2, f64), MultiscaleError> {
    let source: Composite = set.clone().into();
    let best = points
        .par_iter()
        .map(|&p| {
            let mut best = (f64::INFINITY, p, 0.0);
            for &r in radii {
                let b = beta2(&source, p, r, DEFAULT_REL_TOL)?;
                if b.beta_sq < best.0 {
                    best = (b.beta_sq, p, r);
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>, MultiscaleError>>()?;
    Ok(best.into_iter().fold((f64::INFINITY, Point2::ORIGIN, 0.0), |a, b| if b.0 < a.0 { b } else { a }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorReport {
    pub entries: Vec<FloorEntry>,
    /// Per `k`, largest over smallest floor across `j`.
    pub spread: Vec<(u32, f64)>,
}

impl FloorReport {
    pub fn min_floor(&self) -> f64 {
        self.entries.iter().map(|e| e.floor).fold(f64::INFINITY, f64::min)
    }

    pub fn max_spread(&self) -> f64 {
        self.spread.iter().map(|s| s.1).fold(1.0, f64::max)
    }
}

/// β-floor over four-corner stages `E_k`, `k ∈ ks`, scales `j = 1..k`.
pub fn beta_floor_scan(ks: std::ops::RangeInclusive<u32>, r_points: usize) -> Result<FloorReport, MultiscaleError> {
    let mut entries = Vec::new();
    let mut spread = Vec::new();
    for k in ks {
        let set = build_4corner_ek(k, Representation::Explicit)?.explicit;
        let pts = endpoints_and_midpoints(&set);
        let mut floors = Vec::new();
        for j in 1..k {
            let (floor, at, r) = beta_floor(&set, &pts, &floor_radii(j, r_points))?;
            entries.push(FloorEntry { k, j, floor, at, r });
            floors.push(floor);
        }
        if !floors.is_empty() {
            let hi = floors.iter().cloned().fold(0.0, f64::max);
            let lo = floors.iter().cloned().fold(f64::INFINITY, f64::min);
            spread.push((k, hi / lo));
        }
    }
    Ok(FloorReport { entries, spread })
}
