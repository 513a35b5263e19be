//! β₂ numbers from moment summaries, and a brute-force line-search oracle.
//!
//! `β(x, r)² = r⁻³ · inf_L ∫_{B(x,r)} dist(y, L)² dH¹⌞E(y)`. The infimum over
//! lines is attained through the centroid along the principal direction, so
//! it equals the smallest eigenvalue of the centered second moment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{clip_segment_to_ball, sym_eigenvalues, Ball, GeomError, Line, MomentSummary, Point2, Segment, SegmentSet};
use crate::source::Composite;
use crate::tree::{TreeError, DEFAULT_NODE_BUDGET};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BetaError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("no mass in B(({0}, {1}), {2})")]
    EmptyBall(f64, f64, f64),
    #[error("grid sizes must be at least 16, got {0} x {1}")]
    GridTooSmall(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaValue {
    pub x: Point2,
    pub r: f64,
    pub beta_sq: f64,
    /// Certified absolute error of `beta_sq` from moment truncation.
    pub err: f64,
    pub mass_in_ball: f64,
}

impl BetaValue {
    pub fn is_empty(&self) -> bool {
        self.mass_in_ball == 0.0
    }
}

/// `λ_min` of the centered second moment, clamped at zero.
pub fn min_centered_eigenvalue(m: &MomentSummary) -> f64 {
    if !(m.mass > 0.0) {
        return 0.0;
    }
    sym_eigenvalues(m.centered()).0.max(0.0)
}

pub fn beta_from_moments(x: Point2, r: f64, m: &MomentSummary, error_bound: f64) -> BetaValue {
    let r3 = r * r * r;
    BetaValue { x, r, beta_sq: min_centered_eigenvalue(m) / r3, err: error_bound / r3, mass_in_ball: m.mass }
}

/// β² at `(x, r)`. Empty balls give `beta_sq = 0` with `mass_in_ball = 0`.
pub fn beta2(source: &Composite, x: Point2, r: f64, rel_tol: f64) -> Result<BetaValue, BetaError> {
    beta2_budget(source, x, r, rel_tol, DEFAULT_NODE_BUDGET)
}

/// [`beta2`] with an explicit cap on tree nodes visited.
pub fn beta2_budget(source: &Composite, x: Point2, r: f64, rel_tol: f64, budget: u64) -> Result<BetaValue, BetaError> {
    let ball = Ball::new(x, r)?;
    let res = source.clipped_moments_budget(&ball, rel_tol, budget)?;
    Ok(beta_from_moments(x, r, &res.summary, res.error_bound))
}

/// Exact β² for an explicit set.
pub fn beta2_explicit(set: &SegmentSet, x: Point2, r: f64) -> Result<BetaValue, BetaError> {
    let ball = Ball::new(x, r)?;
    Ok(beta_from_moments(x, r, &set.clipped_moments_about(&ball, x), 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BestLine {
    Unique(Line),
    /// Eigengap within the error: every line through the centroid along either
    /// eigen-direction (and those between) is optimal up to the error.
    Degenerate { centroid: Point2, directions: [Point2; 2] },
}

/// A line attaining the infimum in the β definition.
pub fn best_line(source: &Composite, x: Point2, r: f64, rel_tol: f64) -> Result<BestLine, BetaError> {
    let ball = Ball::new(x, r)?;
    let res = source.clipped_moments(&ball, rel_tol)?;
    best_line_from_moments(x, r, &res.summary, res.error_bound)
}

/// `m` holds moments about `x`.
pub fn best_line_from_moments(x: Point2, r: f64, m: &MomentSummary, error_bound: f64) -> Result<BestLine, BetaError> {
    let c = m.centroid().ok_or(BetaError::EmptyBall(x.x, x.y, r))?;
    let cov = m.centered();
    let (lo, hi) = sym_eigenvalues(cov);
    let centroid = c + x;
    let top = principal_direction(cov, hi);
    let scale = 1e-12 * hi.abs().max(f64::MIN_POSITIVE);
    if hi - lo <= error_bound.max(scale) {
        return Ok(BestLine::Degenerate { centroid, directions: [top, top.perp()] });
    }
    Ok(BestLine::Unique(Line::through(centroid, top)?))
}

/// Unit eigenvector of the symmetric matrix for eigenvalue `lambda`.
fn principal_direction(m: [[f64; 2]; 2], lambda: f64) -> Point2 {
    // rows of (M - λI) are orthogonal to the eigenvector; use the larger one
    let r0 = Point2::new(m[0][0] - lambda, m[0][1]);
    let r1 = Point2::new(m[1][0], m[1][1] - lambda);
    let row = if r0.norm_sq() >= r1.norm_sq() { r0 } else { r1 };
    if row.norm() == 0.0 {
        return Point2::new(1.0, 0.0);
    }
    let v = row.perp();
    v * (1.0 / v.norm())
}

/// `∫_s (n·y - c)² ds` by Simpson's rule, which is exact for quadratics.
fn squared_distance_integral(s: &Segment, n: Point2, c: f64) -> f64 {
    let u0 = n.dot(s.a) - c;
    let u1 = n.dot(s.b) - c;
    let um = 0.5 * (u0 + u1);
    s.length() * (u0 * u0 + 4.0 * um * um + u1 * u1) / 6.0
}

/// Independent oracle: minimize `∫ dist(y, L)²` over a grid of line angles ×
/// offsets, then zoom in around the best cell. Always an upper bound for the
/// exact β² of an explicit set.
pub fn beta2_bruteforce(set: &SegmentSet, x: Point2, r: f64, n_angle: usize, n_offset: usize) -> Result<f64, BetaError> {
    if n_angle < 16 || n_offset < 16 {
        return Err(BetaError::GridTooSmall(n_angle, n_offset));
    }
    let ball = Ball::new(x, r)?;
    let pieces: Vec<Segment> = set
        .segments()
        .iter()
        .filter_map(|s| clip_segment_to_ball(s, &ball))
        .map(|s| Segment { a: s.a - x, b: s.b - x })
        .collect();
    if pieces.is_empty() {
        return Ok(0.0);
    }
    let cost = |theta: f64, c: f64| {
        let n = Point2::new(theta.cos(), theta.sin());
        pieces.iter().map(|s| squared_distance_integral(s, n, c)).sum::<f64>()
    };
    let pi = std::f64::consts::PI;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..n_angle {
        let theta = pi * i as f64 / n_angle as f64;
        for j in 0..=n_offset {
            let c = -r + 2.0 * r * j as f64 / n_offset as f64;
            let v = cost(theta, c);
            if v < best.0 {
                best = (v, theta, c);
            }
        }
    }
    let (mut dt, mut dc) = (pi / n_angle as f64, 2.0 * r / n_offset as f64);
    for _ in 0..60 {
        let (_, t0, c0) = best;
        for i in -8..=8 {
            for j in -8..=8 {
                let theta = t0 + dt * i as f64 / 8.0;
                let c = c0 + dc * j as f64 / 8.0;
                let v = cost(theta, c);
                if v < best.0 {
                    best = (v, theta, c);
                }
            }
        }
        dt *= 0.5;
        dc *= 0.5;
    }
    Ok(best.0 / (r * r * r))
}
