//! Koch-type constructions: the bump `S(I)`, the operator `P`, the partial
//! operators `𝒫_j`, the triadic sequence `E_k`, and net-glued unions of scaled
//! copies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Frame, GeomError, Point2, Segment, SegmentSet};
use crate::source::Composite;
use crate::tree::{ConstructionTree, Rule, TreeError};

/// Leaf count above which explicit construction is refused.
pub const DEFAULT_LEAF_BUDGET: u128 = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnowflakeError {
    #[error("bump angle must lie in (0, pi/2), got {0}")]
    BadAngle(f64),
    #[error("angle {0} exceeds pi/3; stage construction needs alpha <= pi/3")]
    AngleTooSteep(f64),
    #[error("n must be positive")]
    ZeroN,
    #[error("{0}")]
    NBounds(String),
    #[error("j must be at least 1")]
    ZeroJ,
    #[error("explicit stage would have {count} segments (budget {budget}); use the tree representation")]
    ExplicitTooLarge { count: u128, budget: u128 },
    #[error("separation must be positive, got {0}")]
    BadSeparation(f64),
    #[error("sample gap {gap} exceeds a tenth of the separation {sep}")]
    SampleGapTooLarge { gap: f64, sep: f64 },
    #[error("radii sum to {0} > 1")]
    RadiiTooLarge(f64),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnowflakeParams {
    pub alpha: f64,
    pub n: u32,
}

impl Default for SnowflakeParams {
    fn default() -> Self {
        SnowflakeParams { alpha: std::f64::consts::FRAC_PI_3, n: 2 }
    }
}

impl SnowflakeParams {
    /// Per-application length factor `(sec α + 2) / 3` of `P`.
    pub fn rho(&self) -> f64 {
        rho(self.alpha)
    }

    /// Checks `ρⁿ/3 < 1 < ρ²ⁿ/3` and `α ≤ π/3`.
    pub fn validate(&self) -> Result<(), SnowflakeError> {
        check_alpha(self.alpha)?;
        if self.alpha > std::f64::consts::FRAC_PI_3 * (1.0 + 1e-15) {
            return Err(SnowflakeError::AngleTooSteep(self.alpha));
        }
        if self.n == 0 {
            return Err(SnowflakeError::ZeroN);
        }
        let lower = self.rho().powi(self.n as i32) / 3.0;
        let upper = self.rho().powi(2 * self.n as i32) / 3.0;
        let mut failures = Vec::new();
        if !(lower < 1.0) {
            failures.push(format!("lower bound fails: 3^-1 rho^n = {lower} is not < 1"));
        }
        if !(upper > 1.0) {
            failures.push(format!("upper bound fails: 3^-1 rho^(2n) = {upper} is not > 1"));
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(SnowflakeError::NBounds(format!(
                "growth bounds violated for n = {}, alpha = {}: {}",
                self.n,
                self.alpha,
                failures.join("; ")
            )))
        }
    }
}

pub fn rho(alpha: f64) -> f64 {
    (1.0 / alpha.cos() + 2.0) / 3.0
}

fn check_alpha(alpha: f64) -> Result<(), SnowflakeError> {
    if !(alpha > 0.0 && alpha < std::f64::consts::FRAC_PI_2) {
        return Err(SnowflakeError::BadAngle(alpha));
    }
    Ok(())
}

/// Apex of the isosceles roof over the middle third of `i`, on its left.
fn apex(i: &Segment, alpha: f64) -> Point2 {
    let d = i.dir();
    i.a + d * 0.5 + d.perp() * (alpha.tan() / 6.0)
}

/// `S(I)`: the two legs of the roof of base angle `alpha` over the middle
/// third, erected on the left of `a -> b`.
pub fn bump(i: &Segment, alpha: f64) -> Result<SegmentSet, SnowflakeError> {
    check_alpha(alpha)?;
    let d = i.dir();
    let p = apex(i, alpha);
    Ok(SegmentSet::new(vec![
        Segment::new(i.a + d * (1.0 / 3.0), p)?,
        Segment::new(p, i.a + d * (2.0 / 3.0))?,
    ]))
}

fn p_pieces(s: &Segment, alpha: f64, out: &mut Vec<Segment>) {
    let d = s.dir();
    let t1 = s.a + d * (1.0 / 3.0);
    let t2 = s.a + d * (2.0 / 3.0);
    let p = apex(s, alpha);
    out.extend([Segment { a: s.a, b: t1 }, Segment { a: t1, b: p }, Segment { a: p, b: t2 }, Segment { a: t2, b: s.b }]);
}

/// `P`: every maximal segment `I` becomes `I_left ∪ S(I) ∪ I_right`.
pub fn apply_p(set: &SegmentSet, alpha: f64) -> Result<SegmentSet, SnowflakeError> {
    check_alpha(alpha)?;
    let mut out = Vec::with_capacity(4 * set.len());
    for s in set.segments() {
        p_pieces(s, alpha, &mut out);
    }
    Ok(SegmentSet::new(out))
}

pub fn apply_p_times(set: &SegmentSet, alpha: f64, times: u32) -> Result<SegmentSet, SnowflakeError> {
    let mut s = set.clone();
    for _ in 0..times {
        s = apply_p(&s, alpha)?;
    }
    Ok(s)
}

/// Frames placing the unit generator on the two legs of `S(I)`.
pub fn bump_leg_frames(i: &Segment, alpha: f64) -> [Frame; 2] {
    let base = Frame::onto_segment(i);
    let legs = crate::tree::koch_child_frames(alpha);
    [base.compose(&legs[1]), base.compose(&legs[2])]
}

/// `𝒫_j(I) = P^{j-1}(S(I)) ∪ (I ∖ I_center)` as explicit segments.
pub fn build_pj(i: &Segment, j: u32, alpha: f64) -> Result<SegmentSet, SnowflakeError> {
    if j == 0 {
        return Err(SnowflakeError::ZeroJ);
    }
    let roof = apply_p_times(&bump(i, alpha)?, alpha, j - 1)?;
    let d = i.dir();
    let mut all = vec![Segment::new(i.a, i.a + d * (1.0 / 3.0))?];
    all.extend_from_slice(roof.segments());
    all.push(Segment::new(i.a + d * (2.0 / 3.0), i.b)?);
    Ok(SegmentSet::new(all))
}

/// `𝒫_j(I)` with the roof kept implicit.
pub fn build_pj_tree(i: &Segment, j: u32, alpha: f64) -> Result<Composite, SnowflakeError> {
    if j == 0 {
        return Err(SnowflakeError::ZeroJ);
    }
    check_alpha(alpha)?;
    let d = i.dir();
    let explicit = SegmentSet::new(vec![
        Segment::new(i.a, i.a + d * (1.0 / 3.0))?,
        Segment::new(i.a + d * (2.0 / 3.0), i.b)?,
    ]);
    let trees = bump_leg_frames(i, alpha)
        .iter()
        .map(|f| ConstructionTree::new(Rule::KochP { alpha }, j - 1, *f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Composite::new(explicit, trees))
}

/// `H¹(𝒫_j(I)) = (2/3)|I| + ρ^{j-1} (sec α / 3) |I|`.
pub fn pj_mass(len: f64, j: u32, alpha: f64) -> f64 {
    len * (2.0 / 3.0 + rho(alpha).powi(j as i32 - 1) / (3.0 * alpha.cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Explicit,
    Tree,
}

/// A stage `E_k` of the triadic sequence.
#[derive(Debug, Clone)]
pub struct KochStage {
    pub k: u32,
    pub params: SnowflakeParams,
    pub set: Composite,
}

/// `E_k`: `[0, 3^-k]`, plus for each `i = 1..k` the triadic piece
/// `[2·3^-i, 3^{1-i}]` and the roof `P^{in-1}(S([3^-i, 2·3^-i]))`.
pub fn build_koch_ek(k: u32, params: SnowflakeParams, repr: Representation) -> Result<KochStage, SnowflakeError> {
    build_koch_ek_budget(k, params, repr, DEFAULT_LEAF_BUDGET)
}

pub fn build_koch_ek_budget(
    k: u32,
    params: SnowflakeParams,
    repr: Representation,
    budget: u128,
) -> Result<KochStage, SnowflakeError> {
    params.validate()?;
    let alpha = params.alpha;
    let third = |i: u32| 3f64.powi(-(i as i32));
    let mut explicit = vec![Segment::horizontal(0.0, third(k), 0.0)?];
    let mut trees = Vec::new();
    for i in 1..=k {
        let len = third(i - 1);
        explicit.push(Segment::horizontal(2.0 * third(i), len, 0.0)?);
        let whole = Segment::horizontal(0.0, len, 0.0)?;
        for f in bump_leg_frames(&whole, alpha) {
            trees.push(ConstructionTree::new(Rule::KochP { alpha }, i * params.n - 1, f)?);
        }
    }
    let composite = Composite::new(SegmentSet::new(explicit), trees);
    let set = match repr {
        Representation::Tree => composite,
        Representation::Explicit => {
            let count = composite.leaf_count();
            if count > budget {
                return Err(SnowflakeError::ExplicitTooLarge { count, budget });
            }
            composite.enumerate(budget)?.into()
        }
    };
    Ok(KochStage { k, params, set })
}

/// `1 + Σ_{i≤k} 3^-i [sec α ρ^{ni-1} - 1]`, the length of `E_k` by direct
/// summation of its pieces.
pub fn koch_mass_closed(k: u32, params: &SnowflakeParams) -> f64 {
    let sec = 1.0 / params.alpha.cos();
    1.0 + (1..=k)
        .map(|i| 3f64.powi(-(i as i32)) * (sec * params.rho().powi((params.n * i) as i32 - 1) - 1.0))
        .sum::<f64>()
}

/// The same sum with exponent `ni` in place of `ni - 1`.
pub fn koch_mass_shifted(k: u32, params: &SnowflakeParams) -> f64 {
    let sec = 1.0 / params.alpha.cos();
    1.0 + (1..=k)
        .map(|i| 3f64.powi(-(i as i32)) * (sec * params.rho().powi((params.n * i) as i32) - 1.0))
        .sum::<f64>()
}

/// `3^-k + Σ_{i=k+1}^{K} 3^-i [sec α ρ^{ni-1} - 1]`, the length of
/// `E_K ∩ B(0, 3^-k)`.
pub fn koch_ball_mass_closed(big_k: u32, k: u32, params: &SnowflakeParams) -> f64 {
    let sec = 1.0 / params.alpha.cos();
    3f64.powi(-(k as i32))
        + (k + 1..=big_k)
            .map(|i| 3f64.powi(-(i as i32)) * (sec * params.rho().powi((params.n * i) as i32 - 1) - 1.0))
            .sum::<f64>()
}

/// Measured `H¹(E_K ∩ B(0, 3^-k))`.
pub fn koch_ball_mass_origin(big_k: u32, k: u32, params: SnowflakeParams) -> Result<f64, SnowflakeError> {
    let stage = build_koch_ek(big_k, params, Representation::Tree)?;
    let ball = crate::geom::Ball::new(Point2::ORIGIN, 3f64.powi(-(k as i32)))?;
    Ok(stage.set.clipped_moments(&ball, 1e-300)?.summary.mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedConstant {
    pub name: String,
    pub value: f64,
    pub method: String,
    pub params: SnowflakeParams,
    /// `|value(2× grid) - value|`.
    pub refinement_delta: f64,
}

/// `τ = (1/20) min{tan α / 6, 1/3}`.
pub fn tau(alpha: f64) -> f64 {
    (alpha.tan() / 6.0).min(1.0 / 3.0) / 20.0
}

/// `H¹(S ∖ B_τ(L)) / H¹(S)` for `L = {n·p = c}`.
pub fn outside_strip_ratio(set: &SegmentSet, n: Point2, c: f64, tau: f64) -> f64 {
    let mut outside = 0.0;
    for s in set.segments() {
        let u0 = n.dot(s.a) - c;
        let u1 = n.dot(s.b) - c;
        let len = s.length();
        let inside_frac = if u0 == u1 {
            if u0.abs() < tau {
                1.0
            } else {
                0.0
            }
        } else {
            let (ta, tb) = ((-tau - u0) / (u1 - u0), (tau - u0) / (u1 - u0));
            (ta.max(tb).min(1.0) - ta.min(tb).max(0.0)).max(0.0)
        };
        outside += len * (1.0 - inside_frac);
    }
    outside / set.mass()
}

fn c0_search(roof: &SegmentSet, tau: f64, n_angle: usize, n_offset: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let range = |n: Point2| {
        let vals: Vec<f64> = roof.segments().iter().flat_map(|s| [n.dot(s.a), n.dot(s.b)]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min) - tau;
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + tau;
        (lo, hi)
    };
    let eval = |theta: f64, c: f64| outside_strip_ratio(roof, Point2::new(theta.cos(), theta.sin()), c, tau);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..n_angle {
        let theta = pi * i as f64 / n_angle as f64;
        let n = Point2::new(theta.cos(), theta.sin());
        let (lo, hi) = range(n);
        for j in 0..=n_offset {
            let c = lo + (hi - lo) * j as f64 / n_offset as f64;
            let v = eval(theta, c);
            if v < best.0 {
                best = (v, theta, c);
            }
        }
    }
    let (mut dt, mut dc) = (pi / n_angle as f64, 2.0 / n_offset as f64);
    for _ in 0..40 {
        let (_, t0, c0) = best;
        for i in -4..=4 {
            for j in -4..=4 {
                let theta = t0 + dt * i as f64 / 4.0;
                let c = c0 + dc * j as f64 / 4.0;
                let v = eval(theta, c);
                if v < best.0 {
                    best = (v, theta, c);
                }
            }
        }
        dt *= 0.5;
        dc *= 0.5;
    }
    best.0
}

/// Grid search over lines for `min_L H¹(S(I) ∖ B_τ(L)) / H¹(S(I))` with
/// `I = [0, 1]`. The search value is an upper bound for the true infimum.
pub fn estimate_c0(alpha: f64, n_angle: usize, n_offset: usize) -> Result<EstimatedConstant, SnowflakeError> {
    let roof = bump(&Segment::horizontal(0.0, 1.0, 0.0)?, alpha)?;
    let t = tau(alpha);
    let value = c0_search(&roof, t, n_angle, n_offset);
    let fine = c0_search(&roof, t, 2 * n_angle, 2 * n_offset);
    Ok(EstimatedConstant {
        name: "c0".into(),
        value: fine.min(value),
        method: format!("line grid {n_angle}x{n_offset} with local zoom, checked against {}x{}", 2 * n_angle, 2 * n_offset),
        params: SnowflakeParams { alpha, n: 0 },
        refinement_delta: (value - fine).abs(),
    })
}

/// Greedy-in-order maximal `sep`-separated subset of `candidates`.
pub fn maximal_net(candidates: &[Point2], sep: f64) -> Result<Vec<Point2>, SnowflakeError> {
    maximal_net_seeded(&[], candidates, sep)
}

/// As [`maximal_net`], but `seeds` are considered first.
pub fn maximal_net_seeded(seeds: &[Point2], candidates: &[Point2], sep: f64) -> Result<Vec<Point2>, SnowflakeError> {
    if !(sep > 0.0) {
        return Err(SnowflakeError::BadSeparation(sep));
    }
    use std::collections::HashMap;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut net: Vec<Point2> = Vec::new();
    let key = |p: Point2| ((p.x / sep).floor() as i64, (p.y / sep).floor() as i64);
    for &p in seeds.iter().chain(candidates) {
        let (kx, ky) = key(p);
        let mut far = true;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = grid.get(&(kx + dx, ky + dy)) {
                    if ids.iter().any(|&i| net[i].dist(p) < sep) {
                        far = false;
                        break 'scan;
                    }
                }
            }
        }
        if far {
            grid.entry((kx, ky)).or_default().push(net.len());
            net.push(p);
        }
    }
    Ok(net)
}

/// Points along every segment with consecutive spacing at most `gap`,
/// endpoints included.
pub fn sample_points(set: &SegmentSet, gap: f64) -> Vec<Point2> {
    let mut out = Vec::new();
    for s in set.segments() {
        let n = (s.length() / gap).ceil().max(1.0) as usize;
        for i in 0..=n {
            out.push(s.point_at(i as f64 / n as f64));
        }
    }
    out
}

/// One level of the net-glued union.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetLevel {
    pub level: u32,
    pub sep: f64,
    pub radius: f64,
    pub points: Vec<Point2>,
    /// Samples the net was chosen from (for maximality checks).
    #[serde(skip)]
    pub candidates: Vec<Point2>,
}

#[derive(Debug, Clone)]
pub struct K0Stage {
    pub stages: u32,
    /// Components: the base, then every attached copy in order.
    pub gamma: Vec<SegmentSet>,
    pub levels: Vec<NetLevel>,
    pub base_mass: f64,
    pub sample_gap: f64,
}

impl K0Stage {
    pub fn sum_of_lengths(&self) -> f64 {
        self.gamma.iter().map(SegmentSet::mass).sum()
    }

    pub fn union_mass(&self) -> f64 {
        let all: Vec<Segment> = self.gamma.iter().flat_map(|g| g.segments().iter().copied()).collect();
        SegmentSet::new(all).mass()
    }

    pub fn radius_sum(&self) -> f64 {
        self.levels.iter().map(|l| l.radius).sum()
    }

    /// Components connected when they come within `tol` of each other.
    pub fn is_connected(&self, tol: f64) -> bool {
        let n = self.gamma.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut j = i;
            while p[j] != r {
                let next = p[j];
                p[j] = r;
                j = next;
            }
            r
        }
        let boxes: Vec<_> = self.gamma.iter().map(SegmentSet::bbox).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if find(&mut parent, i) == find(&mut parent, j) {
                    continue;
                }
                let (a, b) = (&boxes[i], &boxes[j]);
                if a.min.x > b.max.x + tol || b.min.x > a.max.x + tol || a.min.y > b.max.y + tol || b.min.y > a.max.y + tol {
                    continue;
                }
                if set_distance(&self.gamma[i], &self.gamma[j]) <= tol {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
        let root = find(&mut parent, 0);
        (0..n).all(|i| find(&mut parent, i) == root)
    }
}

fn segment_distance(s: &Segment, t: &Segment) -> f64 {
    let cross = |o: Point2, p: Point2, q: Point2| (p - o).cross(q - o);
    let (c1, c2) = (cross(s.a, s.b, t.a), cross(s.a, s.b, t.b));
    let (c3, c4) = (cross(t.a, t.b, s.a), cross(t.a, t.b, s.b));
    if c1 * c2 < 0.0 && c3 * c4 < 0.0 {
        return 0.0;
    }
    t.distance_to(s.a).min(t.distance_to(s.b)).min(s.distance_to(t.a)).min(s.distance_to(t.b))
}

fn set_distance(a: &SegmentSet, b: &SegmentSet) -> f64 {
    let mut best = f64::INFINITY;
    for s in a.segments() {
        for t in b.segments() {
            best = best.min(segment_distance(s, t));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

/// Net-glued union: stage `i` attaches `x + (r_i / N_i)·base` at each point of
/// a maximal `2^{-i-1}`-separated net of the previous stage, sampled with
/// spacing `sample_gap`. Previous net points seed each new net.
pub fn build_k0(stages: u32, base: &SegmentSet, radii: &[f64], sample_gap: f64) -> Result<K0Stage, SnowflakeError> {
    let total: f64 = radii.iter().take(stages as usize).sum();
    if total > 1.0 + 1e-15 {
        return Err(SnowflakeError::RadiiTooLarge(total));
    }
    let mut gamma = vec![base.clone()];
    let mut levels: Vec<NetLevel> = Vec::new();
    for i in 1..=stages {
        let sep = 2f64.powi(-(i as i32) - 1);
        if sample_gap > sep / 10.0 {
            return Err(SnowflakeError::SampleGapTooLarge { gap: sample_gap, sep });
        }
        let r = radii.get(i as usize - 1).copied().unwrap_or(0.0);
        let seeds: Vec<Point2> = levels.iter().flat_map(|l| l.points.iter().copied()).collect();
        let candidates: Vec<Point2> = gamma.iter().flat_map(|g| sample_points(g, sample_gap)).collect();
        let points = maximal_net_seeded(&seeds, &candidates, sep)?;
        let scale = r / points.len() as f64;
        if scale > 0.0 {
            for p in &points {
                let sim = crate::geom::Similarity::new(scale, *p)?;
                gamma.push(base.transform(&sim));
            }
        }
        levels.push(NetLevel { level: i, sep, radius: r, points, candidates });
    }
    Ok(K0Stage { stages, gamma, levels, base_mass: base.mass(), sample_gap })
}

/// `r_i = 2^{-i}`.
pub fn pow2_radii(stages: u32) -> Vec<f64> {
    (1..=stages).map(|i| 2f64.powi(-(i as i32))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{hausdorff_distance, Similarity};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit() -> Segment {
        Segment::horizontal(0.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn bump_at_sixty_degrees() {
        let b = bump(&unit(), PI / 3.0).unwrap();
        let s = b.segments();
        assert_eq!(s.len(), 2);
        assert_relative_eq!(s[0].a.x, 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s[0].b.y, 3f64.sqrt() / 6.0, epsilon = 1e-15);
        assert_relative_eq!(s[1].b.x, 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(b.mass(), 2.0 / 3.0, epsilon = 1e-15);
        assert!(bump(&unit(), 0.0).is_err());
    }

    #[test]
    fn bump_equivariance() {
        let sim = Similarity::new(2.5, Point2::new(-1.0, 3.0)).unwrap();
        let i = Segment::new(Point2::new(0.2, 0.1), Point2::new(0.9, -0.4)).unwrap();
        let a = bump(&i.transform(&sim), 0.7).unwrap();
        let b = bump(&i, 0.7).unwrap().transform(&sim);
        for (s, t) in a.segments().iter().zip(b.segments()) {
            assert!(s.a.dist(t.a) < 1e-12 && s.b.dist(t.b) < 1e-12);
        }
    }

    #[test]
    fn p_mass_law() {
        let one = SegmentSet::new(vec![unit()]);
        assert!(apply_p(&SegmentSet::empty(), 0.5).unwrap().is_empty());
        for alpha in [PI / 6.0, PI / 4.0, PI / 3.0] {
            let mut s = one.clone();
            for m in 1..=7 {
                s = apply_p(&s, alpha).unwrap();
                assert_relative_eq!(s.mass(), rho(alpha).powi(m), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn pj_examples() {
        let a = PI / 3.0;
        assert_relative_eq!(build_pj(&unit(), 1, a).unwrap().mass(), 4.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(build_pj(&unit(), 2, a).unwrap().mass(), 14.0 / 9.0, max_relative = 1e-14);
        let third = Segment::horizontal(0.0, 1.0 / 3.0, 0.0).unwrap();
        assert_relative_eq!(build_pj(&third, 4, a).unwrap().mass(), 182.0 / 243.0, max_relative = 1e-13);
        for j in 1..=8 {
            let explicit = build_pj(&unit(), j, a).unwrap();
            let implicit = build_pj_tree(&unit(), j, a).unwrap();
            assert_relative_eq!(explicit.mass(), pj_mass(1.0, j, a), max_relative = 1e-9);
            assert_relative_eq!(implicit.mass(), pj_mass(1.0, j, a), max_relative = 1e-12);
        }
    }

    #[test]
    fn tree_pj_matches_explicit_point_set() {
        let a = PI / 4.0;
        let explicit = build_pj(&unit(), 4, a).unwrap();
        let implicit = build_pj_tree(&unit(), 4, a).unwrap().enumerate(1 << 12).unwrap();
        assert!(hausdorff_distance(&explicit, &implicit, 1e-9).unwrap() < 1e-8);
        assert_relative_eq!(explicit.mass(), implicit.mass(), max_relative = 1e-12);
    }

    #[test]
    fn koch_stage_masses() {
        let p = SnowflakeParams::default();
        let e1 = build_koch_ek(1, p, Representation::Explicit).unwrap();
        assert_relative_eq!(e1.set.mass(), 14.0 / 9.0, max_relative = 1e-12);
        let e2 = build_koch_ek(2, p, Representation::Explicit).unwrap();
        assert_relative_eq!(e2.set.mass(), 479.0 / 243.0, max_relative = 1e-12);
        for k in 0..=6 {
            let t = build_koch_ek(k, p, Representation::Tree).unwrap();
            assert_relative_eq!(t.set.mass(), koch_mass_closed(k, &p), max_relative = 1e-12);
        }
        assert_relative_eq!(koch_mass_shifted(1, &p), 50.0 / 27.0, max_relative = 1e-14);
    }

    #[test]
    fn growth_bounds() {
        let bad = SnowflakeParams { alpha: PI / 3.0, n: 1 };
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("upper bound fails"), "{err}");
        assert!(!err.contains("lower bound fails"));
        assert!(SnowflakeParams { alpha: PI / 3.0, n: 3 }.validate().is_ok());
        assert!(SnowflakeParams { alpha: 1.2, n: 2 }.validate().is_err());
    }

    #[test]
    fn triadic_freezing() {
        let p = SnowflakeParams::default();
        for k in 2..=4 {
            let a = build_koch_ek(k, p, Representation::Explicit).unwrap().set.explicit;
            let b = build_koch_ek(k - 1, p, Representation::Explicit).unwrap().set.explicit;
            let cut = 3f64.powi(1 - k as i32);
            let ra = a.restrict_x_ge(cut);
            let rb = b.restrict_x_ge(cut);
            assert_eq!(ra.len(), rb.len());
            assert!(hausdorff_distance(&ra, &rb, 1e-12).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn ball_mass_at_origin() {
        let p = SnowflakeParams::default();
        let total = koch_mass_closed(6, &p);
        assert_relative_eq!(koch_ball_mass_origin(6, 0, p).unwrap(), total, max_relative = 1e-12);
        for k in 1..=5 {
            assert_relative_eq!(koch_ball_mass_origin(6, k, p).unwrap(), koch_ball_mass_closed(6, k, &p), max_relative = 1e-9);
        }
        // the innermost ball holds exactly 𝒫_{Kn}([0, 3^{1-K}]) clipped
        let inner = build_pj(&Segment::horizontal(0.0, 3f64.powi(-2), 0.0).unwrap(), 6, p.alpha).unwrap();
        let clipped = inner.clipped_moments_about(&crate::geom::Ball::new(Point2::ORIGIN, 3f64.powi(-2)).unwrap(), Point2::ORIGIN);
        assert_relative_eq!(koch_ball_mass_origin(3, 2, p).unwrap(), clipped.mass, max_relative = 1e-9);
    }

    #[test]
    fn c0_search() {
        assert_relative_eq!(tau(PI / 3.0), 3f64.sqrt() / 120.0, max_relative = 1e-14);
        let roof = bump(&unit(), PI / 3.0).unwrap();
        assert_eq!(outside_strip_ratio(&roof, Point2::new(0.0, 1.0), 5.0, tau(PI / 3.0)), 1.0);
        let est = estimate_c0(PI / 3.0, 256, 256).unwrap();
        assert!(est.value > 0.0 && est.value < 0.5, "{}", est.value);
        assert!(est.refinement_delta < 0.05 * est.value);
    }

    #[test]
    fn net_examples() {
        let pts: Vec<Point2> = [0.0, 0.3, 0.6, 1.0].iter().map(|&x| Point2::new(x, 0.0)).collect();
        assert_eq!(maximal_net(&pts, 0.5).unwrap(), vec![Point2::new(0.0, 0.0), Point2::new(0.6, 0.0)]);
        assert!(maximal_net(&pts, 0.0).is_err());
    }

    #[test]
    fn k0_small() {
        let base = build_koch_ek(1, SnowflakeParams::default(), Representation::Explicit).unwrap().set.explicit;
        let k = build_k0(0, &base, &[], 0.01).unwrap();
        assert_eq!(k.gamma.len(), 1);
        let k = build_k0(2, &base, &pow2_radii(2), 0.01).unwrap();
        assert_eq!(k.gamma.len(), 1 + k.levels[0].points.len() + k.levels[1].points.len());
        assert_relative_eq!(k.sum_of_lengths(), base.mass() * 1.75, max_relative = 1e-12);
        assert!(k.union_mass() <= k.sum_of_lengths() + 1e-12);
        assert!(k.is_connected(0.01));
        assert!(build_k0(1, &base, &[1.5], 0.01).is_err());
        assert!(build_k0(1, &base, &[0.5], 0.1).is_err());
    }
}
