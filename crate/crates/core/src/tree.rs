//! Implicit self-similar sets and the pruned moment recursion.
//!
//! A [`ConstructionTree`] is `frame(G_depth)` where `G_d` is the depth-`d`
//! stage of a generator. Full moments per depth are tabulated once, so a ball
//! query only descends into nodes that straddle the ball boundary.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    clip_segment_to_ball, segment_moments, BBox, Ball, Frame, MomentSummary, Point2, Segment,
    SegmentSet, Similarity,
};

/// Node visits allowed per query unless a caller asks otherwise.
pub const DEFAULT_NODE_BUDGET: u64 = 200_000_000;
pub const MAX_FOURCORNER_DEPTH: u32 = 64;
pub const MAX_KOCH_DEPTH: u32 = 40;
/// Nodes this close to the leaves are resolved exactly instead of truncated
/// (at most 16 leaves each).
pub const EXACT_DEPTH: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("relative tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("node budget exceeded: visited {visited} nodes, budget {budget}")]
    NodeBudget { visited: u64, budget: u64 },
    #[error("leaf count {count} exceeds limit {max}")]
    LeafOverflow { count: u128, max: u128 },
    #[error("depth {depth} exceeds the supported maximum {max} for this rule")]
    DepthTooLarge { depth: u32, max: u32 },
    #[error("bump angle must lie in (0, pi/2), got {0}")]
    BadAngle(f64),
    #[error("half-open box queries need an axis-aligned frame")]
    RotatedFrame,
}

/// Generator rules. `FourCornerOffBase` is the four-corner stage with its
/// bottom row (the part on `y = 0`) removed; it lets a scaled four-corner stage
/// sit on a base segment without double counting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Rule {
    FourCorner,
    #[serde(rename = "fourcorner_offbase")]
    FourCornerOffBase,
    #[serde(rename = "koch")]
    KochP { alpha: f64 },
}

const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (0.75, 0.0), (0.0, 0.75), (0.75, 0.75)];

impl Rule {
    pub fn koch(alpha: f64) -> Result<Rule, TreeError> {
        if !(alpha > 0.0 && alpha < std::f64::consts::FRAC_PI_2) {
            return Err(TreeError::BadAngle(alpha));
        }
        Ok(Rule::KochP { alpha })
    }

    pub fn max_depth(&self) -> u32 {
        match self {
            Rule::KochP { .. } => MAX_KOCH_DEPTH,
            _ => MAX_FOURCORNER_DEPTH,
        }
    }

    /// Child maps and rules; children of a depth-`d` node have depth `d - 1`.
    pub fn children(&self) -> Vec<(Frame, Rule)> {
        match *self {
            Rule::FourCorner => CORNERS
                .iter()
                .map(|&(x, y)| (Frame { scale: 0.25, cos: 1.0, sin: 0.0, t: Point2::new(x, y) }, Rule::FourCorner))
                .collect(),
            Rule::FourCornerOffBase => CORNERS
                .iter()
                .map(|&(x, y)| {
                    let rule = if y == 0.0 { Rule::FourCornerOffBase } else { Rule::FourCorner };
                    (Frame { scale: 0.25, cos: 1.0, sin: 0.0, t: Point2::new(x, y) }, rule)
                })
                .collect(),
            Rule::KochP { alpha } => koch_child_frames(alpha).into_iter().map(|f| (f, *self)).collect(),
        }
    }

    /// The depth-0 set in the unit frame.
    pub fn leaf(&self) -> Option<Segment> {
        match self {
            Rule::FourCornerOffBase => None,
            _ => Some(Segment { a: Point2::ORIGIN, b: Point2::new(1.0, 0.0) }),
        }
    }

    /// A point of the depth-`depth` set in the unit frame (used to place
    /// quadrature atoms on the set).
    pub fn anchor(&self, depth: u32) -> Option<Point2> {
        match self {
            Rule::FourCornerOffBase if depth == 0 => None,
            Rule::FourCornerOffBase => Some(Point2::new(0.0, 0.75)),
            _ => Some(Point2::ORIGIN),
        }
    }

    fn bound(&self, depth: u32) -> UnitBound {
        match *self {
            Rule::FourCorner => UnitBound::Box(BBox {
                min: Point2::ORIGIN,
                max: Point2::new(1.0, 1.0 - 0.25f64.powi(depth as i32)),
            }),
            Rule::FourCornerOffBase => UnitBound::Box(BBox {
                min: Point2::new(0.0, if depth == 0 { 0.0 } else { 3.0 * 0.25f64.powi(depth as i32) }),
                max: Point2::new(1.0, 1.0 - 0.25f64.powi(depth as i32)),
            }),
            Rule::KochP { alpha } => {
                let (c, r) = koch_invariant_disk(alpha);
                UnitBound::Disk(c, r)
            }
        }
    }
}

/// The four maps sending the unit segment onto the pieces of `P([0,1])`:
/// outer thirds, then the two legs of the isosceles roof of base angle `alpha`
/// erected on the left of the middle third.
pub fn koch_child_frames(alpha: f64) -> [Frame; 4] {
    let leg = 1.0 / (6.0 * alpha.cos());
    let apex = Point2::new(0.5, alpha.tan() / 6.0);
    [
        Frame { scale: 1.0 / 3.0, cos: 1.0, sin: 0.0, t: Point2::ORIGIN },
        Frame { scale: leg, cos: alpha.cos(), sin: alpha.sin(), t: Point2::new(1.0 / 3.0, 0.0) },
        Frame { scale: leg, cos: alpha.cos(), sin: -alpha.sin(), t: apex },
        Frame { scale: 1.0 / 3.0, cos: 1.0, sin: 0.0, t: Point2::new(2.0 / 3.0, 0.0) },
    ]
}

/// A disk mapped into itself by every child map and containing the unit
/// segment, hence containing every stage.
fn koch_invariant_disk(alpha: f64) -> (Point2, f64) {
    let c = Point2::new(0.5, alpha.tan() / 12.0);
    let mut r = c.norm();
    for f in koch_child_frames(alpha) {
        r = r.max(f.apply(c).dist(c) / (1.0 - f.scale));
    }
    (c, r * (1.0 + 1e-12))
}

#[derive(Debug, Clone, Copy)]
enum UnitBound {
    Box(BBox),
    Disk(Point2, f64),
}

#[derive(Debug, Clone, Copy)]
enum WorldBound {
    Box(BBox),
    Disk(Point2, f64),
}

impl WorldBound {
    fn of(unit: UnitBound, f: &Frame) -> WorldBound {
        match unit {
            UnitBound::Box(b) if f.sin == 0.0 && f.cos > 0.0 => WorldBound::Box(BBox {
                min: f.apply(b.min),
                max: f.apply(b.max),
            }),
            UnitBound::Box(b) => {
                let c = b.min.lerp(b.max, 0.5);
                WorldBound::Disk(f.apply(c), 0.5 * b.diameter() * f.scale)
            }
            UnitBound::Disk(c, r) => WorldBound::Disk(f.apply(c), r * f.scale),
        }
    }

    fn diameter(&self) -> f64 {
        match self {
            WorldBound::Box(b) => b.diameter(),
            WorldBound::Disk(_, r) => 2.0 * r,
        }
    }

    /// Relation to the open ball `B(0, r)`.
    fn relation(&self, r: f64) -> Relation {
        match self {
            WorldBound::Box(b) => {
                let nx = 0f64.clamp(b.min.x, b.max.x);
                let ny = 0f64.clamp(b.min.y, b.max.y);
                if nx * nx + ny * ny >= r * r {
                    return Relation::Disjoint;
                }
                let fx = b.min.x.abs().max(b.max.x.abs());
                let fy = b.min.y.abs().max(b.max.y.abs());
                if fx * fx + fy * fy < r * r {
                    Relation::Inside
                } else {
                    Relation::Straddle
                }
            }
            WorldBound::Disk(c, rad) => {
                let d = c.norm();
                if d >= r + rad {
                    Relation::Disjoint
                } else if d + rad < r {
                    Relation::Inside
                } else {
                    Relation::Straddle
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    Disjoint,
    Inside,
    Straddle,
}

/// Per-depth tables of full moments (unit frame) for the rules a tree uses.
#[derive(Debug)]
struct Tables {
    fourcorner: Vec<MomentSummary>,
    offbase: Vec<MomentSummary>,
    koch: Vec<MomentSummary>,
    koch_alpha: f64,
}

impl Tables {
    fn build(rule: Rule, depth: u32) -> Tables {
        let n = depth as usize + 1;
        let unit = segment_moments(&Segment { a: Point2::ORIGIN, b: Point2::new(1.0, 0.0) });
        let mut t = Tables { fourcorner: Vec::new(), offbase: Vec::new(), koch: Vec::new(), koch_alpha: 0.0 };
        match rule {
            Rule::FourCorner | Rule::FourCornerOffBase => {
                t.fourcorner.push(unit);
                t.offbase.push(MomentSummary::ZERO);
                for d in 1..n {
                    let mut fc = MomentSummary::ZERO;
                    let mut off = MomentSummary::ZERO;
                    for (f, _) in Rule::FourCorner.children() {
                        fc += t.fourcorner[d - 1].push(&f);
                    }
                    for (f, r) in Rule::FourCornerOffBase.children() {
                        let child = if r == Rule::FourCorner { t.fourcorner[d - 1] } else { t.offbase[d - 1] };
                        off += child.push(&f);
                    }
                    t.fourcorner.push(fc);
                    t.offbase.push(off);
                }
            }
            Rule::KochP { alpha } => {
                t.koch_alpha = alpha;
                t.koch.push(unit);
                let frames = koch_child_frames(alpha);
                for d in 1..n {
                    let m = frames.iter().map(|f| t.koch[d - 1].push(f)).sum();
                    t.koch.push(m);
                }
            }
        }
        t
    }

    fn get(&self, rule: Rule, depth: u32) -> MomentSummary {
        let d = depth as usize;
        match rule {
            Rule::FourCorner => self.fourcorner[d],
            Rule::FourCornerOffBase => self.offbase[d],
            Rule::KochP { .. } => self.koch[d],
        }
    }
}

/// Exact moments of the depth-`depth` generator in its unit frame.
pub fn full_moments(rule: Rule, depth: u32) -> Result<MomentSummary, TreeError> {
    check_depth(rule, depth)?;
    Ok(Tables::build(rule, depth).get(rule, depth))
}

fn check_depth(rule: Rule, depth: u32) -> Result<(), TreeError> {
    if depth > rule.max_depth() {
        return Err(TreeError::DepthTooLarge { depth, max: rule.max_depth() });
    }
    Ok(())
}

/// Moments of the part of a set inside a ball, accumulated about the ball
/// center, with a certified bound on the truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippedMomentResult {
    /// Moments of `μ⌞B(x, r)` translated so that `x` is the origin.
    pub summary: MomentSummary,
    /// Bound on `|∫ dist(y, L)² d(μ - μ̃)|` over lines meeting the ball, hence
    /// on the error of `λ_min` of the centered second moment.
    pub error_bound: f64,
    pub nodes_visited: u64,
}

impl ClippedMomentResult {
    pub const ZERO: ClippedMomentResult =
        ClippedMomentResult { summary: MomentSummary::ZERO, error_bound: 0.0, nodes_visited: 0 };

    pub fn absorb(&mut self, o: ClippedMomentResult) {
        self.summary += o.summary;
        self.error_bound += o.error_bound;
        self.nodes_visited += o.nodes_visited;
    }
}

/// A weighted point used as an outer-quadrature atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub at: Point2,
    pub weight: f64,
}

/// `frame(G_depth)` for a generator rule `G`.
#[derive(Debug, Clone)]
pub struct ConstructionTree {
    pub frame: Frame,
    pub rule: Rule,
    pub depth: u32,
    tables: Arc<Tables>,
}

impl PartialEq for ConstructionTree {
    fn eq(&self, o: &Self) -> bool {
        self.frame == o.frame && self.rule == o.rule && self.depth == o.depth
    }
}

impl ConstructionTree {
    pub fn new(rule: Rule, depth: u32, frame: Frame) -> Result<Self, TreeError> {
        check_depth(rule, depth)?;
        if let Rule::KochP { alpha } = rule {
            Rule::koch(alpha)?;
        }
        Ok(Self { frame, rule, depth, tables: Arc::new(Tables::build(rule, depth)) })
    }

    /// Same generator under a different frame; shares the moment tables.
    pub fn with_frame(&self, frame: Frame) -> Self {
        Self { frame, ..self.clone() }
    }

    pub fn transform(&self, sim: &Similarity) -> Self {
        self.with_frame(self.frame.then_similarity(sim))
    }

    pub fn unit_moments(&self) -> MomentSummary {
        self.tables.get(self.rule, self.depth)
    }

    pub fn moments(&self) -> MomentSummary {
        self.unit_moments().push(&self.frame)
    }

    pub fn mass(&self) -> f64 {
        self.unit_moments().mass * self.frame.scale
    }

    pub fn bbox(&self) -> BBox {
        match WorldBound::of(self.rule.bound(self.depth), &self.frame) {
            WorldBound::Box(b) => b,
            WorldBound::Disk(c, r) => BBox {
                min: Point2::new(c.x - r, c.y - r),
                max: Point2::new(c.x + r, c.y + r),
            },
        }
    }

    pub fn leaf_count(&self) -> u128 {
        let mut full: u128 = 1;
        let mut off: u128 = 0;
        for _ in 0..self.depth {
            let (nf, no) = match self.rule {
                Rule::KochP { .. } | Rule::FourCorner => (full.saturating_mul(4), 0),
                Rule::FourCornerOffBase => (full.saturating_mul(4), full.saturating_mul(2).saturating_add(off.saturating_mul(2))),
            };
            full = nf;
            off = no;
        }
        match self.rule {
            Rule::FourCornerOffBase => off,
            _ => full,
        }
    }

    pub fn enumerate_leaves(&self, max_count: u128) -> Result<SegmentSet, TreeError> {
        let count = self.leaf_count();
        if count > max_count {
            return Err(TreeError::LeafOverflow { count, max: max_count });
        }
        let mut out = Vec::with_capacity(count as usize);
        collect_leaves(self.rule, self.depth, &self.frame, &mut out);
        Ok(SegmentSet::new(out))
    }

    /// Moments of the tree inside the open ball, about the ball center.
    pub fn clipped_moments(&self, ball: &Ball, rel_tol: f64) -> Result<ClippedMomentResult, TreeError> {
        self.clipped_moments_budget(ball, rel_tol, DEFAULT_NODE_BUDGET)
    }

    pub fn clipped_moments_budget(
        &self,
        ball: &Ball,
        rel_tol: f64,
        budget: u64,
    ) -> Result<ClippedMomentResult, TreeError> {
        if !(rel_tol > 0.0) {
            return Err(TreeError::BadTolerance(rel_tol));
        }
        let shift = Frame { scale: 1.0, cos: 1.0, sin: 0.0, t: -ball.center };
        let frame = shift.compose(&self.frame);
        let mut q = Query {
            tables: &self.tables,
            r: ball.radius,
            min_diam: rel_tol * ball.radius,
            budget,
            out: ClippedMomentResult::ZERO,
        };
        q.visit(self.rule, self.depth, &frame)?;
        Ok(q.out)
    }

    /// H¹ of the tree inside the half-open box `[x0, x1) × [y0, y1)`. Exact for
    /// horizontal leaves; needs an axis-aligned frame.
    pub fn half_open_box_mass(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<f64, TreeError> {
        if self.frame.sin != 0.0 || self.frame.cos <= 0.0 {
            return Err(TreeError::RotatedFrame);
        }
        Ok(box_mass(&self.tables, self.rule, self.depth, &self.frame, [x0, x1, y0, y1]))
    }

    /// Quadrature atoms: maximal nodes of diameter at most `max_diam`, each a
    /// point of the set carrying the node's mass.
    pub fn atoms(&self, max_diam: f64, max_count: usize) -> Result<Vec<Atom>, TreeError> {
        let mut out = Vec::new();
        collect_atoms(&self.tables, self.rule, self.depth, &self.frame, max_diam, max_count, &mut out)?;
        Ok(out)
    }

    pub fn contains_point_approx(&self, p: Point2, tol: f64) -> bool {
        self.distance_lower(p, tol) <= tol
    }

    /// Distance from `p` to the set, resolved down to nodes of diameter `tol`.
    pub fn distance_lower(&self, p: Point2, tol: f64) -> f64 {
        let mut best = f64::INFINITY;
        nearest(&self.tables, self.rule, self.depth, &self.frame, p, tol, &mut best);
        best
    }
}

struct Query<'a> {
    tables: &'a Tables,
    r: f64,
    min_diam: f64,
    budget: u64,
    out: ClippedMomentResult,
}

impl Query<'_> {
    fn visit(&mut self, rule: Rule, depth: u32, frame: &Frame) -> Result<(), TreeError> {
        self.out.nodes_visited += 1;
        if self.out.nodes_visited > self.budget {
            return Err(TreeError::NodeBudget { visited: self.out.nodes_visited, budget: self.budget });
        }
        let unit = self.tables.get(rule, depth);
        if unit.mass == 0.0 {
            return Ok(());
        }
        if depth == 0 {
            if let Some(leaf) = rule.leaf() {
                let ball = Ball { center: Point2::ORIGIN, radius: self.r };
                if let Some(c) = clip_segment_to_ball(&leaf.push(frame), &ball) {
                    self.out.summary += segment_moments(&c);
                }
            }
            return Ok(());
        }
        let bound = WorldBound::of(rule.bound(depth), frame);
        match bound.relation(self.r) {
            Relation::Disjoint => Ok(()),
            Relation::Inside => {
                self.out.summary += unit.push(frame);
                Ok(())
            }
            Relation::Straddle => {
                let d = bound.diameter();
                if d < self.min_diam && depth > EXACT_DEPTH {
                    let m = unit.push(frame);
                    let inside = m.centroid().is_some_and(|c| c.norm() < self.r);
                    if inside {
                        self.out.summary += m;
                    }
                    let reach = 2.0 * (self.r + d);
                    self.out.error_bound += m.mass * reach * reach;
                    return Ok(());
                }
                for (cf, cr) in rule.children() {
                    self.visit(cr, depth - 1, &frame.compose(&cf))?;
                }
                Ok(())
            }
        }
    }
}

fn collect_leaves(rule: Rule, depth: u32, frame: &Frame, out: &mut Vec<Segment>) {
    if depth == 0 {
        if let Some(leaf) = rule.leaf() {
            out.push(leaf.push(frame));
        }
        return;
    }
    for (cf, cr) in rule.children() {
        collect_leaves(cr, depth - 1, &frame.compose(&cf), out);
    }
}

fn is_fourcorner(rule: Rule) -> bool {
    matches!(rule, Rule::FourCorner | Rule::FourCornerOffBase)
}

fn box_mass(tables: &Tables, rule: Rule, depth: u32, frame: &Frame, q: [f64; 4]) -> f64 {
    let unit = tables.get(rule, depth);
    if unit.mass == 0.0 {
        return 0.0;
    }
    let [qx0, qx1, qy0, qy1] = q;
    if depth == 0 {
        let Some(leaf) = rule.leaf() else { return 0.0 };
        let s = leaf.push(frame);
        let y = s.a.y;
        if !(y >= qy0 && y < qy1) {
            return 0.0;
        }
        let lo = s.a.x.min(s.b.x).max(qx0);
        let hi = s.a.x.max(s.b.x).min(qx1);
        return (hi - lo).max(0.0);
    }
    let WorldBound::Box(b) = WorldBound::of(rule.bound(depth), frame) else {
        return 0.0;
    };
    // four-corner rows stay strictly below `t.y + scale`, even when the
    // rounded box top reaches it
    let below = |y: f64| b.max.y < y || (is_fourcorner(rule) && frame.t.y + frame.scale <= y);
    if b.max.x <= qx0 || b.min.x >= qx1 || below(qy0) || b.min.y >= qy1 {
        return 0.0;
    }
    if b.min.x >= qx0 && b.max.x <= qx1 && b.min.y >= qy0 && below(qy1) {
        return unit.mass * frame.scale;
    }
    rule.children()
        .iter()
        .map(|(cf, cr)| box_mass(tables, *cr, depth - 1, &frame.compose(cf), q))
        .sum()
}

fn collect_atoms(
    tables: &Tables,
    rule: Rule,
    depth: u32,
    frame: &Frame,
    max_diam: f64,
    max_count: usize,
    out: &mut Vec<Atom>,
) -> Result<(), TreeError> {
    let mass = tables.get(rule, depth).mass * frame.scale;
    if mass == 0.0 {
        return Ok(());
    }
    let diam = if depth == 0 { frame.scale } else { WorldBound::of(rule.bound(depth), frame).diameter() };
    if diam <= max_diam || depth == 0 {
        if out.len() >= max_count {
            return Err(TreeError::LeafOverflow { count: out.len() as u128 + 1, max: max_count as u128 });
        }
        let anchor = rule.anchor(depth).unwrap_or(Point2::ORIGIN);
        out.push(Atom { at: frame.apply(anchor), weight: mass });
        return Ok(());
    }
    for (cf, cr) in rule.children() {
        collect_atoms(tables, cr, depth - 1, &frame.compose(&cf), max_diam, max_count, out)?;
    }
    Ok(())
}

fn nearest(tables: &Tables, rule: Rule, depth: u32, frame: &Frame, p: Point2, tol: f64, best: &mut f64) {
    if tables.get(rule, depth).mass == 0.0 {
        return;
    }
    if depth == 0 {
        if let Some(leaf) = rule.leaf() {
            *best = best.min(leaf.push(frame).distance_to(p));
        }
        return;
    }
    let bound = WorldBound::of(rule.bound(depth), frame);
    let lower = match bound {
        WorldBound::Box(b) => {
            let nx = p.x.clamp(b.min.x, b.max.x);
            let ny = p.y.clamp(b.min.y, b.max.y);
            Point2::new(nx, ny).dist(p)
        }
        WorldBound::Disk(c, r) => (c.dist(p) - r).max(0.0),
    };
    if lower >= *best {
        return;
    }
    if bound.diameter() <= tol {
        *best = best.min(lower + bound.diameter());
        return;
    }
    let mut kids: Vec<(Frame, Rule)> = rule.children();
    kids.sort_by(|a, b| a.0.t.dist(p).total_cmp(&b.0.t.dist(p)));
    for (cf, cr) in kids {
        nearest(tables, cr, depth - 1, &frame.compose(&cf), p, tol, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn explicit_clip(set: &SegmentSet, ball: &Ball) -> MomentSummary {
        set.clipped_moments_about(ball, ball.center)
    }

    fn frobenius_gap(a: &MomentSummary, b: &MomentSummary) -> f64 {
        let mut g: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                g = g.max((a.second[i][j] - b.second[i][j]).abs());
            }
        }
        g
    }

    #[test]
    fn fourcorner_depth0_and_1() {
        let m0 = full_moments(Rule::FourCorner, 0).unwrap();
        assert_eq!(m0.mass, 1.0);
        assert_eq!(m0.first, [0.5, 0.0]);
        let m1 = full_moments(Rule::FourCorner, 1).unwrap();
        assert_eq!(m1.mass, 1.0);
        let c = m1.centroid().unwrap();
        assert_relative_eq!(c.x, 0.5, epsilon = 1e-15);
        assert_relative_eq!(c.y, 0.375, epsilon = 1e-15);
        let cen = m1.centered();
        assert_relative_eq!(cen[0][0], 7.0 / 48.0, epsilon = 1e-15);
        assert_relative_eq!(cen[1][1], 9.0 / 64.0, epsilon = 1e-15);
        assert!(cen[0][1].abs() < 1e-15);
    }

    #[test]
    fn fourcorner_mass_is_one_at_every_depth() {
        for k in 0..=MAX_FOURCORNER_DEPTH {
            assert_eq!(full_moments(Rule::FourCorner, k).unwrap().mass, 1.0, "depth {k}");
        }
        assert!(full_moments(Rule::FourCorner, 65).is_err());
    }

    #[test]
    fn offbase_mass_and_leaves() {
        for d in 0..=20u32 {
            let m = full_moments(Rule::FourCornerOffBase, d).unwrap().mass;
            assert_eq!(m, 1.0 - 0.5f64.powi(d as i32));
        }
        // off-base part plus bottom row recovers the full stage
        let t = ConstructionTree::new(Rule::FourCornerOffBase, 4, Frame::IDENTITY).unwrap();
        let leaves = t.enumerate_leaves(1 << 20).unwrap();
        assert_eq!(leaves.len() as u128, t.leaf_count());
        assert_eq!(leaves.len(), 256 - 16);
        assert!(leaves.segments().iter().all(|s| s.a.y > 0.0));
    }

    #[test]
    fn koch_mass_law() {
        for alpha in [PI / 6.0, PI / 4.0, PI / 3.0] {
            let rho = (1.0 / alpha.cos() + 2.0) / 3.0;
            for m in 0..=12 {
                let mass = full_moments(Rule::KochP { alpha }, m).unwrap().mass;
                assert_relative_eq!(mass, rho.powi(m as i32), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn koch_depth1_leaves() {
        let t = ConstructionTree::new(Rule::KochP { alpha: PI / 3.0 }, 1, Frame::IDENTITY).unwrap();
        let set = t.enumerate_leaves(16).unwrap();
        assert_eq!(set.len(), 4);
        for s in set.segments() {
            assert_relative_eq!(s.length(), 1.0 / 3.0, epsilon = 1e-15);
        }
        let top = set.segments().iter().map(|s| s.a.y.max(s.b.y)).fold(0.0, f64::max);
        assert_relative_eq!(top, 3f64.sqrt() / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn koch_stages_stay_in_invariant_disk() {
        for alpha in [0.2, PI / 4.0, PI / 3.0, 1.4] {
            let (c, r) = koch_invariant_disk(alpha);
            let t = ConstructionTree::new(Rule::KochP { alpha }, 5, Frame::IDENTITY).unwrap();
            for s in t.enumerate_leaves(1 << 12).unwrap().segments() {
                assert!(s.a.dist(c) <= r && s.b.dist(c) <= r);
            }
        }
    }

    #[test]
    fn depth0_is_frame_segment() {
        let f = Frame::new(2.0, 0.3, Point2::new(1.0, -1.0));
        let t = ConstructionTree::new(Rule::FourCorner, 0, f).unwrap();
        let set = t.enumerate_leaves(1).unwrap();
        assert_eq!(set.segments()[0], Segment { a: f.apply(Point2::ORIGIN), b: f.apply(Point2::new(1.0, 0.0)) });
    }

    #[test]
    fn leaf_overflow_reports_count() {
        let t = ConstructionTree::new(Rule::FourCorner, 10, Frame::IDENTITY).unwrap();
        assert_eq!(t.enumerate_leaves(100), Err(TreeError::LeafOverflow { count: 1 << 20, max: 100 }));
    }

    #[test]
    fn disjoint_and_containing_balls() {
        let t = ConstructionTree::new(Rule::FourCorner, 6, Frame::IDENTITY).unwrap();
        let far = t.clipped_moments(&Ball::new(Point2::new(5.0, 5.0), 1.0).unwrap(), 1e-4).unwrap();
        assert_eq!(far.summary, MomentSummary::ZERO);
        assert_eq!(far.error_bound, 0.0);
        let ball = Ball::new(Point2::new(0.5, 0.5), 1.0).unwrap();
        let all = t.clipped_moments(&ball, 1e-4).unwrap();
        assert_eq!(all.error_bound, 0.0);
        let shifted = t.moments().push(&Frame { scale: 1.0, cos: 1.0, sin: 0.0, t: Point2::new(-0.5, -0.5) });
        assert_eq!(all.summary.mass, shifted.mass);
        assert!(frobenius_gap(&all.summary, &shifted) < 1e-15);
        assert!(t.clipped_moments(&ball, 0.0).is_err());
    }

    #[test]
    fn depth8_ball_against_enumeration() {
        let t = ConstructionTree::new(Rule::FourCorner, 8, Frame::IDENTITY).unwrap();
        let ball = Ball::new(Point2::ORIGIN, 1.25).unwrap();
        let res = t.clipped_moments(&ball, 1e-4).unwrap();
        let exact = explicit_clip(&t.enumerate_leaves(1 << 17).unwrap(), &ball);
        let gap = frobenius_gap(&res.summary, &exact);
        assert!(gap <= res.error_bound + 1e-12 * exact.second_norm(), "gap {gap} bound {}", res.error_bound);
        assert!(res.error_bound / exact.second_norm() <= 1e-3, "ratio {}", res.error_bound / exact.second_norm());
    }

    #[test]
    fn deep_tree_error_ratio() {
        let t = ConstructionTree::new(Rule::FourCorner, 16, Frame::IDENTITY).unwrap();
        let ball = Ball::new(Point2::ORIGIN, 1.25).unwrap();
        let coarse = t.clipped_moments(&ball, 1e-4).unwrap();
        let fine = t.clipped_moments(&ball, 1e-7).unwrap();
        assert!(frobenius_gap(&coarse.summary, &fine.summary) <= coarse.error_bound + fine.error_bound);
        assert!(fine.error_bound / fine.summary.second_norm() < 1e-4);
    }

    #[test]
    fn random_balls_against_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trees = [
            ConstructionTree::new(Rule::FourCorner, 6, Frame::IDENTITY).unwrap(),
            ConstructionTree::new(Rule::FourCornerOffBase, 6, Frame::new(0.5, 0.0, Point2::new(0.25, 0.0))).unwrap(),
            ConstructionTree::new(Rule::KochP { alpha: PI / 3.0 }, 6, Frame::new(1.0, 0.4, Point2::new(0.1, 0.2))).unwrap(),
        ];
        for t in &trees {
            let leaves = t.enumerate_leaves(100_000).unwrap();
            let bb = t.bbox();
            for _ in 0..100 {
                let c = Point2::new(rng.gen_range(bb.min.x..bb.max.x), rng.gen_range(bb.min.y..bb.max.y));
                let ball = Ball::new(c, rng.gen_range(0.01..1.0)).unwrap();
                let res = t.clipped_moments(&ball, 1e-6).unwrap();
                let exact = explicit_clip(&leaves, &ball);
                let gap = frobenius_gap(&res.summary, &exact);
                assert!(gap <= res.error_bound + 1e-13 * (1.0 + exact.second_norm()), "gap {gap} bound {}", res.error_bound);
                if exact.second_norm() > 0.0 {
                    assert!(res.error_bound <= 1e-4 * exact.second_norm() + 1e-300);
                }
            }
        }
    }

    #[test]
    fn halving_tolerance_never_increases_error() {
        let t = ConstructionTree::new(Rule::FourCorner, 12, Frame::IDENTITY).unwrap();
        let ball = Ball::new(Point2::new(0.1, 0.2), 0.77).unwrap();
        let mut prev = f64::INFINITY;
        let mut tol = 1e-1;
        for _ in 0..12 {
            let e = t.clipped_moments(&ball, tol).unwrap().error_bound;
            assert!(e <= prev);
            prev = e;
            tol *= 0.5;
        }
    }

    #[test]
    fn visited_nodes_stay_bounded() {
        let t = ConstructionTree::new(Rule::FourCorner, 64, Frame::IDENTITY).unwrap();
        for (r, tol) in [(0.3, 1e-3), (0.7, 1e-4), (1.1, 1e-5)] {
            let res = t.clipped_moments(&Ball::new(Point2::new(0.2, 0.1), r).unwrap(), tol).unwrap();
            // truncation level L has 4^L nodes of side 4^-L; only boundary ones recurse
            let level = ((1.0 / (tol * r)).ln() / 4f64.ln()).ceil();
            let ceiling = 64.0 * r * 4f64.powf(level);
            assert!((res.nodes_visited as f64) < ceiling, "{} >= {ceiling}", res.nodes_visited);
        }
        let small = t.clipped_moments_budget(&Ball::new(Point2::new(0.2, 0.1), 0.7).unwrap(), 1e-6, 10);
        assert!(matches!(small, Err(TreeError::NodeBudget { .. })));
    }

    #[test]
    fn half_open_box_mass_matches_enumeration() {
        let t = ConstructionTree::new(Rule::FourCorner, 5, Frame::IDENTITY).unwrap();
        let leaves = t.enumerate_leaves(1 << 12).unwrap();
        for level in 0..=3 {
            let n = 4i64.pow(level);
            let s = 1.0 / n as f64;
            for a in 0..n {
                for b in 0..n {
                    let (x0, y0) = (a as f64 * s, b as f64 * s);
                    let want: f64 = leaves
                        .segments()
                        .iter()
                        .filter(|g| g.a.y >= y0 && g.a.y < y0 + s)
                        .map(|g| (g.b.x.min(x0 + s) - g.a.x.max(x0)).max(0.0))
                        .sum();
                    assert_eq!(t.half_open_box_mass(x0, x0 + s, y0, y0 + s).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn atoms_carry_full_mass() {
        let t = ConstructionTree::new(Rule::FourCornerOffBase, 10, Frame::new(0.25, 0.0, Point2::new(0.25, 0.0))).unwrap();
        let atoms = t.atoms(1e-3, 1 << 20).unwrap();
        let w: f64 = atoms.iter().map(|a| a.weight).sum();
        assert_relative_eq!(w, t.mass(), max_relative = 1e-12);
        for a in atoms.iter().take(50) {
            assert!(t.distance_lower(a.at, 1e-9) <= 1e-9);
        }
    }
}
