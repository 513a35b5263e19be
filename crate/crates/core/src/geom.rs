//! Planar primitives and closed-form H¹ moments of segments.
//!
//! Everything here is immutable and `Copy` where it fits. Coordinates are
//! `f64`; tetradic quantities (multiples of `4^-k`) are binary exact, triadic
//! and trigonometric ones carry the usual rounding.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("degenerate segment: endpoints coincide at ({0}, {1})")]
    DegenerateSegment(f64, f64),
    #[error("ball radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("similarity scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("operation needs a nonempty segment set")]
    EmptySet,
    #[error("line normal must have unit length, got |n| = {0}")]
    NonUnitNormal(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    #[inline]
    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        Point2::new(self.x + t * (o.x - self.x), self.y + t * (o.y - self.y))
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Closed segment `[a, b]` of positive length. Orientation `a -> b` is kept
/// because bump construction erects triangles on its left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Result<Self, GeomError> {
        if !a.is_finite() || !b.is_finite() {
            return Err(GeomError::NonFinite("segment"));
        }
        if a == b {
            return Err(GeomError::DegenerateSegment(a.x, a.y));
        }
        Ok(Self { a, b })
    }

    /// Horizontal segment from `(x0, y)` to `(x1, y)`.
    pub fn horizontal(x0: f64, x1: f64, y: f64) -> Result<Self, GeomError> {
        Self::new(Point2::new(x0, y), Point2::new(x1, y))
    }

    #[inline]
    pub fn dir(&self) -> Point2 {
        self.b - self.a
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.dir().norm()
    }

    #[inline]
    pub fn point_at(&self, t: f64) -> Point2 {
        self.a.lerp(self.b, t)
    }

    #[inline]
    pub fn midpoint(&self) -> Point2 {
        self.point_at(0.5)
    }

    pub fn reversed(&self) -> Segment {
        Segment { a: self.b, b: self.a }
    }

    /// Parameter in `[0, 1]` of the closest point to `p`.
    pub fn closest_param(&self, p: Point2) -> f64 {
        let d = self.dir();
        ((p - self.a).dot(d) / d.norm_sq()).clamp(0.0, 1.0)
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        self.point_at(self.closest_param(p)).dist(p)
    }

    pub fn transform(&self, sim: &Similarity) -> Segment {
        Segment { a: sim.apply(self.a), b: sim.apply(self.b) }
    }

    pub fn push(&self, frame: &Frame) -> Segment {
        Segment { a: frame.apply(self.a), b: frame.apply(self.b) }
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_points(&[self.a, self.b])
    }
}

/// Line `{p : n·p = c}` with unit normal `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub n: Point2,
    pub c: f64,
}

impl Line {
    pub fn new(n: Point2, c: f64) -> Result<Self, GeomError> {
        if !n.is_finite() || !c.is_finite() {
            return Err(GeomError::NonFinite("line"));
        }
        let len = n.norm();
        if (len - 1.0).abs() > 1e-12 {
            return Err(GeomError::NonUnitNormal(len));
        }
        Ok(Self { n, c })
    }

    /// Line through `p` with direction `dir` (any nonzero length).
    pub fn through(p: Point2, dir: Point2) -> Result<Self, GeomError> {
        let len = dir.norm();
        if !(len > 0.0) || !p.is_finite() {
            return Err(GeomError::NonFinite("line direction"));
        }
        let n = dir.perp() * (1.0 / len);
        Ok(Self { n, c: n.dot(p) })
    }

    #[inline]
    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.n.dot(p) - self.c
    }

    #[inline]
    pub fn distance(&self, p: Point2) -> f64 {
        self.signed_distance(p).abs()
    }

    pub fn direction(&self) -> Point2 {
        Point2::new(self.n.y, -self.n.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point2,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point2, radius: f64) -> Result<Self, GeomError> {
        if !center.is_finite() || !radius.is_finite() {
            return Err(GeomError::NonFinite("ball"));
        }
        if !(radius > 0.0) {
            return Err(GeomError::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }

    /// Open-ball membership.
    #[inline]
    pub fn contains(&self, p: Point2) -> bool {
        (p - self.center).norm_sq() < self.radius * self.radius
    }
}

/// Map `p -> scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub translation: Point2,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity { scale: 1.0, translation: Point2::ORIGIN };

    pub fn new(scale: f64, translation: Point2) -> Result<Self, GeomError> {
        if !scale.is_finite() || !translation.is_finite() {
            return Err(GeomError::NonFinite("similarity"));
        }
        if !(scale > 0.0) {
            return Err(GeomError::NonPositiveScale(scale));
        }
        Ok(Self { scale, translation })
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        p * self.scale + self.translation
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Similarity) -> Similarity {
        Similarity {
            scale: self.scale * inner.scale,
            translation: self.apply(inner.translation),
        }
    }

    pub fn inverse(&self) -> Similarity {
        Similarity {
            scale: 1.0 / self.scale,
            translation: -self.translation * (1.0 / self.scale),
        }
    }
}

/// Orientation-preserving similarity with rotation: `p -> scale * R p + t`.
/// Rotation is stored as `(cos, sin)` so axis-aligned frames stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub scale: f64,
    pub cos: f64,
    pub sin: f64,
    pub t: Point2,
}

impl Frame {
    pub const IDENTITY: Frame = Frame { scale: 1.0, cos: 1.0, sin: 0.0, t: Point2::ORIGIN };

    pub fn new(scale: f64, angle: f64, t: Point2) -> Self {
        let (sin, cos) = if angle == 0.0 { (0.0, 1.0) } else { angle.sin_cos() };
        Self { scale, cos, sin, t }
    }

    pub fn from_similarity(sim: &Similarity) -> Self {
        Self { scale: sim.scale, cos: 1.0, sin: 0.0, t: sim.translation }
    }

    /// Frame sending the unit segment `(0,0)-(1,0)` onto `seg`.
    pub fn onto_segment(seg: &Segment) -> Self {
        let d = seg.dir();
        let len = d.norm();
        Self { scale: len, cos: d.x / len, sin: d.y / len, t: seg.a }
    }

    #[inline]
    pub fn rotate(&self, p: Point2) -> Point2 {
        Point2::new(self.cos * p.x - self.sin * p.y, self.sin * p.x + self.cos * p.y)
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        self.rotate(p) * self.scale + self.t
    }

    /// Inverse map applied to a point.
    #[inline]
    pub fn unapply(&self, p: Point2) -> Point2 {
        let q = (p - self.t) * (1.0 / self.scale);
        Point2::new(self.cos * q.x + self.sin * q.y, -self.sin * q.x + self.cos * q.y)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Frame) -> Frame {
        Frame {
            scale: self.scale * inner.scale,
            cos: self.cos * inner.cos - self.sin * inner.sin,
            sin: self.sin * inner.cos + self.cos * inner.sin,
            t: self.apply(inner.t),
        }
    }

    pub fn angle(&self) -> f64 {
        self.sin.atan2(self.cos)
    }

    pub fn then_similarity(&self, sim: &Similarity) -> Frame {
        Frame::from_similarity(sim).compose(self)
    }
}

/// Axis-aligned closed box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Point2,
    pub max: Point2,
}

impl BBox {
    pub fn from_points(pts: &[Point2]) -> BBox {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BBox { min, max }
    }

    pub fn union(&self, o: &BBox) -> BBox {
        BBox {
            min: Point2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Point2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn diameter(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn is_empty(&self) -> bool {
        !(self.min.x <= self.max.x && self.min.y <= self.max.y)
    }
}

/// H¹ moments `(∫dμ, ∫y dμ, ∫y yᵀ dμ)` of a measure on the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mass: f64,
    pub first: [f64; 2],
    pub second: [[f64; 2]; 2],
}

impl MomentSummary {
    pub const ZERO: MomentSummary = MomentSummary { mass: 0.0, first: [0.0; 2], second: [[0.0; 2]; 2] };

    pub fn point_mass(p: Point2, m: f64) -> Self {
        Self {
            mass: m,
            first: [m * p.x, m * p.y],
            second: [[m * p.x * p.x, m * p.x * p.y], [m * p.x * p.y, m * p.y * p.y]],
        }
    }

    pub fn centroid(&self) -> Option<Point2> {
        (self.mass > 0.0).then(|| Point2::new(self.first[0] / self.mass, self.first[1] / self.mass))
    }

    /// `∫(y-ȳ)(y-ȳ)ᵀ dμ`, zero when the mass vanishes.
    pub fn centered(&self) -> [[f64; 2]; 2] {
        if !(self.mass > 0.0) {
            return [[0.0; 2]; 2];
        }
        let (fx, fy) = (self.first[0], self.first[1]);
        let m = self.mass;
        let xy = self.second[0][1] - fx * fy / m;
        [[self.second[0][0] - fx * fx / m, xy], [xy, self.second[1][1] - fy * fy / m]]
    }

    /// Spectral norm of the (symmetric) second-moment matrix.
    pub fn second_norm(&self) -> f64 {
        let (lo, hi) = sym_eigenvalues(self.second);
        lo.abs().max(hi.abs())
    }

    /// Pushforward under `y = scale·R·x + t` with the measure scaled by `scale`
    /// (one-dimensional Hausdorff measure).
    pub fn push(&self, f: &Frame) -> MomentSummary {
        let s = f.scale;
        let m = self.mass;
        let rf = f.rotate(Point2::new(self.first[0], self.first[1]));
        // R S Rᵀ
        let (c, sn) = (f.cos, f.sin);
        let s00 = self.second[0][0];
        let s01 = self.second[0][1];
        let s11 = self.second[1][1];
        let a00 = c * c * s00 - 2.0 * c * sn * s01 + sn * sn * s11;
        let a11 = sn * sn * s00 + 2.0 * c * sn * s01 + c * c * s11;
        let a01 = c * sn * (s00 - s11) + (c * c - sn * sn) * s01;
        let t = f.t;
        let first = [s * (s * rf.x + t.x * m), s * (s * rf.y + t.y * m)];
        let cross01 = rf.x * t.y + t.x * rf.y;
        let second00 = s * (s * s * a00 + s * 2.0 * rf.x * t.x + t.x * t.x * m);
        let second11 = s * (s * s * a11 + s * 2.0 * rf.y * t.y + t.y * t.y * m);
        let second01 = s * (s * s * a01 + s * cross01 + t.x * t.y * m);
        MomentSummary {
            mass: s * m,
            first,
            second: [[second00, second01], [second01, second11]],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mass.is_finite() && self.mass >= 0.0
    }
}

impl Add for MomentSummary {
    type Output = MomentSummary;
    fn add(mut self, o: MomentSummary) -> MomentSummary {
        self += o;
        self
    }
}

impl AddAssign for MomentSummary {
    fn add_assign(&mut self, o: MomentSummary) {
        self.mass += o.mass;
        self.first[0] += o.first[0];
        self.first[1] += o.first[1];
        self.second[0][0] += o.second[0][0];
        self.second[0][1] += o.second[0][1];
        self.second[1][0] += o.second[1][0];
        self.second[1][1] += o.second[1][1];
    }
}

impl Sum for MomentSummary {
    fn sum<I: Iterator<Item = MomentSummary>>(iter: I) -> Self {
        iter.fold(MomentSummary::ZERO, |acc, m| acc + m)
    }
}

/// Eigenvalues `(λ_min, λ_max)` of a symmetric 2×2 matrix.
pub fn sym_eigenvalues(m: [[f64; 2]; 2]) -> (f64, f64) {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let rad = half_diff.hypot(m[0][1]);
    (mean - rad, mean + rad)
}

/// Exact moments of H¹ restricted to `seg`.
pub fn segment_moments(seg: &Segment) -> MomentSummary {
    let a = seg.a;
    let d = seg.dir();
    let len = d.norm();
    let xx = a.x * a.x + a.x * d.x + d.x * d.x / 3.0;
    let yy = a.y * a.y + a.y * d.y + d.y * d.y / 3.0;
    let xy = a.x * a.y + 0.5 * (a.x * d.y + d.x * a.y) + d.x * d.y / 3.0;
    MomentSummary {
        mass: len,
        first: [len * (a.x + 0.5 * d.x), len * (a.y + 0.5 * d.y)],
        second: [[len * xx, len * xy], [len * xy, len * yy]],
    }
}

/// Apply a translation-and-scaling similarity to a moment summary.
pub fn transform_moments(ms: &MomentSummary, s: &Similarity) -> Result<MomentSummary, GeomError> {
    if !(s.scale > 0.0) {
        return Err(GeomError::NonPositiveScale(s.scale));
    }
    Ok(ms.push(&Frame::from_similarity(s)))
}

/// Parameter interval `[t0, t1] ⊂ [0, 1]` of `seg` inside the open ball, if
/// it has positive length.
pub fn clip_params(seg: &Segment, ball: &Ball) -> Option<(f64, f64)> {
    let d = seg.dir();
    let w = seg.a - ball.center;
    let qa = d.norm_sq();
    let qb = w.dot(d);
    let qc = w.norm_sq() - ball.radius * ball.radius;
    let disc = qb * qb - qa * qc;
    if !(disc > 0.0) {
        return None;
    }
    let sq = disc.sqrt();
    // stable roots of qa t² + 2 qb t + qc
    let (r0, r1) = if qb >= 0.0 {
        let q = -(qb + sq);
        (q / qa, if q != 0.0 { qc / q } else { 0.0 })
    } else {
        let q = -qb + sq;
        (qc / q, q / qa)
    };
    let (lo, hi) = if r0 <= r1 { (r0, r1) } else { (r1, r0) };
    let t0 = lo.max(0.0);
    let t1 = hi.min(1.0);
    (t1 > t0).then_some((t0, t1))
}

/// Subsegment of `seg` inside the open ball, or `None` if the intersection has
/// zero length.
pub fn clip_segment_to_ball(seg: &Segment, ball: &Ball) -> Option<Segment> {
    let (t0, t1) = clip_params(seg, ball)?;
    let a = if t0 == 0.0 { seg.a } else { seg.point_at(t0) };
    let b = if t1 == 1.0 { seg.b } else { seg.point_at(t1) };
    Segment::new(a, b).ok()
}

/// Tetradic half-open square `root + [0, 4^-level)²`, with `root = (a, b)·4^-level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TetradicCube {
    pub level: i32,
    pub a: i64,
    pub b: i64,
}

impl TetradicCube {
    pub fn new(level: i32, a: i64, b: i64) -> Self {
        Self { level, a, b }
    }

    /// Cube of the given level containing `p`.
    pub fn containing(level: i32, p: Point2) -> Self {
        let s = tetradic_side(level);
        Self { level, a: (p.x / s).floor() as i64, b: (p.y / s).floor() as i64 }
    }

    #[inline]
    pub fn side(&self) -> f64 {
        tetradic_side(self.level)
    }

    #[inline]
    pub fn root(&self) -> Point2 {
        let s = self.side();
        Point2::new(self.a as f64 * s, self.b as f64 * s)
    }

    pub fn contains(&self, p: Point2) -> bool {
        let r = self.root();
        let s = self.side();
        p.x >= r.x && p.x < r.x + s && p.y >= r.y && p.y < r.y + s
    }

    /// The 16 cubes of the next level inside this one.
    pub fn children(&self) -> impl Iterator<Item = TetradicCube> + '_ {
        (0..16).map(move |i| TetradicCube {
            level: self.level + 1,
            a: self.a * 4 + (i % 4),
            b: self.b * 4 + (i / 4),
        })
    }

    pub fn parent(&self) -> TetradicCube {
        TetradicCube { level: self.level - 1, a: self.a.div_euclid(4), b: self.b.div_euclid(4) }
    }
}

/// `4^-level` as an exact power of two.
#[inline]
pub fn tetradic_side(level: i32) -> f64 {
    2f64.powi(-2 * level)
}

/// Finite union of segments in canonical form: collinear segments that
/// overlap or touch are merged into maximal segments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentSet {
    segments: Vec<Segment>,
}

impl SegmentSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Canonicalize an arbitrary list of segments.
    pub fn new(raw: Vec<Segment>) -> Self {
        merge_overlaps(&raw)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn moments(&self) -> MomentSummary {
        self.segments.iter().map(segment_moments).sum()
    }

    /// Exact moments of the part inside the open ball, accumulated relative to
    /// `origin` (pass the ball center to limit cancellation).
    pub fn clipped_moments_about(&self, ball: &Ball, origin: Point2) -> MomentSummary {
        let shift = Similarity { scale: 1.0, translation: -origin };
        self.segments
            .iter()
            .filter_map(|s| clip_segment_to_ball(s, ball))
            .map(|s| segment_moments(&s.transform(&shift)))
            .sum()
    }

    pub fn bbox(&self) -> BBox {
        let pts: Vec<Point2> = self.segments.iter().flat_map(|s| [s.a, s.b]).collect();
        BBox::from_points(&pts)
    }

    pub fn transform(&self, sim: &Similarity) -> SegmentSet {
        SegmentSet { segments: self.segments.iter().map(|s| s.transform(sim)).collect() }
    }

    pub fn push(&self, frame: &Frame) -> SegmentSet {
        SegmentSet { segments: self.segments.iter().map(|s| s.push(frame)).collect() }
    }

    /// Union with another set, re-canonicalized.
    pub fn union(&self, other: &SegmentSet) -> SegmentSet {
        let mut all = self.segments.clone();
        all.extend_from_slice(&other.segments);
        merge_overlaps(&all)
    }

    pub fn distance_to(&self, p: Point2) -> f64 {
        self.segments.iter().map(|s| s.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    /// Restriction to the closed half-plane `{x >= x0}`; pieces of zero length dropped.
    pub fn restrict_x_ge(&self, x0: f64) -> SegmentSet {
        let mut out = Vec::new();
        for s in &self.segments {
            let (a, b) = (s.a, s.b);
            if a.x >= x0 && b.x >= x0 {
                out.push(*s);
            } else if a.x < x0 && b.x < x0 {
                continue;
            } else {
                let t = (x0 - a.x) / (b.x - a.x);
                let p = Point2::new(x0, a.y + t * (b.y - a.y));
                let piece = if a.x >= x0 { Segment::new(a, p) } else { Segment::new(p, b) };
                if let Ok(piece) = piece {
                    out.push(piece);
                }
            }
        }
        SegmentSet { segments: out }
    }

    /// Segments sorted by endpoints with orientation normalized; for point-set
    /// comparisons.
    pub fn sorted_unoriented(&self) -> Vec<[f64; 4]> {
        let mut v: Vec<[f64; 4]> = self
            .segments
            .iter()
            .map(|s| {
                let (p, q) = if (s.a.x, s.a.y) <= (s.b.x, s.b.y) { (s.a, s.b) } else { (s.b, s.a) };
                [p.x, p.y, q.x, q.y]
            })
            .collect();
        v.sort_by(|u, w| u.partial_cmp(w).unwrap_or(Ordering::Equal));
        v
    }
}

/// Direction angle in `[0, π)` (up to a tiny wrap band) and unit direction.
fn canonical_direction(s: &Segment) -> (f64, Point2) {
    let d = s.dir();
    let len = d.norm();
    let mut u = d * (1.0 / len);
    if u.y < 0.0 || (u.y == 0.0 && u.x < 0.0) {
        u = -u;
    }
    let mut theta = u.y.atan2(u.x);
    if theta > std::f64::consts::PI - 1e-12 {
        u = -u;
        theta -= std::f64::consts::PI;
    }
    (theta, u)
}

/// Merge collinear segments that overlap or touch. Segments that are not merged
/// keep their orientation; merged runs take the orientation of their earliest
/// input. Output order follows the earliest input index of each run.
pub fn merge_overlaps(raw: &[Segment]) -> SegmentSet {
    if raw.len() < 2 {
        return SegmentSet { segments: raw.to_vec() };
    }
    let extent = BBox::from_points(&raw.iter().flat_map(|s| [s.a, s.b]).collect::<Vec<_>>()).diameter();
    let eps = 1e-12 * extent.max(f64::MIN_POSITIVE);

    struct Key {
        idx: usize,
        theta: f64,
        c: f64,
        u: Point2,
    }
    let mut keys: Vec<Key> = raw
        .iter()
        .enumerate()
        .map(|(idx, s)| {
            let (theta, u) = canonical_direction(s);
            let c = u.perp().dot(s.a);
            Key { idx, theta, c, u }
        })
        .collect();
    keys.sort_by(|p, q| {
        p.theta
            .partial_cmp(&q.theta)
            .unwrap_or(Ordering::Equal)
            .then(p.c.partial_cmp(&q.c).unwrap_or(Ordering::Equal))
    });

    // (first input index, segment)
    let mut runs: Vec<(usize, Segment)> = Vec::with_capacity(raw.len());
    let mut start = 0;
    while start < keys.len() {
        let mut end = start + 1;
        while end < keys.len()
            && (keys[end].theta - keys[start].theta).abs() <= 1e-12
            && (keys[end].c - keys[end - 1].c).abs() <= eps
        {
            end += 1;
        }
        let group = &keys[start..end];
        if group.len() == 1 {
            runs.push((group[0].idx, raw[group[0].idx]));
        } else {
            let u = group[0].u;
            // (s0, s1, idx) with s0 < s1 along u
            let mut iv: Vec<(f64, f64, usize)> = group
                .iter()
                .map(|k| {
                    let s = &raw[k.idx];
                    let (p, q) = (u.dot(s.a), u.dot(s.b));
                    (p.min(q), p.max(q), k.idx)
                })
                .collect();
            iv.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap_or(Ordering::Equal));
            let mut i = 0;
            while i < iv.len() {
                let mut j = i + 1;
                let mut hi = iv[i].1;
                while j < iv.len() && iv[j].0 <= hi + eps {
                    hi = hi.max(iv[j].1);
                    j += 1;
                }
                if j == i + 1 {
                    runs.push((iv[i].2, raw[iv[i].2]));
                } else {
                    let members = &iv[i..j];
                    let first = members.iter().map(|m| m.2).min().unwrap_or(iv[i].2);
                    let lo_pt = extreme_point(raw, members, u, false);
                    let hi_pt = extreme_point(raw, members, u, true);
                    let forward = raw[first].dir().dot(u) >= 0.0;
                    let seg = if forward {
                        Segment { a: lo_pt, b: hi_pt }
                    } else {
                        Segment { a: hi_pt, b: lo_pt }
                    };
                    runs.push((first, seg));
                }
                i = j;
            }
        }
        start = end;
    }
    runs.sort_by_key(|r| r.0);
    SegmentSet { segments: runs.into_iter().map(|r| r.1).collect() }
}

fn extreme_point(raw: &[Segment], members: &[(f64, f64, usize)], u: Point2, max: bool) -> Point2 {
    let mut best: Option<(f64, Point2)> = None;
    for m in members {
        for p in [raw[m.2].a, raw[m.2].b] {
            let s = u.dot(p);
            let better = match best {
                None => true,
                Some((b, _)) => {
                    if max {
                        s > b
                    } else {
                        s < b
                    }
                }
            };
            if better {
                best = Some((s, p));
            }
        }
    }
    best.map(|b| b.1).unwrap_or(raw[members[0].2].a)
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    seg: usize,
    t0: f64,
    t1: f64,
    f0: f64,
    f1: f64,
    upper: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.upper == o.upper
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.upper.partial_cmp(&o.upper).unwrap_or(Ordering::Equal)
    }
}

/// Upper bound for `max_{p∈[u,v]} dist(p, B)`: the distance to a single
/// segment is convex along `[u, v]`, so its maximum sits at an endpoint.
fn convex_upper(b: &SegmentSet, u: Point2, v: Point2) -> f64 {
    b.segments()
        .iter()
        .map(|s| s.distance_to(u).max(s.distance_to(v)))
        .fold(f64::INFINITY, f64::min)
}

/// `sup_{a∈A} dist(a, B)` within `tol`, by branch and bound on each segment of
/// `A`. Pieces are bounded both by the 1-Lipschitz estimate `(f0 + f1 + L) / 2`
/// and by [`convex_upper`].
pub fn directed_hausdorff(a: &SegmentSet, b: &SegmentSet, tol: f64) -> Result<f64, GeomError> {
    if !(tol > 0.0) {
        return Err(GeomError::NonPositiveTolerance(tol));
    }
    if a.is_empty() || b.is_empty() {
        return Err(GeomError::EmptySet);
    }
    let dist = |p: Point2| b.distance_to(p);
    let mut heap = BinaryHeap::new();
    let mut lower: f64 = 0.0;
    for (i, s) in a.segments().iter().enumerate() {
        let (f0, f1) = (dist(s.a), dist(s.b));
        lower = lower.max(f0).max(f1);
        let upper = (0.5 * (f0 + f1 + s.length())).min(convex_upper(b, s.a, s.b));
        heap.push(Piece { seg: i, t0: 0.0, t1: 1.0, f0, f1, upper });
    }
    while let Some(p) = heap.pop() {
        if p.upper - lower <= tol {
            break;
        }
        let s = &a.segments()[p.seg];
        let tm = 0.5 * (p.t0 + p.t1);
        let pm = s.point_at(tm);
        let fm = dist(pm);
        lower = lower.max(fm);
        let half = 0.5 * (p.t1 - p.t0) * s.length();
        for (t0, t1, f0, f1) in [(p.t0, tm, p.f0, fm), (tm, p.t1, fm, p.f1)] {
            let lip = 0.5 * (f0 + f1 + half);
            if lip <= lower + tol {
                continue;
            }
            let upper = lip.min(convex_upper(b, s.point_at(t0), s.point_at(t1)));
            if upper > lower + tol {
                heap.push(Piece { seg: p.seg, t0, t1, f0, f1, upper });
            }
        }
    }
    Ok(lower)
}

/// Hausdorff distance between two segment sets, correct to within `tol`.
pub fn hausdorff_distance(a: &SegmentSet, b: &SegmentSet, tol: f64) -> Result<f64, GeomError> {
    Ok(directed_hausdorff(a, b, tol)?.max(directed_hausdorff(b, a, tol)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Segment {
        Segment::new(Point2::new(ax, ay), Point2::new(bx, by)).unwrap()
    }

    /// Midpoint-rule oracle for the moment integrals.
    fn quadrature_moments(s: &Segment, n: usize) -> MomentSummary {
        let len = s.length();
        let w = len / n as f64;
        let mut m = MomentSummary::ZERO;
        for i in 0..n {
            let p = s.point_at((i as f64 + 0.5) / n as f64);
            m += MomentSummary::point_mass(p, w);
        }
        m
    }

    fn close(a: &MomentSummary, b: &MomentSummary, rel: f64) -> bool {
        let scale = 1.0 + a.mass.abs() + a.second_norm();
        let pairs = [
            (a.mass, b.mass),
            (a.first[0], b.first[0]),
            (a.first[1], b.first[1]),
            (a.second[0][0], b.second[0][0]),
            (a.second[0][1], b.second[0][1]),
            (a.second[1][1], b.second[1][1]),
        ];
        pairs.iter().all(|(x, y)| (x - y).abs() <= rel * scale)
    }

    #[test]
    fn unit_segment_moments() {
        let m = segment_moments(&seg(0.0, 0.0, 1.0, 0.0));
        assert_eq!(m.mass, 1.0);
        assert_eq!(m.first, [0.5, 0.0]);
        assert_relative_eq!(m.second[0][0], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.second[0][1], 0.0);
        assert_eq!(m.second[1][1], 0.0);
    }

    #[test]
    fn vertical_segment_moments() {
        let m = segment_moments(&seg(0.0, 0.0, 0.0, 2.0));
        assert_eq!(m.mass, 2.0);
        assert_eq!(m.first, [0.0, 2.0]);
        assert_relative_eq!(m.second[1][1], 8.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.second[0][0], 0.0);
    }

    #[test]
    fn moments_match_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let s = seg(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let exact = segment_moments(&s);
            let quad = quadrature_moments(&s, 100_000);
            assert!(close(&exact, &quad, 1e-6), "{exact:?} vs {quad:?}");
        }
    }

    #[test]
    fn degenerate_segment_rejected() {
        assert!(matches!(
            Segment::new(Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)),
            Err(GeomError::DegenerateSegment(..))
        ));
        assert!(Segment::new(Point2::new(f64::NAN, 0.0), Point2::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn clip_examples() {
        let b = Ball::new(Point2::ORIGIN, 1.0).unwrap();
        let c = clip_segment_to_ball(&seg(-2.0, 0.0, 2.0, 0.0), &b).unwrap();
        assert_relative_eq!(c.a.x, -1.0, epsilon = 1e-15);
        assert_relative_eq!(c.b.x, 1.0, epsilon = 1e-15);
        assert!(clip_segment_to_ball(&seg(0.0, 2.0, 1.0, 2.0), &b).is_none());
        let b2 = Ball::new(Point2::ORIGIN, 2f64.sqrt()).unwrap();
        let c = clip_segment_to_ball(&seg(0.0, 1.0, 2.0, 1.0), &b2).unwrap();
        assert_eq!(c.a, Point2::new(0.0, 1.0));
        assert_relative_eq!(c.b.x, 1.0, epsilon = 1e-15);
        assert_relative_eq!(c.b.y, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn tangent_segment_has_no_clip() {
        let b = Ball::new(Point2::ORIGIN, 1.0).unwrap();
        assert!(clip_segment_to_ball(&seg(-1.0, 1.0, 1.0, 1.0), &b).is_none());
    }

    #[test]
    fn bad_ball_and_similarity() {
        assert!(Ball::new(Point2::ORIGIN, 0.0).is_err());
        assert!(Similarity::new(-1.0, Point2::ORIGIN).is_err());
        let ms = segment_moments(&seg(0.0, 0.0, 1.0, 0.0));
        let bad = Similarity { scale: 0.0, translation: Point2::ORIGIN };
        assert!(transform_moments(&ms, &bad).is_err());
    }

    #[test]
    fn transform_examples() {
        let ms = segment_moments(&seg(0.0, 0.0, 1.0, 0.0));
        assert_eq!(transform_moments(&ms, &Similarity::IDENTITY).unwrap(), ms);
        let t = transform_moments(&ms, &Similarity::new(2.0, Point2::ORIGIN).unwrap()).unwrap();
        assert_eq!(t.mass, 2.0);
        assert_eq!(t.first, [2.0, 0.0]);
        assert_relative_eq!(t.second[0][0], 8.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn transform_matches_endpoint_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = seg(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let sim = Similarity::new(rng.gen_range(0.01..10.0), Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).unwrap();
            let pushed = transform_moments(&segment_moments(&s), &sim).unwrap();
            let direct = segment_moments(&s.transform(&sim));
            assert!(close(&pushed, &direct, 1e-12), "{pushed:?} vs {direct:?}");
        }
    }

    #[test]
    fn rotated_frame_push_matches_endpoint_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let s = seg(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let f = Frame::new(rng.gen_range(0.1..4.0), rng.gen_range(-3.0..3.0), Point2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
            let pushed = segment_moments(&s).push(&f);
            let direct = segment_moments(&s.push(&f));
            assert!(close(&pushed, &direct, 1e-12));
        }
    }

    #[test]
    fn merge_examples() {
        let m = merge_overlaps(&[seg(0.0, 0.0, 1.0, 0.0), seg(0.5, 0.0, 1.5, 0.0)]);
        assert_eq!(m.len(), 1);
        assert_eq!(m.mass(), 1.5);
        let m = merge_overlaps(&[seg(0.0, 0.0, 1.0, 0.0), seg(0.0, 1.0, 1.0, 1.0)]);
        assert_eq!(m.len(), 2);
        assert_eq!(m.mass(), 2.0);
    }

    #[test]
    fn merge_keeps_orientation_of_untouched_segments() {
        let raw = [seg(1.0, 0.0, 0.0, 0.0), seg(0.0, 1.0, 0.0, 0.0), seg(3.0, 0.0, 2.0, 0.0)];
        let m = merge_overlaps(&raw);
        assert_eq!(m.segments(), &raw);
    }

    #[test]
    fn merge_base_with_bottom_row() {
        // unit base plus 16 collinear pieces of length 2^-8 inside it
        let mut raw = vec![seg(0.0, 0.0, 1.0, 0.0)];
        for i in 0..16 {
            let x = 0.25 + i as f64 / 64.0;
            raw.push(seg(x, 0.0, x + 2f64.powi(-8), 0.0));
        }
        raw.push(seg(0.25, 0.5, 0.5, 0.5));
        let m = merge_overlaps(&raw);
        assert_eq!(m.len(), 2);
        assert_eq!(m.mass(), 1.25);
    }

    #[test]
    fn hausdorff_examples() {
        let a = SegmentSet::new(vec![seg(0.0, 0.0, 1.0, 0.0), seg(1.0, 0.0, 1.0, 1.0)]);
        assert!(hausdorff_distance(&a, &a, 1e-9).unwrap() <= 1e-9);
        let h = 0.37;
        let b = a.transform(&Similarity::new(1.0, Point2::new(0.0, h)).unwrap());
        assert_relative_eq!(hausdorff_distance(&a, &b, 1e-9).unwrap(), h, epsilon = 1e-8);
        assert!(hausdorff_distance(&a, &b, 0.0).is_err());
        assert!(hausdorff_distance(&a, &SegmentSet::empty(), 0.1).is_err());
    }

    #[test]
    fn tetradic_cube_basics() {
        let q = TetradicCube::new(1, 3, 3);
        assert_eq!(q.root(), Point2::new(0.75, 0.75));
        assert_eq!(q.side(), 0.25);
        assert!(q.contains(Point2::new(0.75, 0.75)));
        assert!(!q.contains(Point2::new(1.0, 0.8)));
        assert_eq!(q.children().count(), 16);
        assert!(q.children().all(|c| c.parent() == q));
        assert_eq!(TetradicCube::containing(2, Point2::new(0.3, 0.1)), TetradicCube::new(2, 4, 1));
    }

    fn arb_segment() -> impl Strategy<Value = Segment> {
        (-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64)
            .prop_filter("nondegenerate", |(a, b, c, d)| (a - c).abs() + (b - d).abs() > 1e-3)
            .prop_map(|(a, b, c, d)| seg(a, b, c, d))
    }

    proptest! {
        #[test]
        fn additivity_under_partition(s in arb_segment(), t in 0.05..0.95f64) {
            let mid = s.point_at(t);
            let left = Segment::new(s.a, mid).unwrap();
            let right = Segment::new(mid, s.b).unwrap();
            let whole = segment_moments(&s);
            let parts = segment_moments(&left) + segment_moments(&right);
            prop_assert!(close(&whole, &parts, 1e-12));
        }

        #[test]
        fn transforms_compose(m in 0.01..5.0f64, n in 0.01..5.0f64, zx in -3.0..3.0f64, zy in -3.0..3.0f64, s in arb_segment()) {
            let s1 = Similarity::new(m, Point2::new(zx, zy)).unwrap();
            let s2 = Similarity::new(n, Point2::new(zy, -zx)).unwrap();
            let ms = segment_moments(&s);
            let seq = transform_moments(&transform_moments(&ms, &s1).unwrap(), &s2).unwrap();
            let once = transform_moments(&ms, &s2.compose(&s1)).unwrap();
            prop_assert!(close(&seq, &once, 1e-12));
        }

        #[test]
        fn clip_preserves_moments(s in arb_segment(), cx in -2.0..2.0f64, cy in -2.0..2.0f64, r in 0.1..3.0f64) {
            let ball = Ball::new(Point2::new(cx, cy), r).unwrap();
            if let Some((t0, t1)) = clip_params(&s, &ball) {
                let inside = clip_segment_to_ball(&s, &ball).unwrap();
                let mut total = segment_moments(&inside);
                if t0 > 0.0 { total += segment_moments(&Segment::new(s.a, s.point_at(t0)).unwrap()); }
                if t1 < 1.0 { total += segment_moments(&Segment::new(s.point_at(t1), s.b).unwrap()); }
                prop_assert!(close(&total, &segment_moments(&s), 1e-11));
                prop_assert!(ball.contains(inside.midpoint()));
            }
        }

        #[test]
        fn merge_idempotent_and_mass_monotone(segs in proptest::collection::vec((0i32..6, 0i32..6, 0i32..3, 1i32..4), 1..12)) {
            // collinear-rich configurations on a small integer grid
            let raw: Vec<Segment> = segs.iter().map(|&(x, y, dir, len)| {
                let (dx, dy) = [(1, 0), (0, 1), (1, 1)][dir as usize];
                seg(x as f64, y as f64, (x + dx * len) as f64, (y + dy * len) as f64)
            }).collect();
            let merged = merge_overlaps(&raw);
            let again = merge_overlaps(merged.segments());
            prop_assert_eq!(merged.sorted_unoriented(), again.sorted_unoriented());
            let raw_mass: f64 = raw.iter().map(Segment::length).sum();
            prop_assert!(merged.mass() <= raw_mass + 1e-12);
            // union mass by rasterizing into half-unit steps keyed by direction
            let mut cells = std::collections::BTreeSet::new();
            for &(x, y, dir, len) in &segs {
                let (dx, dy) = [(1, 0), (0, 1), (1, 1)][dir as usize];
                for i in 0..2 * len {
                    cells.insert((2 * x + dx * i, 2 * y + dy * i, dir));
                }
            }
            let union_mass: f64 = cells.iter().map(|c| if c.2 == 2 { 0.5 * 2f64.sqrt() } else { 0.5 }).sum();
            prop_assert!((merged.mass() - union_mass).abs() < 1e-9, "merged {} union {}", merged.mass(), union_mass);
        }
    }
}
