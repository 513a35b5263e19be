//! Four-corner Cantor stages `E_k`, their cube combinatorics, the set Σ₀
//! (a base segment with shrinking four-corner clusters accumulating at the
//! origin) and the stages Σ_i obtained by attaching scaled copies of Σ₀ at
//! tetradic points whose cube meets the set only along its bottom edge.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Ball, Frame, GeomError, Point2, Segment, SegmentSet, Similarity, TetradicCube};
use crate::snowflake::{Representation, DEFAULT_LEAF_BUDGET};
use crate::source::Composite;
use crate::tree::{ConstructionTree, Rule, TreeError};

/// Deepest stage Σ_i we build. Copies at stage `i` are scaled by `4^{-4i}`;
/// beyond this their geometry sits below useful double precision.
pub const MAX_STAGE: u32 = 4;
/// Largest supported `n` in `E(n)`: depth `4^n` must fit the tree limit.
pub const MAX_SIGMA0_N: u32 = 3;
pub const DEFAULT_INDEX_LEVEL: i32 = 4;

#[derive(Debug, Error)]
pub enum FourCornerError {
    #[error("explicit representation needs {count} segments, budget is {budget}")]
    ExplicitTooLarge { count: u128, budget: u128 },
    #[error("level {j} must satisfy 1 <= j <= k = {k}")]
    BadLevel { j: u32, k: u32 },
    #[error("nMax must be in 1..={max}, got {n}")]
    BadNMax { n: u32, max: u32 },
    #[error("stage {0} exceeds the supported maximum {MAX_STAGE}")]
    StageTooDeep(u32),
    #[error("radius range must satisfy 0 < r_min <= r_max, got [{0}, {1}]")]
    BadRadii(f64, f64),
    #[error("attached base [{x}, {x}+{len}) is not covered by an existing base segment")]
    BaseNotCovered { x: f64, len: f64 },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// `E_k` as a composite: one four-corner tree, or its leaves when explicit.
pub fn build_4corner_ek(k: u32, repr: Representation) -> Result<Composite, FourCornerError> {
    build_4corner_ek_budget(k, repr, DEFAULT_LEAF_BUDGET)
}

pub fn build_4corner_ek_budget(k: u32, repr: Representation, budget: u128) -> Result<Composite, FourCornerError> {
    let tree = ConstructionTree::new(Rule::FourCorner, k, Frame::IDENTITY)?;
    match repr {
        Representation::Tree => Ok(tree.into()),
        Representation::Explicit => {
            let count = tree.leaf_count();
            if count > budget {
                return Err(FourCornerError::ExplicitTooLarge { count, budget });
            }
            Ok(tree.enumerate_leaves(budget)?.into())
        }
    }
}

/// A similar copy of a four-corner stage: root (lower-left point) and
/// sidelength of its cube `Q_E = root + [0, side)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterRef {
    pub root: Point2,
    pub level: u32,
    pub side: f64,
}

impl ClusterRef {
    pub fn cube(&self) -> TetradicCube {
        TetradicCube::containing(self.level as i32, self.root)
    }
}

/// The `4^j` level-`j` subclusters of `E_k` (`j <= k`), in lexicographic
/// digit order.
pub fn subclusters(j: u32) -> Vec<ClusterRef> {
    let side = crate::geom::tetradic_side(j as i32);
    let mut roots = vec![Point2::ORIGIN];
    for i in 1..=j {
        let s = crate::geom::tetradic_side(i as i32);
        roots = roots
            .iter()
            .flat_map(|r| {
                [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)].map(|(a, b)| Point2::new(r.x + a * s, r.y + b * s))
            })
            .collect();
    }
    roots.into_iter().map(|root| ClusterRef { root, level: j, side }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubeClass {
    /// Root is a tail point: the cube holds a scaled Σ₀ on its base.
    ScaledSigma0WithBase,
    /// A scaled four-corner stage not touching a base line.
    Cluster,
    /// A scaled four-corner stage together with the cube's bottom edge.
    ClusterWithBase,
    Empty,
}

impl CubeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            CubeClass::ScaledSigma0WithBase => "scaled_sigma0_with_base",
            CubeClass::Cluster => "cluster",
            CubeClass::ClusterWithBase => "cluster_with_base",
            CubeClass::Empty => "empty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub cube: TetradicCube,
    pub classification: CubeClass,
    pub mass: f64,
    /// For a cluster `x_Q + ℓ(Q)·E_m`, the depth `m`, when known.
    pub cluster_depth: Option<u32>,
    /// The cube meets the set exactly in its bottom edge.
    pub bottom_only: bool,
}

impl CubeRecord {
    pub fn density(&self) -> f64 {
        self.mass / self.cube.side()
    }

    fn empty(cube: TetradicCube) -> Self {
        CubeRecord { cube, classification: CubeClass::Empty, mass: 0.0, cluster_depth: None, bottom_only: false }
    }
}

/// `Q ∩ E_k` read off from base-4 digits: either empty or
/// `x_Q + ℓ(Q)·E_{k-j}` (a bare bottom segment once `j >= k`).
pub fn cube_trace(q: TetradicCube, k: u32) -> CubeRecord {
    if q.level < 0 {
        // coarser than the unit cube: only the cube containing the origin meets E_k
        return if q.a == 0 && q.b == 0 {
            CubeRecord {
                cube: q,
                classification: CubeClass::Cluster,
                mass: 1.0,
                cluster_depth: Some(k),
                bottom_only: false,
            }
        } else {
            CubeRecord::empty(q)
        };
    }
    let j = q.level as u32;
    let n = 1i64 << (2 * j.min(31));
    if j > 31 || q.a < 0 || q.b < 0 || q.a >= n || q.b >= n {
        return CubeRecord::empty(q);
    }
    for i in 1..=j {
        let shift = 2 * (j - i);
        let (da, db) = ((q.a >> shift) & 3, (q.b >> shift) & 3);
        let ok = if i <= k { (da == 0 || da == 3) && (db == 0 || db == 3) } else { db == 0 };
        if !ok {
            return CubeRecord::empty(q);
        }
    }
    let depth = k.saturating_sub(j);
    CubeRecord {
        cube: q,
        classification: CubeClass::Cluster,
        mass: q.side(),
        cluster_depth: Some(depth),
        bottom_only: depth == 0,
    }
}

/// Minimal gaps between distinct level-`j` subclusters of `E_k`, measured
/// on explicit segments: `horizontal` over pairs whose y-extents overlap,
/// `vertical` over pairs whose x-extents overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separations {
    pub horizontal: f64,
    pub vertical: f64,
}

pub fn subcluster_separations(k: u32, j: u32) -> Result<Separations, FourCornerError> {
    if j < 1 || j > k {
        return Err(FourCornerError::BadLevel { j, k });
    }
    let set = build_4corner_ek(k, Representation::Explicit)?.explicit;
    let mut boxes: BTreeMap<TetradicCube, [f64; 4]> = BTreeMap::new();
    for s in set.segments() {
        let c = TetradicCube::containing(j as i32, Point2::new(s.a.x.min(s.b.x), s.a.y.min(s.b.y)));
        let b = boxes.entry(c).or_insert([f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY]);
        b[0] = b[0].min(s.a.x.min(s.b.x));
        b[1] = b[1].max(s.a.x.max(s.b.x));
        b[2] = b[2].min(s.a.y.min(s.b.y));
        b[3] = b[3].max(s.a.y.max(s.b.y));
    }
    let boxes: Vec<[f64; 4]> = boxes.into_values().collect();
    let gap = |lo0: f64, hi0: f64, lo1: f64, hi1: f64| (lo1 - hi0).max(lo0 - hi1);
    let mut out = Separations { horizontal: f64::INFINITY, vertical: f64::INFINITY };
    for (i, p) in boxes.iter().enumerate() {
        for q in &boxes[i + 1..] {
            let gx = gap(p[0], p[1], q[0], q[1]);
            let gy = gap(p[2], p[3], q[2], q[3]);
            if gy < 0.0 || (gy == 0.0 && p[2] == q[2]) {
                out.horizontal = out.horizontal.min(gx);
            }
            if gx < 0.0 || (gx == 0.0 && p[0] == q[0]) {
                out.vertical = out.vertical.min(gy);
            }
        }
    }
    Ok(out)
}

/// `(3 - ¾ Σ_{i=1}^{k-j} 4^{-i})·4^{-j}`, a closed form proposed for the
/// vertical subcluster gap. It agrees with the measured gap only at `j = k`.
pub fn vertical_gap_closed_form(k: u32, j: u32) -> f64 {
    let s: f64 = (1..=k.saturating_sub(j)).map(|i| 0.25f64.powi(i as i32)).sum();
    (3.0 - 0.75 * s) * 0.25f64.powi(j as i32)
}

/// The vertical gap actually realized: a level-`j` subcluster is `4^{-j}`
/// wide and `4^{-j}(1 - 4^{-(k-j)})` tall, with rows `3·4^{-j}` apart.
pub fn vertical_gap_exact(k: u32, j: u32) -> f64 {
    (2.0 + 0.25f64.powi((k - j) as i32)) * 0.25f64.powi(j as i32)
}

/// Largest distance from an endpoint of `E_k` to `E_j`.
pub fn max_endpoint_distance(k: u32, j: u32) -> Result<f64, FourCornerError> {
    let fine = build_4corner_ek(k, Representation::Explicit)?.explicit;
    let coarse = build_4corner_ek(j, Representation::Explicit)?.explicit;
    let mut worst = 0.0f64;
    for s in fine.segments() {
        for p in [s.a, s.b] {
            worst = worst.max(coarse.distance_to(p));
        }
    }
    Ok(worst)
}

/// Truncation and representation choices for Σ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma0Params {
    /// Largest `n` with `E(n)` included.
    pub n_max: u32,
    /// `E(n)` is stored as explicit segments when it has at most this many
    /// off-base leaves, as an implicit tree otherwise.
    pub explicit_leaf_budget: u128,
}

impl Default for Sigma0Params {
    fn default() -> Self {
        Sigma0Params { n_max: 2, explicit_leaf_budget: 256 }
    }
}

impl Sigma0Params {
    pub fn validate(&self) -> Result<(), FourCornerError> {
        if self.n_max < 1 || self.n_max > MAX_SIGMA0_N {
            return Err(FourCornerError::BadNMax { n: self.n_max, max: MAX_SIGMA0_N });
        }
        Ok(())
    }
}

/// Frame of `E(n) = (4^{-n}, 0) + 4^{-n} E_{4^n}`.
pub fn en_frame(n: u32) -> Frame {
    let s = 0.25f64.powi(n as i32);
    Frame::new(s, 0.0, Point2::new(s, 0.0))
}

/// Depth `4^n` of the four-corner stage inside `E(n)`.
pub fn en_depth(n: u32) -> u32 {
    1 << (2 * n)
}

/// `1 + Σ_{n<=nMax} 4^{-n}(1 - 2^{-4^n})`: the base plus each `E(n)` minus
/// its bottom row, which lies on the base.
pub fn sigma0_mass_closed(n_max: u32) -> f64 {
    1.0 + (1..=n_max)
        .map(|n| 0.25f64.powi(n as i32) * (1.0 - 0.5f64.powi(en_depth(n) as i32)))
        .sum::<f64>()
}

/// Σ₀ without its base: the off-base parts of `E(1..=nMax)`.
fn sigma0_upper(params: &Sigma0Params) -> Result<Composite, FourCornerError> {
    params.validate()?;
    let mut explicit = Vec::new();
    let mut trees = Vec::new();
    for n in 1..=params.n_max {
        let t = ConstructionTree::new(Rule::FourCornerOffBase, en_depth(n), en_frame(n))?;
        if t.leaf_count() <= params.explicit_leaf_budget {
            explicit.extend(t.enumerate_leaves(params.explicit_leaf_budget)?.into_segments());
        } else {
            trees.push(t);
        }
    }
    Ok(Composite::new(SegmentSet::new(explicit), trees))
}

/// Σ₀ truncated at `nMax`.
pub fn build_sigma0_set(params: &Sigma0Params) -> Result<Composite, FourCornerError> {
    let mut c = sigma0_upper(params)?;
    c.explicit = c.explicit.union(&SegmentSet::new(vec![Segment::horizontal(0.0, 1.0, 0.0)?]));
    Ok(c)
}

/// Σ₀ with every `E(n)` enumerated, bottom rows included, then merged with
/// the base. Oracle for the mass and cube structure at small `nMax`.
pub fn sigma0_enumerated(n_max: u32, budget: u128) -> Result<SegmentSet, FourCornerError> {
    let mut all = vec![Segment::horizontal(0.0, 1.0, 0.0)?];
    for n in 1..=n_max {
        let t = ConstructionTree::new(Rule::FourCorner, en_depth(n), en_frame(n))?;
        let count = t.leaf_count();
        if count > budget {
            return Err(FourCornerError::ExplicitTooLarge { count, budget });
        }
        all.extend(t.enumerate_leaves(budget)?.into_segments());
    }
    Ok(SegmentSet::new(all))
}

/// A point where a copy `at + scale·Σ₀` was attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub at: Point2,
    pub scale: f64,
    pub stage: u32,
}

/// Which cubes count as tetradic attachment points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiMode {
    /// Against the truncated geometry as stored.
    Truncated,
    /// Also excludes cubes that the omitted `E(n)`, `n > nMax`, of any
    /// attached copy would occupy.
    LimitFaithful,
}

/// A finite stage Σ_i with its tail registry and cube index.
#[derive(Debug, Clone)]
pub struct ConstructionState {
    pub stage: u32,
    pub params: Sigma0Params,
    pub geometry: Composite,
    pub tails: Vec<TailPoint>,
    pub cube_index: BTreeMap<TetradicCube, CubeRecord>,
    /// Finest level present in `cube_index`.
    pub index_level: i32,
}

/// Stage 0: Σ₀ itself, with the origin as its tail point.
pub fn build_sigma0(params: Sigma0Params) -> Result<ConstructionState, FourCornerError> {
    let geometry = build_sigma0_set(&params)?;
    let tails = vec![TailPoint { at: Point2::ORIGIN, scale: 1.0, stage: 0 }];
    let cube_index = index_cubes(&geometry, &tails, DEFAULT_INDEX_LEVEL)?;
    Ok(ConstructionState { stage: 0, params, geometry, tails, cube_index, index_level: DEFAULT_INDEX_LEVEL })
}

/// The smallest float above `y`, so `[y, next_up(y))` selects the line `y`.
fn next_up(y: f64) -> f64 {
    if y == 0.0 {
        f64::from_bits(1)
    } else if y > 0.0 {
        f64::from_bits(y.to_bits() + 1)
    } else {
        f64::from_bits(y.to_bits() - 1)
    }
}

fn classify(geometry: &Composite, tails: &[TailPoint], cube: TetradicCube) -> Result<CubeRecord, FourCornerError> {
    let r = cube.root();
    let s = cube.side();
    let mass = geometry.half_open_box_mass(r.x, r.x + s, r.y, r.y + s)?;
    if mass <= 0.0 {
        return Ok(CubeRecord::empty(cube));
    }
    let line = geometry.half_open_box_mass(r.x, r.x + s, r.y, next_up(r.y))?;
    let tol = 1e-12 * s;
    let base = (line - s).abs() <= tol;
    let bottom_only = base && (mass - s).abs() <= tol;
    let classification = if tails.iter().any(|t| t.at == r) {
        CubeClass::ScaledSigma0WithBase
    } else if base {
        CubeClass::ClusterWithBase
    } else {
        CubeClass::Cluster
    };
    Ok(CubeRecord { cube, classification, mass, cluster_depth: None, bottom_only })
}

/// Every cube of levels `0..=max_level` carrying positive mass.
pub fn index_cubes(
    geometry: &Composite,
    tails: &[TailPoint],
    max_level: i32,
) -> Result<BTreeMap<TetradicCube, CubeRecord>, FourCornerError> {
    let mut out = BTreeMap::new();
    let bb = geometry.bbox();
    if bb.is_empty() {
        return Ok(out);
    }
    let mut frontier = Vec::new();
    for a in bb.min.x.floor() as i64..=bb.max.x.floor() as i64 {
        for b in bb.min.y.floor() as i64..=bb.max.y.floor() as i64 {
            frontier.push(TetradicCube::new(0, a, b));
        }
    }
    while let Some(c) = frontier.pop() {
        let rec = classify(geometry, tails, c)?;
        if rec.classification == CubeClass::Empty {
            continue;
        }
        out.insert(c, rec);
        if c.level < max_level {
            frontier.extend(c.children());
        }
    }
    Ok(out)
}

impl ConstructionState {
    pub fn mass(&self) -> f64 {
        self.geometry.mass()
    }

    /// Rebuilds the cube index down to `level` if it is not there yet.
    pub fn ensure_index(&mut self, level: i32) -> Result<(), FourCornerError> {
        if level > self.index_level {
            self.cube_index = index_cubes(&self.geometry, &self.tails, level)?;
            self.index_level = level;
        }
        Ok(())
    }

    fn masked(&self, cube: &TetradicCube) -> bool {
        let r = cube.root();
        let s = cube.side();
        let reach = 2.0 * 0.25f64.powi(self.params.n_max as i32 + 1);
        self.tails.iter().any(|t| r.y == t.at.y && r.x < t.at.x + t.scale * reach && r.x + s > t.at.x)
    }
}

/// Roots of the level-`i` cubes meeting the state exactly in their bottom
/// edge, sorted.
pub fn find_di(state: &ConstructionState, i: u32, mode: DiMode) -> Result<Vec<Point2>, FourCornerError> {
    let level = i as i32;
    let fresh;
    let index = if level <= state.index_level {
        &state.cube_index
    } else {
        fresh = index_cubes(&state.geometry, &state.tails, level)?;
        &fresh
    };
    let mut out: Vec<Point2> = index
        .values()
        .filter(|r| r.cube.level == level && r.bottom_only)
        .filter(|r| mode == DiMode::Truncated || !state.masked(&r.cube))
        .map(|r| r.cube.root())
        .collect();
    out.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    Ok(out)
}

/// Σ_{i} from Σ_{i-1}: attaches `x + 4^{-4i}Σ₀` at every `x ∈ D^i`.
pub fn build_stage(state: &ConstructionState) -> Result<ConstructionState, FourCornerError> {
    let i = state.stage + 1;
    if i > MAX_STAGE {
        return Err(FourCornerError::StageTooDeep(i));
    }
    let points = find_di(state, i, DiMode::Truncated)?;
    let scale = 0.25f64.powi(4 * i as i32);
    let upper = sigma0_upper(&state.params)?;
    let mut explicit = state.geometry.explicit.segments().to_vec();
    let mut trees = state.geometry.trees.clone();
    let mut tails = state.tails.clone();
    for &x in &points {
        // the copy's base must already be present
        let covered = state.geometry.explicit.segments().iter().any(|s| {
            s.a.y == x.y && s.b.y == x.y && s.a.x.min(s.b.x) <= x.x && s.a.x.max(s.b.x) >= x.x + scale
        });
        if !covered {
            return Err(FourCornerError::BaseNotCovered { x: x.x, len: scale });
        }
        let copy = upper.transform(&Similarity::new(scale, x)?);
        explicit.extend(copy.explicit.into_segments());
        trees.extend(copy.trees);
        tails.push(TailPoint { at: x, scale, stage: i });
    }
    let geometry = Composite::new(SegmentSet::new(explicit), trees);
    let index_level = state.index_level.max(i as i32 + 1);
    let cube_index = index_cubes(&geometry, &tails, index_level)?;
    Ok(ConstructionState { stage: i, params: state.params, geometry, tails, cube_index, index_level })
}

/// Σ_stage built from Σ₀.
pub fn build_a0_stage(params: Sigma0Params, stage: u32) -> Result<ConstructionState, FourCornerError> {
    let mut s = build_sigma0(params)?;
    while s.stage < stage {
        s = build_stage(&s)?;
    }
    Ok(s)
}

/// `H¹(Q ∩ state) / ℓ(Q)`.
pub fn density(q: TetradicCube, state: &ConstructionState) -> Result<f64, FourCornerError> {
    let r = q.root();
    let s = q.side();
    Ok(state.geometry.half_open_box_mass(r.x, r.x + s, r.y, r.y + s)? / s)
}

/// Registered tails within `delta / 2` of `x`.
pub fn tail_points_in_ball(state: &ConstructionState, x: Point2, delta: f64) -> Vec<TailPoint> {
    state.tails.iter().copied().filter(|t| t.at.dist(x) < delta / 2.0).collect()
}

/// Extremes of `H¹(B(x,r) ∩ E)/r` over random balls centered on `E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AhlforsEstimate {
    pub lower: f64,
    pub upper: f64,
    pub balls: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub seed: u64,
}

impl AhlforsEstimate {
    pub fn ratio(&self) -> f64 {
        self.upper / self.lower
    }
}

/// Centers are drawn by mass from quadrature atoms of size `r_min / 8`,
/// radii log-uniformly in `[r_min, r_max]`.
pub fn ahlfors_estimate(
    set: &Composite,
    balls: usize,
    r_min: f64,
    r_max: f64,
    seed: u64,
) -> Result<AhlforsEstimate, FourCornerError> {
    if !(r_min > 0.0 && r_min <= r_max) {
        return Err(FourCornerError::BadRadii(r_min, r_max));
    }
    let atoms = set.atoms(r_min / 8.0, 10_000_000)?;
    let weights = WeightedIndex::new(atoms.iter().map(|a| a.weight)).map_err(|_| FourCornerError::BadRadii(r_min, r_max))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ln0, ln1) = (r_min.ln(), r_max.ln());
    let mut est = AhlforsEstimate { lower: f64::INFINITY, upper: 0.0, balls, r_min, r_max, seed };
    for _ in 0..balls {
        let x = atoms[weights.sample(&mut rng)].at;
        let r = (ln0 + (ln1 - ln0) * rng.gen::<f64>()).exp();
        let m = set.clipped_moments(&Ball::new(x, r)?, 1e-6)?.summary.mass;
        est.lower = est.lower.min(m / r);
        est.upper = est.upper.max(m / r);
    }
    Ok(est)
}
