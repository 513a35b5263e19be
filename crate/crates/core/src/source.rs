//! A measure source: explicit segments plus implicit trees, treated as one
//! H¹-measure. Parts are assumed to overlap only in H¹-null sets.

use serde::{Deserialize, Serialize};

use crate::geom::{BBox, Ball, MomentSummary, Point2, Segment, SegmentSet, Similarity};
use crate::tree::{Atom, ClippedMomentResult, ConstructionTree, Rule, TreeError, DEFAULT_NODE_BUDGET};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Composite {
    pub explicit: SegmentSet,
    pub trees: Vec<ConstructionTree>,
}

impl From<SegmentSet> for Composite {
    fn from(explicit: SegmentSet) -> Self {
        Composite { explicit, trees: Vec::new() }
    }
}

impl From<ConstructionTree> for Composite {
    fn from(t: ConstructionTree) -> Self {
        Composite { explicit: SegmentSet::empty(), trees: vec![t] }
    }
}

impl Composite {
    pub fn new(explicit: SegmentSet, trees: Vec<ConstructionTree>) -> Self {
        Composite { explicit, trees }
    }

    pub fn mass(&self) -> f64 {
        self.explicit.mass() + self.trees.iter().map(ConstructionTree::mass).sum::<f64>()
    }

    pub fn moments(&self) -> MomentSummary {
        self.explicit.moments() + self.trees.iter().map(ConstructionTree::moments).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.explicit.is_empty() && self.trees.iter().all(|t| t.mass() == 0.0)
    }

    pub fn bbox(&self) -> BBox {
        let mut b = self.explicit.bbox();
        for t in &self.trees {
            if t.mass() > 0.0 {
                b = b.union(&t.bbox());
            }
        }
        b
    }

    pub fn transform(&self, sim: &Similarity) -> Composite {
        Composite {
            explicit: self.explicit.transform(sim),
            trees: self.trees.iter().map(|t| t.transform(sim)).collect(),
        }
    }

    pub fn leaf_count(&self) -> u128 {
        self.trees.iter().fold(self.explicit.len() as u128, |acc, t| acc.saturating_add(t.leaf_count()))
    }

    /// Everything as explicit segments, canonicalized.
    pub fn enumerate(&self, max_count: u128) -> Result<SegmentSet, TreeError> {
        let count = self.leaf_count();
        if count > max_count {
            return Err(TreeError::LeafOverflow { count, max: max_count });
        }
        let mut all = self.explicit.segments().to_vec();
        for t in &self.trees {
            all.extend_from_slice(t.enumerate_leaves(max_count)?.segments());
        }
        Ok(SegmentSet::new(all))
    }

    /// Moments of the part inside the open ball, about the ball center.
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
        let mut out = ClippedMomentResult {
            summary: self.explicit.clipped_moments_about(ball, ball.center),
            error_bound: 0.0,
            nodes_visited: self.explicit.len() as u64,
        };
        for t in &self.trees {
            out.absorb(t.clipped_moments_budget(ball, rel_tol, budget)?);
        }
        Ok(out)
    }

    /// H¹ of the part inside `[x0, x1) × [y0, y1)`.
    pub fn half_open_box_mass(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<f64, TreeError> {
        let mut m: f64 = self.explicit.segments().iter().map(|s| segment_box_length(s, [x0, x1, y0, y1])).sum();
        for t in &self.trees {
            m += t.half_open_box_mass(x0, x1, y0, y1)?;
        }
        Ok(m)
    }

    /// Outer-quadrature atoms: explicit segments cut into pieces of length at
    /// most `max_len` (atom at the piece midpoint), tree nodes of diameter at
    /// most `max_len` (atom at a point of the node).
    pub fn atoms(&self, max_len: f64, max_count: usize) -> Result<Vec<Atom>, TreeError> {
        let mut out = Vec::new();
        for s in self.explicit.segments() {
            let n = (s.length() / max_len).ceil().max(1.0) as usize;
            if out.len() + n > max_count {
                return Err(TreeError::LeafOverflow { count: (out.len() + n) as u128, max: max_count as u128 });
            }
            let w = s.length() / n as f64;
            for i in 0..n {
                out.push(Atom { at: s.point_at((i as f64 + 0.5) / n as f64), weight: w });
            }
        }
        for t in &self.trees {
            let rest = max_count.saturating_sub(out.len());
            out.extend(t.atoms(max_len, rest)?);
        }
        Ok(out)
    }

    /// Distance from `p` to the set, with tree parts resolved to `tol`.
    pub fn distance_to(&self, p: Point2, tol: f64) -> f64 {
        let mut d = self.explicit.distance_to(p);
        for t in &self.trees {
            d = d.min(t.distance_lower(p, tol));
        }
        d
    }

    pub fn descriptor(&self) -> CompositeDescriptor {
        CompositeDescriptor {
            segments: self.explicit.segments().iter().map(|s| [s.a.x, s.a.y, s.b.x, s.b.y]).collect(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeDescriptor {
                    rule: t.rule,
                    depth: t.depth,
                    frame: [t.frame.scale, t.frame.angle(), t.frame.t.x, t.frame.t.y],
                })
                .collect(),
        }
    }
}

/// Length of `s ∩ ([x0,x1) × [y0,y1))`.
pub fn segment_box_length(s: &Segment, q: [f64; 4]) -> f64 {
    let [x0, x1, y0, y1] = q;
    let d = s.dir();
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, dp, lo, hi) in [(s.a.x, d.x, x0, x1), (s.a.y, d.y, y0, y1)] {
        if dp == 0.0 {
            // axis-parallel: half-open membership decides
            if !(p >= lo && p < hi) {
                return 0.0;
            }
        } else {
            let (ta, tb) = ((lo - p) / dp, (hi - p) / dp);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    (t1 - t0).max(0.0) * s.length()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDescriptor {
    pub rule: Rule,
    pub depth: u32,
    /// `[scale, rotation angle, tx, ty]`.
    pub frame: [f64; 4],
}

/// Serializable form of a [`Composite`] for reproducible re-construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeDescriptor {
    pub segments: Vec<[f64; 4]>,
    pub trees: Vec<TreeDescriptor>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Frame;

    #[test]
    fn box_length_half_open_rules() {
        let s = Segment::horizontal(0.0, 1.0, 0.5).unwrap();
        assert_eq!(segment_box_length(&s, [0.25, 0.5, 0.5, 0.75]), 0.25);
        assert_eq!(segment_box_length(&s, [0.25, 0.5, 0.25, 0.5]), 0.0);
        let v = Segment::new(Point2::new(0.5, 0.0), Point2::new(0.5, 1.0)).unwrap();
        assert_eq!(segment_box_length(&v, [0.5, 1.0, 0.0, 0.25]), 0.25);
        assert_eq!(segment_box_length(&v, [0.0, 0.5, 0.0, 0.25]), 0.0);
        let diag = Segment::new(Point2::ORIGIN, Point2::new(1.0, 1.0)).unwrap();
        assert!((segment_box_length(&diag, [0.0, 0.5, 0.0, 0.5]) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn composite_mass_and_enumeration() {
        let base = SegmentSet::new(vec![Segment::horizontal(0.0, 1.0, 0.0).unwrap()]);
        let t = ConstructionTree::new(Rule::FourCornerOffBase, 4, Frame::new(0.25, 0.0, Point2::new(0.25, 0.0))).unwrap();
        let c = Composite::new(base, vec![t]);
        assert_eq!(c.mass(), 1.0 + 0.25 * (1.0 - 1.0 / 16.0));
        assert_eq!(c.enumerate(1 << 12).unwrap().mass(), c.mass());
    }
}
