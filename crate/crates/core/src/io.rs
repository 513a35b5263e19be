//! JSON forms of segment sets and composites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Frame, GeomError, Point2, Segment, SegmentSet};
use crate::source::{Composite, CompositeDescriptor};
use crate::tree::{ConstructionTree, TreeError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("segment {index}: {source}")]
    Segment { index: usize, source: GeomError },
    #[error("tree {index}: {source}")]
    Tree { index: usize, source: TreeError },
}

/// `{"segments": [[ax, ay, bx, by], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSetJson {
    pub segments: Vec<[f64; 4]>,
}

impl From<&SegmentSet> for SegmentSetJson {
    fn from(set: &SegmentSet) -> Self {
        SegmentSetJson { segments: set.segments().iter().map(|s| [s.a.x, s.a.y, s.b.x, s.b.y]).collect() }
    }
}

pub fn segments_from_rows(rows: &[[f64; 4]]) -> Result<SegmentSet, IoError> {
    let segs = rows
        .iter()
        .enumerate()
        .map(|(index, r)| {
            Segment::new(Point2::new(r[0], r[1]), Point2::new(r[2], r[3])).map_err(|source| IoError::Segment { index, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SegmentSet::new(segs))
}

pub fn segment_set_from_json(text: &str) -> Result<SegmentSet, IoError> {
    let parsed: SegmentSetJson = serde_json::from_str(text)?;
    segments_from_rows(&parsed.segments)
}

pub fn segment_set_to_json(set: &SegmentSet) -> String {
    // serializing plain f64 arrays cannot fail
    serde_json::to_string(&SegmentSetJson::from(set)).unwrap_or_default()
}

/// Rebuilds a composite from its descriptor.
pub fn composite_from_descriptor(d: &CompositeDescriptor) -> Result<Composite, IoError> {
    let explicit = segments_from_rows(&d.segments)?;
    let trees = d
        .trees
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let [scale, angle, tx, ty] = t.frame;
            ConstructionTree::new(t.rule, t.depth, Frame::new(scale, angle, Point2::new(tx, ty)))
                .map_err(|source| IoError::Tree { index, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Composite::new(explicit, trees))
}
