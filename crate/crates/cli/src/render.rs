//! SVG output: one polyline per segment, grouped by construction stage.

use std::fmt::Write;

use jonesbeta::fourcorner::TailPoint;
use jonesbeta::geom::{BBox, Point2, Segment, SegmentSet};

use crate::family::Family;

const PALETTE: [&str; 8] = ["#1b1b1b", "#d1495b", "#00798c", "#edae49", "#66a182", "#2e4057", "#8d96a3", "#9b5de5"];
const CANVAS: f64 = 1000.0;
const PAD: f64 = 20.0;

/// Stage class of each segment: triadic block for Koch stages, attachment
/// stage for Σ-type sets, 0 otherwise.
pub fn classify(family: Option<&Family>, tails: &[TailPoint], seg: &Segment) -> u32 {
    let mid = seg.midpoint();
    match family {
        Some(Family::Koch { k, .. }) => (1..=*k).find(|&i| mid.x > 3f64.powi(-(i as i32))).unwrap_or(0),
        Some(Family::Sigma0 { .. } | Family::A0 { .. }) => {
            let inside = |t: &&TailPoint| {
                let within = |p: Point2| {
                    p.x >= t.at.x && p.x <= t.at.x + t.scale && p.y >= t.at.y && p.y <= t.at.y + t.scale
                };
                within(seg.a) && within(seg.b)
            };
            tails.iter().filter(inside).min_by(|a, b| a.scale.total_cmp(&b.scale)).map_or(0, |t| t.stage)
        }
        _ => 0,
    }
}

/// A grid cell of the β² overlay.
pub struct HeatCell {
    pub at: Point2,
    pub half: f64,
    pub log_beta_sq: Option<f64>,
}

struct View {
    bb: BBox,
    scale: f64,
}

impl View {
    fn new(bb: BBox) -> Self {
        let span = (bb.max.x - bb.min.x).max(bb.max.y - bb.min.y).max(f64::MIN_POSITIVE);
        View { bb, scale: (CANVAS - 2.0 * PAD) / span }
    }

    fn map(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.bb.min.x) * self.scale + PAD, (self.bb.max.y - p.y) * self.scale + PAD)
    }
}

pub fn svg(set: &SegmentSet, classes: &[u32], heat: &[HeatCell]) -> String {
    let view = View::new(set.bbox());
    let height = (view.bb.max.y - view.bb.min.y) * view.scale + 2.0 * PAD;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS}\" height=\"{height:.3}\" viewBox=\"0 0 {CANVAS} {height:.3}\">"
    );
    let logs: Vec<f64> = heat.iter().filter_map(|c| c.log_beta_sq).collect();
    if !logs.is_empty() {
        let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(out, "<g class=\"heatmap\" stroke=\"none\">");
        for c in heat {
            let Some(l) = c.log_beta_sq else { continue };
            let t = if hi > lo { (l - lo) / (hi - lo) } else { 1.0 };
            let (x, y) = view.map(Point2::new(c.at.x - c.half, c.at.y + c.half));
            let w = 2.0 * c.half * view.scale;
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.3}\" y=\"{y:.3}\" width=\"{w:.3}\" height=\"{w:.3}\" fill=\"rgb(255,{shade},{shade})\" fill-opacity=\"0.6\"/>"
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let max_class = classes.iter().copied().max().unwrap_or(0);
    for class in 0..=max_class {
        let color = PALETTE[class as usize % PALETTE.len()];
        let _ = writeln!(out, "<g class=\"stage-{class}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\">");
        for (seg, _) in set.segments().iter().zip(classes).filter(|(_, c)| **c == class) {
            let (ax, ay) = view.map(seg.a);
            let (bx, by) = view.map(seg.b);
            let _ = writeln!(out, "<polyline points=\"{ax:.3},{ay:.3} {bx:.3},{by:.3}\"/>");
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}
