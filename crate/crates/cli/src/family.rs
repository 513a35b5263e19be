//! Set families the command line can build, and their serialized form.

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use jonesbeta::fourcorner::{
    build_4corner_ek_budget, build_a0_stage, index_cubes, CubeRecord, Sigma0Params, TailPoint, DEFAULT_INDEX_LEVEL,
};
use jonesbeta::geom::SegmentSet;
use jonesbeta::io::{composite_from_descriptor, segments_from_rows};
use jonesbeta::snowflake::{build_k0, build_koch_ek_budget, pow2_radii, Representation, SnowflakeParams};
use jonesbeta::source::{Composite, CompositeDescriptor};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Explicit output is chosen automatically up to this many leaves.
pub const AUTO_EXPLICIT_LEAVES: u128 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Koch,
    Fourcorner,
    Sigma0,
    A0,
    K0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Repr {
    Auto,
    Explicit,
    Tree,
}

/// Everything needed to rebuild a set deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Koch { k: u32, n: u32, alpha: f64, representation: Repr },
    Fourcorner { k: u32, representation: Repr },
    Sigma0 { #[serde(rename = "nMax")] n_max: u32 },
    A0 { stage: u32, #[serde(rename = "nMax")] n_max: u32 },
    K0 { stages: u32, r_rule: String, base_k: u32, sample_gap: f64 },
}

impl Family {
    /// Default ratio `ρ` of the radius grid.
    pub fn default_ratio(&self) -> f64 {
        match self {
            Family::Koch { .. } => 3.0,
            _ => 2.0,
        }
    }
}

/// A constructed set plus what was learned while building it.
pub struct Built {
    pub family: Family,
    pub set: Composite,
    pub tails: Vec<TailPoint>,
    /// Positive-mass tetradic cubes, for the four-corner based families.
    pub cubes: Vec<CubeRecord>,
    /// Family-specific summary entries.
    pub extra: Map<String, Value>,
}

fn choose(repr: Repr, leaves: u128) -> Representation {
    match repr {
        Repr::Explicit => Representation::Explicit,
        Repr::Tree => Representation::Tree,
        Repr::Auto if leaves <= AUTO_EXPLICIT_LEAVES => Representation::Explicit,
        Repr::Auto => Representation::Tree,
    }
}

pub fn build(family: &Family, max_leaves: u128) -> Result<Built> {
    let mut extra = Map::new();
    let mut tails = Vec::new();
    let mut cubes = Vec::new();
    let set = match *family {
        Family::Koch { k, n, alpha, representation } => {
            let params = SnowflakeParams { alpha, n };
            let tree = build_koch_ek_budget(k, params, Representation::Tree, max_leaves)?;
            let repr = choose(representation, tree.set.leaf_count());
            if repr == Representation::Tree {
                tree.set
            } else {
                build_koch_ek_budget(k, params, repr, max_leaves)?.set
            }
        }
        Family::Fourcorner { k, representation } => {
            let repr = choose(representation, 4u128.saturating_pow(k));
            let set = build_4corner_ek_budget(k, repr, max_leaves)?;
            let level = (k as i32).min(DEFAULT_INDEX_LEVEL);
            cubes = index_cubes(&set, &[], level)?.into_values().collect();
            set
        }
        Family::Sigma0 { n_max } => sigma_stage(n_max, 0, &mut tails, &mut cubes, &mut extra)?,
        Family::A0 { stage, n_max } => sigma_stage(n_max, stage, &mut tails, &mut cubes, &mut extra)?,
        Family::K0 { stages, ref r_rule, base_k, sample_gap } => {
            if r_rule != "pow2" {
                bail!("unsupported radius rule {r_rule:?}; only \"pow2\" is available");
            }
            let base = build_koch_ek_budget(base_k, SnowflakeParams::default(), Representation::Explicit, max_leaves)?;
            let k0 = build_k0(stages, &base.set.explicit, &pow2_radii(stages), sample_gap)?;
            extra.insert("copies".into(), json!(k0.gamma.len()));
            extra.insert("sum_of_lengths".into(), json!(k0.sum_of_lengths()));
            extra.insert("union_mass".into(), json!(k0.union_mass()));
            extra.insert("net_sizes".into(), json!(k0.levels.iter().map(|l| l.points.len()).collect::<Vec<_>>()));
            let all: Vec<_> = k0.gamma.iter().flat_map(|g| g.segments().iter().copied()).collect();
            SegmentSet::new(all).into()
        }
    };
    Ok(Built { family: family.clone(), set, tails, cubes, extra })
}

fn sigma_stage(
    n_max: u32,
    stage: u32,
    tails: &mut Vec<TailPoint>,
    cubes: &mut Vec<CubeRecord>,
    extra: &mut Map<String, Value>,
) -> Result<Composite> {
    let state = build_a0_stage(Sigma0Params { n_max, ..Sigma0Params::default() }, stage)?;
    extra.insert("tail_points".into(), json!(state.tails.len()));
    *tails = state.tails;
    *cubes = state.cube_index.into_values().collect();
    Ok(state.geometry)
}

/// The file written by `gen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFile {
    pub descriptor: Family,
    pub summary: Map<String, Value>,
    #[serde(flatten)]
    pub geometry: CompositeDescriptor,
}

impl SetFile {
    pub fn new(built: &Built) -> Self {
        let bb = built.set.bbox();
        let mut summary = Map::new();
        summary.insert("mass".into(), json!(built.set.mass()));
        summary.insert("segments".into(), json!(built.set.explicit.len()));
        summary.insert("trees".into(), json!(built.set.trees.len()));
        summary.insert("leaves".into(), json!(built.set.leaf_count().min(u64::MAX as u128) as u64));
        summary.insert("bbox".into(), json!([bb.min.x, bb.min.y, bb.max.x, bb.max.y]));
        summary.extend(built.extra.clone());
        SetFile { descriptor: built.family.clone(), summary, geometry: built.set.descriptor() }
    }
}

/// A set read from disk: either a `gen` output (rebuilt from its
/// descriptor) or a bare `{"segments": [...]}` file.
pub enum Loaded {
    Family(Family),
    Geometry(Composite),
}

pub fn load(text: &str) -> Result<Loaded> {
    let value: Value = serde_json::from_str(text).context("input is not JSON")?;
    if let Some(d) = value.get("descriptor") {
        let family: Family = serde_json::from_value(d.clone()).context("bad set descriptor")?;
        return Ok(Loaded::Family(family));
    }
    let geometry: CompositeDescriptor = match value.get("trees") {
        Some(_) => serde_json::from_value(value).context("bad composite")?,
        None => {
            let rows: Vec<[f64; 4]> =
                serde_json::from_value(value.get("segments").cloned().unwrap_or(Value::Null)).context("expected a \"segments\" array")?;
            return Ok(Loaded::Geometry(segments_from_rows(&rows)?.into()));
        }
    };
    Ok(Loaded::Geometry(composite_from_descriptor(&geometry)?))
}
