use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use jonesbeta::beta::{beta2_budget, BetaError};
use jonesbeta::fourcorner::{FourCornerError, TailPoint};
use jonesbeta::geom::Point2;
use jonesbeta::multiscale::{
    carleson_sum, growth_fit, jones_profile_budget, CarlesonGrid, MultiscaleError, DEFAULT_REL_TOL,
};
use jonesbeta::snowflake::{SnowflakeError, DEFAULT_LEAF_BUDGET};
use jonesbeta::source::Composite;
use jonesbeta::tree::{TreeError, DEFAULT_NODE_BUDGET};
use jonesbeta::verify::{self, VerifyConfig, DEFAULT_SEED, SUITES};
use serde::Deserialize;
use serde_json::json;

mod family;
mod render;

use family::{build, load, Family, FamilyKind, Loaded, Repr, SetFile};

#[derive(Parser)]
#[command(name = "jonesbeta", version, about = "Beta numbers, Jones functions and Carleson sums on fractal curve families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a set and write it as JSON (segments or tree descriptors)
    Gen(Opts),
    /// beta^2 at one center and radius
    Beta(Opts),
    /// Jones profile on the radii delta * ratio^-m
    Jones(Opts),
    /// Carleson sum over the ball B(at, r)
    Carleson(Opts),
    /// Run the numbered verification checks
    Verify(Opts),
    /// Draw a set as SVG
    Render(Opts),
}

/// Options shared by every command. A `--config` TOML file may set any of
/// them under the same (kebab-case) names; flags given on the command line win.
#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct Opts {
    /// Set family to build
    #[arg(value_enum)]
    family: Option<FamilyKind>,
    /// TOML file with default option values
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Read the set from a JSON file instead of building a family
    #[arg(long)]
    input: Option<PathBuf>,
    /// Stage index (Koch and four-corner), or base stage for k0
    #[arg(long)]
    k: Option<u32>,
    /// Applications of P per triadic level
    #[arg(long)]
    n: Option<u32>,
    /// Bump angle, in radians or as pi/N
    #[arg(long)]
    alpha: Option<String>,
    /// Largest E(n) kept in Sigma0
    #[arg(long)]
    nmax: Option<u32>,
    /// Attachment stage for a0
    #[arg(long)]
    stage: Option<u32>,
    /// Net stages for k0
    #[arg(long)]
    stages: Option<u32>,
    /// Sampling gap for k0 nets
    #[arg(long)]
    sample_gap: Option<f64>,
    #[arg(long, value_enum)]
    repr: Option<Repr>,
    /// Center as X,Y
    #[arg(long)]
    at: Option<String>,
    /// Ball radius
    #[arg(long)]
    r: Option<f64>,
    /// Largest radius of a Jones profile
    #[arg(long)]
    delta: Option<f64>,
    /// Ratio between consecutive radii
    #[arg(long)]
    ratio: Option<f64>,
    /// Last radius index m
    #[arg(long)]
    m_max: Option<u32>,
    /// Quadrature atom size for Carleson sums
    #[arg(long)]
    outer_gap: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Most segments an explicit construction or rendering may produce
    #[arg(long)]
    max_leaves: Option<u64>,
    /// Most tree nodes a single beta query may visit
    #[arg(long)]
    max_nodes: Option<u64>,
    /// Output directory; results go to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only this verification suite
    #[arg(long)]
    suite: Option<String>,
    /// Color segments by construction stage
    #[arg(long)]
    #[serde(default)]
    color_stages: bool,
    /// Overlay log beta^2 at this radius
    #[arg(long)]
    heatmap_r: Option<f64>,
    /// Heatmap cells per side
    #[arg(long)]
    grid: Option<u32>,
}

impl Opts {
    fn merged(self, file: Opts) -> Opts {
        macro_rules! pick {
            ($($f:ident),*) => { Opts { $($f: self.$f.or(file.$f),)* config: self.config, color_stages: self.color_stages || file.color_stages } };
        }
        pick!(
            family, input, k, n, alpha, nmax, stage, stages, sample_gap, repr, at, r, delta, ratio, m_max, outer_gap,
            rel_tol, seed, max_leaves, max_nodes, out, suite, heatmap_r, grid
        )
    }

    fn resolve(self) -> Result<Opts> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let file: Opts = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(self.merged(file))
    }

    fn rel_tol(&self) -> f64 {
        self.rel_tol.unwrap_or(DEFAULT_REL_TOL)
    }

    fn max_leaves(&self) -> u128 {
        self.max_leaves.map_or(DEFAULT_LEAF_BUDGET, u128::from)
    }

    fn max_nodes(&self) -> u64 {
        self.max_nodes.unwrap_or(DEFAULT_NODE_BUDGET)
    }

    fn at(&self) -> Result<Point2> {
        self.at.as_deref().map_or(Ok(Point2::ORIGIN), parse_point)
    }

    fn check(&self) -> Result<()> {
        ensure!(self.max_leaves != Some(0), "--max-leaves must be positive");
        ensure!(self.max_nodes != Some(0), "--max-nodes must be positive");
        ensure!(self.rel_tol() > 0.0, "--rel-tol must be positive");
        Ok(())
    }

    fn family(&self) -> Result<Option<Family>> {
        let Some(kind) = self.family else { return Ok(None) };
        let repr = self.repr.unwrap_or(Repr::Auto);
        let n_max = self.nmax.unwrap_or(2);
        Ok(Some(match kind {
            FamilyKind::Koch => Family::Koch {
                k: self.k.unwrap_or(2),
                n: self.n.unwrap_or(2),
                alpha: parse_angle(self.alpha.as_deref().unwrap_or("pi/3"))?,
                representation: repr,
            },
            FamilyKind::Fourcorner => Family::Fourcorner { k: self.k.unwrap_or(3), representation: repr },
            FamilyKind::Sigma0 => Family::Sigma0 { n_max },
            FamilyKind::A0 => Family::A0 { stage: self.stage.unwrap_or(1), n_max },
            FamilyKind::K0 => {
                let stages = self.stages.unwrap_or(3);
                Family::K0 {
                    stages,
                    r_rule: "pow2".into(),
                    base_k: self.k.unwrap_or(1),
                    sample_gap: self.sample_gap.unwrap_or(2f64.powi(-(stages as i32) - 1) / 16.0),
                }
            }
        }))
    }

    fn defaults_header(&self) -> serde_json::Value {
        json!({
            "alpha": "pi/3",
            "n": 2,
            "ratio": {"koch": 3.0, "other": 2.0},
            "rel_tol": DEFAULT_REL_TOL,
            "nmax": 2,
            "stage": 1,
            "seed": self.seed.unwrap_or(DEFAULT_SEED),
            "max_leaves": DEFAULT_LEAF_BUDGET as u64,
            "max_nodes": DEFAULT_NODE_BUDGET,
        })
    }
}

/// A set ready for queries.
struct Source {
    family: Option<Family>,
    set: Composite,
    tails: Vec<TailPoint>,
}

impl Source {
    fn ratio(&self, opts: &Opts) -> f64 {
        opts.ratio.unwrap_or_else(|| self.family.as_ref().map_or(2.0, Family::default_ratio))
    }
}

fn source(opts: &Opts) -> Result<Source> {
    let family = match (&opts.input, opts.family()?) {
        (Some(_), Some(_)) => bail!("give either a family or --input, not both"),
        (None, None) => bail!("a set family (koch, fourcorner, sigma0, a0, k0) or --input is required"),
        (None, Some(f)) => f,
        (Some(path), None) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            match load(&text)? {
                Loaded::Family(f) => f,
                Loaded::Geometry(set) => return Ok(Source { family: None, set, tails: Vec::new() }),
            }
        }
    };
    let built = build(&family, opts.max_leaves())?;
    Ok(Source { family: Some(family), set: built.set, tails: built.tails })
}

fn parse_point(s: &str) -> Result<Point2> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    ensure!(parts.len() == 2, "expected X,Y, got {s:?}");
    let x: f64 = parts[0].parse().with_context(|| format!("bad coordinate {:?}", parts[0]))?;
    let y: f64 = parts[1].parse().with_context(|| format!("bad coordinate {:?}", parts[1]))?;
    ensure!(x.is_finite() && y.is_finite(), "coordinates must be finite");
    Ok(Point2::new(x, y))
}

/// Radians, or `pi`, `pi/N`, `M*pi/N`.
fn parse_angle(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi");
    let Some(pos) = t.find("pi") else {
        return t.parse().with_context(|| format!("bad angle {s:?}"));
    };
    let coef = t[..pos].trim_end_matches('*').trim();
    let coef: f64 = if coef.is_empty() { 1.0 } else { coef.parse().with_context(|| format!("bad angle {s:?}"))? };
    let rest = t[pos + 2..].trim();
    let denom: f64 = match rest.strip_prefix('/') {
        Some(d) => d.trim().parse().with_context(|| format!("bad angle {s:?}"))?,
        None if rest.is_empty() => 1.0,
        None => bail!("bad angle {s:?}"),
    };
    Ok(coef * std::f64::consts::PI / denom)
}

/// Writes `contents` to `dir/name`, or to stdout without an output directory.
fn emit(out: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{contents}"),
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn cmd_gen(opts: &Opts) -> Result<()> {
    let family = match (&opts.input, opts.family()?) {
        (None, Some(f)) => f,
        (Some(path), None) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            match load(&text)? {
                Loaded::Family(f) => f,
                Loaded::Geometry(_) => bail!("{} has no set descriptor to rebuild from", path.display()),
            }
        }
        _ => bail!("gen needs exactly one of a family or --input"),
    };
    let built = build(&family, opts.max_leaves())?;
    let file = SetFile::new(&built);
    eprintln!("summary: {}", serde_json::to_string(&file.summary)?);
    emit(opts.out.as_deref(), "set.json", &to_json(&file)?)?;
    if !built.cubes.is_empty() {
        if let Some(dir) = opts.out.as_deref() {
            let mut csv = String::from("level,root_x,root_y,classification,mass,density\n");
            for c in &built.cubes {
                let root = c.cube.root();
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    c.cube.level,
                    root.x,
                    root.y,
                    c.classification.as_str(),
                    c.mass,
                    c.density()
                );
            }
            emit(Some(dir), "cubes.csv", &csv)?;
        }
    }
    Ok(())
}

fn cmd_beta(opts: &Opts) -> Result<()> {
    let src = source(opts)?;
    let x = opts.at()?;
    let r = opts.r.context("--r is required")?;
    let b = beta2_budget(&src.set, x, r, opts.rel_tol(), opts.max_nodes())?;
    let csv = format!("x,y,r,beta_sq,err,mass_in_ball\n{},{},{},{},{},{}\n", x.x, x.y, r, b.beta_sq, b.err, b.mass_in_ball);
    emit(opts.out.as_deref(), "beta.csv", &csv)
}

fn cmd_jones(opts: &Opts) -> Result<()> {
    let src = source(opts)?;
    let x = opts.at()?;
    let delta = opts.delta.unwrap_or(1.0);
    let ratio = src.ratio(opts);
    let m_max = opts.m_max.unwrap_or(12);
    let p = jones_profile_budget(&src.set, x, delta, ratio, m_max, opts.rel_tol(), opts.max_nodes())?;
    let mut csv = String::from("m,r,beta_sq,err,mass_in_ball,partial_sum\n");
    for s in &p.samples {
        let _ = writeln!(csv, "{},{},{},{},{},{}", s.m, s.r, s.beta_sq, s.err, s.mass_in_ball, s.partial_sum);
    }
    // ln β² against m over the radii where the ball meets the set non-trivially
    let (ms, logs): (Vec<f64>, Vec<f64>) =
        p.samples.iter().filter(|s| s.beta_sq > 0.0).map(|s| (s.m as f64, s.beta_sq.ln())).unzip();
    let fit = growth_fit(&ms, &logs).ok();
    if let Some(f) = &fit {
        eprintln!("log beta^2 vs m: slope {} pearson {}", f.slope, f.pearson);
    }
    eprintln!("partial sum {} (err {}, tail estimate {})", p.partial_sum, p.err, p.tail_estimate);
    emit(opts.out.as_deref(), "profile.csv", &csv)?;
    if let Some(dir) = opts.out.as_deref() {
        let summary = json!({
            "x": [x.x, x.y], "delta": delta, "ratio": ratio, "m_max": m_max,
            "partial_sum": p.partial_sum, "err": p.err, "tail_estimate": p.tail_estimate,
            "log_fit": fit,
            "defaults": opts.defaults_header(),
        });
        emit(Some(dir), "profile.json", &to_json(&summary)?)?;
    }
    Ok(())
}

fn cmd_carleson(opts: &Opts) -> Result<()> {
    let src = source(opts)?;
    let x = opts.at()?;
    let radius = opts.r.unwrap_or(1.0);
    let grid = CarlesonGrid {
        outer_gap: opts.outer_gap.unwrap_or(radius / 64.0),
        ratio: src.ratio(opts),
        m_max: opts.m_max.unwrap_or(10),
        rel_tol: opts.rel_tol(),
        node_budget: opts.max_nodes(),
    };
    let est = carleson_sum(&src.set, x, radius, &grid)?;
    let mut csv = String::from("sample_x,sample_y,weight,inner_sum\n");
    for s in &est.samples {
        let _ = writeln!(csv, "{},{},{},{}", s.at.x, s.at.y, s.weight, s.inner_sum);
    }
    eprintln!("Carleson sum {} over {} atoms (truncation err {})", est.value, est.samples.len(), est.err_budget);
    emit(opts.out.as_deref(), "carleson.csv", &csv)?;
    if let Some(dir) = opts.out.as_deref() {
        let summary = json!({
            "x": [x.x, x.y], "radius": radius, "value": est.value, "err_budget": est.err_budget,
            "outer_gap": est.outer_gap, "ratio": est.ratio, "m_max": est.m_max,
            "atoms": est.samples.len(), "total_weight": est.total_weight(),
            "defaults": opts.defaults_header(),
        });
        emit(Some(dir), "carleson.json", &to_json(&summary)?)?;
    }
    Ok(())
}

fn cmd_verify(opts: &Opts) -> Result<bool> {
    if let Some(s) = &opts.suite {
        ensure!(SUITES.contains(&s.as_str()), "unknown suite {s:?}; expected one of {}", SUITES.join(", "));
    }
    let cfg = VerifyConfig { seed: opts.seed.unwrap_or(DEFAULT_SEED) };
    let report = verify::report(&cfg, opts.suite.as_deref());
    for r in &report.results {
        println!("{}", r.line());
    }
    let passed = report.results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} checks passed", report.results.len());
    if let Some(dir) = opts.out.as_deref() {
        emit(Some(dir), "report.json", &to_json(&report)?)?;
    }
    Ok(report.passed)
}

fn cmd_render(opts: &Opts) -> Result<()> {
    let src = source(opts)?;
    let set = src.set.enumerate(opts.max_leaves())?;
    let classes: Vec<u32> = if opts.color_stages {
        set.segments().iter().map(|s| render::classify(src.family.as_ref(), &src.tails, s)).collect()
    } else {
        vec![0; set.len()]
    };
    let mut heat = Vec::new();
    if let Some(r) = opts.heatmap_r {
        let n = opts.grid.unwrap_or(48).max(1);
        let bb = set.bbox();
        let side = (bb.max.x - bb.min.x).max(bb.max.y - bb.min.y) / n as f64;
        let ny = (((bb.max.y - bb.min.y) / side).ceil() as u32).max(1);
        for j in 0..ny {
            for i in 0..n {
                let at = Point2::new(bb.min.x + (i as f64 + 0.5) * side, bb.min.y + (j as f64 + 0.5) * side);
                let b = beta2_budget(&src.set, at, r, opts.rel_tol(), opts.max_nodes())?;
                let log_beta_sq = (b.beta_sq > 0.0).then(|| b.beta_sq.ln());
                heat.push(render::HeatCell { at, half: side / 2.0, log_beta_sq });
            }
        }
    }
    emit(opts.out.as_deref(), "render.svg", &render::svg(&set, &classes, &heat))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (name, opts) = match cli.command {
        Command::Gen(o) => ("gen", o),
        Command::Beta(o) => ("beta", o),
        Command::Jones(o) => ("jones", o),
        Command::Carleson(o) => ("carleson", o),
        Command::Verify(o) => ("verify", o),
        Command::Render(o) => ("render", o),
    };
    let opts = opts.resolve()?;
    opts.check()?;
    eprintln!("defaults: {}", opts.defaults_header());
    match name {
        "gen" => cmd_gen(&opts)?,
        "beta" => cmd_beta(&opts)?,
        "jones" => cmd_jones(&opts)?,
        "carleson" => cmd_carleson(&opts)?,
        "render" => cmd_render(&opts)?,
        _ => {
            if !cmd_verify(&opts)? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn tree_budget(e: &TreeError) -> bool {
    matches!(e, TreeError::NodeBudget { .. } | TreeError::LeafOverflow { .. })
}

fn fourcorner_budget(e: &FourCornerError) -> bool {
    match e {
        FourCornerError::ExplicitTooLarge { .. } => true,
        FourCornerError::Tree(t) => tree_budget(t),
        _ => false,
    }
}

fn beta_budget(e: &BetaError) -> bool {
    matches!(e, BetaError::Tree(t) if tree_budget(t))
}

/// Exit status 3 for exhausted budgets, 2 for any other error.
fn exit_code(err: &anyhow::Error) -> u8 {
    let budget = err.chain().any(|c| {
        if let Some(e) = c.downcast_ref::<TreeError>() {
            tree_budget(e)
        } else if let Some(e) = c.downcast_ref::<SnowflakeError>() {
            match e {
                SnowflakeError::ExplicitTooLarge { .. } => true,
                SnowflakeError::Tree(t) => tree_budget(t),
                _ => false,
            }
        } else if let Some(e) = c.downcast_ref::<FourCornerError>() {
            fourcorner_budget(e)
        } else if let Some(e) = c.downcast_ref::<BetaError>() {
            beta_budget(e)
        } else if let Some(e) = c.downcast_ref::<MultiscaleError>() {
            match e {
                MultiscaleError::Tree(t) => tree_budget(t),
                MultiscaleError::Beta(b) => beta_budget(b),
                MultiscaleError::FourCorner(f) => fourcorner_budget(f),
                _ => false,
            }
        } else {
            false
        }
    });
    if budget {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        let pi = std::f64::consts::PI;
        assert_eq!(parse_angle("pi/3").unwrap(), pi / 3.0);
        assert_eq!(parse_angle("π/4").unwrap(), pi / 4.0);
        assert_eq!(parse_angle("2*pi/9").unwrap(), 2.0 * pi / 9.0);
        assert_eq!(parse_angle("0.5").unwrap(), 0.5);
        assert!(parse_angle("pi3").is_err());
        assert!(parse_angle("x").is_err());
    }

    #[test]
    fn points() {
        assert_eq!(parse_point("0.5, -1").unwrap(), Point2::new(0.5, -1.0));
        assert!(parse_point("1").is_err());
        assert!(parse_point("1,nan").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cli = Opts { k: Some(4), ..Opts::default() };
        let file = Opts { k: Some(2), n: Some(3), color_stages: true, ..Opts::default() };
        let m = cli.merged(file);
        assert_eq!((m.k, m.n, m.color_stages), (Some(4), Some(3), true));
    }

    #[test]
    fn config_keys_are_kebab_case() {
        let o: Opts = toml::from_str("family = \"koch\"\nrel-tol = 1e-6\nmax-leaves = 10\n").unwrap();
        assert_eq!(o.family, Some(FamilyKind::Koch));
        assert_eq!(o.rel_tol, Some(1e-6));
        assert!(toml::from_str::<Opts>("bogus = 1").is_err());
    }
}
