//! Command-line driver: run configuration, subcommands and the report
//! aggregator. Every output file embeds the resolved configuration and the
//! crate version; identical configurations give byte-identical files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::decomp::{c_decompose, covered_mean_zero, decomposition_grid_with, decomposition_ratio, CellLayout};
use crate::dimension::{assouad_dimension, box_dimension, CoverTarget, DimensionEstimate};
use crate::divergence::{dipole, solve_divergence, SolverOptions};
use crate::error::Error;
use crate::fields::{Grid, GridFunction, VectorFieldGrid};
use crate::geometry::{make_domain, Point, PolygonalDomain, Preset, PresetParams};
use crate::hardy::{beta_sweep, hardy_report, snake_chain_bound, Classification, WeightSpec, DEFAULT_THETA_GRID};
use crate::inequalities::{
    fefferman_stein_ratio, fractional_poincare_ratio, frobenius_identity_residual, improved_poincare_ratio,
    korn_normalize, korn_ratio, write_csv, write_json_lines, FeffermanSteinParams, FractionalParams,
    InequalityReport,
};
use crate::numeric::geometric_grid;
use crate::testfunctions::{checkerboard, PolynomialField, TrigPolynomial};
use crate::treecover::{build_cube_chain, build_tree, chain_bound, shadow_stats, verify_shadow_lemma};
use crate::whitney::WhitneyDecomposition;

pub const ARTIFACT: &str = "whardy";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "WHARDY_THREADS";

/// A priori Fefferman–Stein cube constant `10^{5np+n+1}` at `n = 2`, `p = 2`.
const FS_A_PRIORI: f64 = 1e23;

#[derive(Parser, Debug)]
#[command(name = "whardy", version, about = "Whitney decompositions, tree constants and weighted inequality measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Whitney decomposition with sandwich, neighbor and overlap checks.
    Whitney,
    /// Tree covering, expansion constant K and shadow-growth constant.
    Tree,
    /// Box and Assouad dimension estimates.
    Dimension,
    /// Hardy tree-constant sweep over beta and levels.
    Hardy,
    /// Decomposition of random mean-zero functions.
    Decompose,
    /// Improved Poincaré ratios.
    Poincare,
    /// Fractional Poincaré ratios (Monte Carlo).
    FracPoincare,
    /// Korn ratios.
    Korn,
    /// Fefferman–Stein ratios with the restricted sharp maximal function.
    FeffermanStein,
    /// Divergence solves with weighted a-priori ratios.
    Divergence,
    /// Aggregates prior outputs in the output directory.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Whitney => "whitney",
            Command::Tree => "tree",
            Command::Dimension => "dimension",
            Command::Hardy => "hardy",
            Command::Decompose => "decompose",
            Command::Poincare => "poincare",
            Command::FracPoincare => "frac-poincare",
            Command::Korn => "korn",
            Command::FeffermanStein => "fefferman-stein",
            Command::Divergence => "divergence",
            Command::Report => "report",
        }
    }

    fn statement(self) -> &'static str {
        match self {
            Command::Whitney => "whitney_sandwich",
            Command::Tree => "tree_covering",
            Command::Dimension => "dimension_estimates",
            Command::Hardy => "hardy_tree_constant",
            Command::Decompose => "orthogonal_decomposition",
            Command::Poincare => "improved_poincare",
            Command::FracPoincare => "fractional_poincare",
            Command::Korn => "korn",
            Command::FeffermanStein => "fefferman_stein",
            Command::Divergence => "divergence",
            Command::Report => "report",
        }
    }
}

/// Flags override the configuration file key by key.
#[derive(clap::Args, Debug, Default, Clone)]
pub struct Flags {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// unit_square, l_shape, slit_square or koch.
    #[arg(long, global = true)]
    pub domain: Option<String>,
    #[arg(long, global = true)]
    pub koch_level: Option<String>,
    #[arg(long, global = true)]
    pub side: Option<String>,
    #[arg(long, global = true)]
    pub aperture: Option<String>,
    #[arg(long, global = true)]
    pub p: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta: Option<String>,
    /// `start:stop:step`, inclusive.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta_grid: Option<String>,
    #[arg(long, global = true)]
    pub max_level: Option<String>,
    /// Comma-separated levels.
    #[arg(long, global = true)]
    pub levels: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Number of random test functions.
    #[arg(long, global = true)]
    pub functions: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Worker threads; falls back to WHARDY_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<String>,
    #[arg(long, global = true)]
    pub s: Option<String>,
    #[arg(long, global = true)]
    pub tau: Option<String>,
    #[arg(long, global = true)]
    pub sigma: Option<String>,
    /// Snake chain side count.
    #[arg(long, global = true)]
    pub m: Option<String>,
    /// Comma-separated theta values.
    #[arg(long, global = true)]
    pub theta_grid: Option<String>,
    /// Monte Carlo samples.
    #[arg(long, global = true)]
    pub samples: Option<String>,
    /// Grid spacing for the inequality commands.
    #[arg(long, global = true)]
    pub h: Option<String>,
    /// Dyadic scales of the sharp maximal function.
    #[arg(long, global = true)]
    pub scales: Option<String>,
    /// Exponent of the shadow-growth check.
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    /// Grid cells per finest cube side for decompose and divergence.
    #[arg(long, global = true)]
    pub cells_per_side: Option<String>,
    /// boundary or harmonic.
    #[arg(long, global = true)]
    pub target: Option<String>,
    /// Boundary sampling spacing for dimension estimates.
    #[arg(long, global = true)]
    pub spacing: Option<String>,
    /// Centers sampled by the Assouad estimate.
    #[arg(long, global = true)]
    pub centers: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |k: &'static str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((k, v.clone()));
            }
        };
        push("domain", &self.domain);
        push("koch_level", &self.koch_level);
        push("side", &self.side);
        push("aperture", &self.aperture);
        push("p", &self.p);
        push("beta", &self.beta);
        push("beta_grid", &self.beta_grid);
        push("max_level", &self.max_level);
        push("levels", &self.levels);
        push("seed", &self.seed);
        push("functions", &self.functions);
        push("out", &self.out);
        push("threads", &self.threads);
        push("s", &self.s);
        push("tau", &self.tau);
        push("sigma", &self.sigma);
        push("m", &self.m);
        push("theta_grid", &self.theta_grid);
        push("samples", &self.samples);
        push("h", &self.h);
        push("scales", &self.scales);
        push("lambda", &self.lambda);
        push("cells_per_side", &self.cells_per_side);
        push("target", &self.target);
        push("spacing", &self.spacing);
        push("centers", &self.centers);
        out
    }
}

const KEYS: [&str; 26] = [
    "domain",
    "koch_level",
    "side",
    "aperture",
    "p",
    "beta",
    "beta_grid",
    "max_level",
    "levels",
    "seed",
    "functions",
    "out",
    "threads",
    "s",
    "tau",
    "sigma",
    "m",
    "theta_grid",
    "samples",
    "h",
    "scales",
    "lambda",
    "cells_per_side",
    "target",
    "spacing",
    "centers",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionTarget {
    Boundary,
    Harmonic,
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: Preset,
    pub koch_level: u32,
    pub side: f64,
    pub aperture: f64,
    pub p: f64,
    pub beta: f64,
    pub beta_grid: Vec<f64>,
    pub max_level: u32,
    pub levels: Vec<u32>,
    pub seed: u64,
    pub functions: usize,
    pub out: PathBuf,
    pub s: f64,
    pub tau: f64,
    pub sigma: f64,
    pub m: usize,
    pub theta_grid: Vec<f64>,
    pub samples: usize,
    pub h: f64,
    pub scales: u32,
    pub lambda: f64,
    pub cells_per_side: usize,
    pub target: DimensionTarget,
    pub spacing: Option<f64>,
    pub centers: usize,
    /// Not serialized: results do not depend on the worker count.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: Preset::UnitSquare,
            koch_level: 2,
            side: 1.0,
            aperture: 1e-3,
            p: 2.0,
            beta: 0.0,
            beta_grid: vec![0.0],
            max_level: 6,
            levels: vec![4, 5, 6],
            seed: 0,
            functions: 10,
            out: PathBuf::from("whardy-out"),
            s: 0.5,
            tau: 0.5,
            sigma: 1.0,
            m: 5,
            theta_grid: DEFAULT_THETA_GRID.to_vec(),
            samples: 100_000,
            h: 1.0 / 128.0,
            scales: 8,
            lambda: 1.0,
            cells_per_side: 4,
            target: DimensionTarget::Boundary,
            spacing: None,
            centers: 40,
            threads: None,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment, keys accept `-` or `_`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", n + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// Inclusive `start:stop:step` grid, rounded to 12 decimals.
pub fn parse_beta_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("beta grid `{s}` is not start:stop:step")));
    }
    let nums: Vec<f64> = parts.iter().map(|x| parse_num(x, "beta_grid")).collect::<Result<_, _>>()?;
    let (a, b, st) = (nums[0], nums[1], nums[2]);
    if !(st > 0.0 && b >= a) {
        return Err(CliError::Usage(format!("beta grid `{s}` needs step > 0 and stop >= start")));
    }
    let n = ((b - a) / st + 1e-9).floor() as usize;
    // `+ 0.0` maps a rounded `-0.0` to `0.0`
    Ok((0..=n).map(|k| ((a + k as f64 * st) * 1e12).round() / 1e12 + 0.0).collect())
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(v: &str, key: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(|x| parse_num(x, key)).collect()
}

impl RunConfig {
    /// Defaults, then `map` entries.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut c = RunConfig::default();
        let mut levels_set = false;
        let mut grid_set = false;
        for (k, v) in map {
            match k.as_str() {
                "domain" => c.domain = v.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?,
                "koch_level" => c.koch_level = parse_num(v, k)?,
                "side" => c.side = parse_num(v, k)?,
                "aperture" => c.aperture = parse_num(v, k)?,
                "p" => c.p = parse_num(v, k)?,
                "beta" => c.beta = parse_num(v, k)?,
                "beta_grid" => {
                    c.beta_grid = parse_beta_grid(v)?;
                    grid_set = true;
                }
                "max_level" => c.max_level = parse_num(v, k)?,
                "levels" => {
                    c.levels = parse_list(v, k)?;
                    levels_set = true;
                }
                "seed" => c.seed = parse_num(v, k)?,
                "functions" => c.functions = parse_num(v, k)?,
                "out" => c.out = PathBuf::from(v),
                "threads" => c.threads = Some(parse_num(v, k)?),
                "s" => c.s = parse_num(v, k)?,
                "tau" => c.tau = parse_num(v, k)?,
                "sigma" => c.sigma = parse_num(v, k)?,
                "m" => c.m = parse_num(v, k)?,
                "theta_grid" => c.theta_grid = parse_list(v, k)?,
                "samples" => c.samples = parse_num(v, k)?,
                "h" => c.h = parse_num(v, k)?,
                "scales" => c.scales = parse_num(v, k)?,
                "lambda" => c.lambda = parse_num(v, k)?,
                "cells_per_side" => c.cells_per_side = parse_num(v, k)?,
                "target" => {
                    c.target = match v.as_str() {
                        "boundary" => DimensionTarget::Boundary,
                        "harmonic" => DimensionTarget::Harmonic,
                        other => return Err(CliError::Usage(format!("unknown dimension target `{other}`"))),
                    }
                }
                "spacing" => c.spacing = Some(parse_num(v, k)?),
                "centers" => c.centers = parse_num(v, k)?,
                other => return Err(CliError::Usage(format!("unknown key `{other}`"))),
            }
        }
        if !grid_set {
            c.beta_grid = vec![c.beta];
        }
        if !levels_set {
            c.levels = (c.max_level.saturating_sub(2)..=c.max_level).collect();
        }
        if c.functions == 0 {
            return Err(CliError::Usage("functions must be >= 1".into()));
        }
        Ok(c)
    }

    /// Config file (if any) overridden by flags.
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let mut map = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in flags.pairs() {
            map.insert(k.to_string(), v);
        }
        Self::from_map(&map)
    }

    pub fn preset_params(&self) -> PresetParams {
        PresetParams {
            side: self.side,
            level: self.koch_level,
            aperture: self.aperture,
        }
    }

    pub fn domain(&self) -> Result<Arc<PolygonalDomain>, CliError> {
        Ok(Arc::new(make_domain(self.domain, self.preset_params())?))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(Error::from(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Measurement only; nothing to verify.
    Recorded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub statement: String,
    pub status: Status,
    pub metrics: BTreeMap<String, f64>,
}

/// Common wrapper of every JSON output.
#[derive(Clone, Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a RunConfig,
    pub summary: Summary,
    pub result: T,
}

/// What a finished subcommand hands back.
pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Fail => 2,
            _ => 0,
        }
    }
}

struct Ctx<'a> {
    cmd: Command,
    cfg: &'a RunConfig,
    files: Vec<PathBuf>,
}

impl<'a> Ctx<'a> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "artifact": ARTIFACT,
            "version": VERSION,
            "command": self.cmd.name(),
            "config": self.cfg,
        })
    }

    fn header_line(&self) -> Result<String, CliError> {
        Ok(format!("# {}", serde_json::to_string(&self.meta())?))
    }

    fn envelope<T: Serialize>(&mut self, status: Status, metrics: BTreeMap<String, f64>, result: T) -> Result<(), CliError> {
        let env = Envelope {
            artifact: ARTIFACT,
            version: VERSION,
            command: self.cmd.name(),
            config: self.cfg,
            summary: Summary {
                statement: self.cmd.statement().into(),
                status,
                metrics,
            },
            result,
        };
        let path = self.path(&format!("{}.json", self.cmd.name()));
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.files.push(path);
        Ok(())
    }

    fn csv_with_header(&mut self, name: &str, body: Vec<u8>) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{}", self.header_line()?)?;
        w.write_all(&body)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn inequality_outputs(&mut self, reports: &[InequalityReport]) -> Result<(), CliError> {
        let name = self.cmd.name();
        let path = self.path(&format!("{name}.jsonl"));
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer(&mut w, &self.meta())?;
        w.write_all(b"\n")?;
        write_json_lines(reports, &mut w)?;
        w.flush()?;
        self.files.push(path);
        let mut body = Vec::new();
        write_csv(reports, &mut body)?;
        self.csv_with_header(&format!("{name}.csv"), body)
    }

    fn binary<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(BufWriter<File>, &serde_json::Value) -> crate::error::Result<()>,
    {
        let path = self.path(name);
        let meta = self.meta();
        write(BufWriter::new(File::create(&path)?), &meta)?;
        self.files.push(path);
        Ok(())
    }
}

fn ratio_metrics(reports: &[InequalityReport]) -> BTreeMap<String, f64> {
    let ratios: Vec<f64> = reports.iter().filter_map(|r| r.ratio).collect();
    let mut m = BTreeMap::new();
    m.insert("reports".into(), reports.len() as f64);
    m.insert("flagged".into(), reports.iter().filter(|r| r.flag.is_some()).count() as f64);
    if !ratios.is_empty() {
        m.insert("ratio_max".into(), ratios.iter().copied().fold(f64::MIN, f64::max));
        m.insert("ratio_min".into(), ratios.iter().copied().fold(f64::MAX, f64::min));
    }
    m
}

/// Configures the global worker pool from `threads` or `WHARDY_THREADS`.
pub fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(parse_num::<usize>(&v, THREADS_ENV)?),
            _ => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Usage("thread count must be >= 1".into()));
        }
        // a second configuration in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs one subcommand.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cmd == Command::Report {
        return report(cfg);
    }
    fs::create_dir_all(&cfg.out)?;
    let mut ctx = Ctx {
        cmd,
        cfg,
        files: Vec::new(),
    };
    let status = match cmd {
        Command::Whitney => run_whitney(&mut ctx)?,
        Command::Tree => run_tree(&mut ctx)?,
        Command::Dimension => run_dimension(&mut ctx)?,
        Command::Hardy => run_hardy(&mut ctx)?,
        Command::Decompose => run_decompose(&mut ctx)?,
        Command::Poincare => run_poincare(&mut ctx)?,
        Command::FracPoincare => run_frac_poincare(&mut ctx)?,
        Command::Korn => run_korn(&mut ctx)?,
        Command::FeffermanStein => run_fefferman_stein(&mut ctx)?,
        Command::Divergence => run_divergence(&mut ctx)?,
        Command::Report => unreachable!("handled above"),
    };
    Ok(Outcome { status, files: ctx.files })
}

fn pass_if(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn run_whitney(ctx: &mut Ctx) -> Result<Status, CliError> {
    let dom = ctx.cfg.domain()?;
    let dec = WhitneyDecomposition::build(dom, ctx.cfg.max_level)?;
    let check = dec.verify();
    let metrics = BTreeMap::from([
        ("cubes".to_string(), check.cubes as f64),
        ("max_overlap".to_string(), check.max_overlap as f64),
        ("max_dist_over_diam".to_string(), check.max_dist_over_diam),
        ("collar_width".to_string(), dec.collar_width()),
    ]);
    let status = pass_if(check.passes());
    ctx.envelope(
        status,
        metrics,
        serde_json::json!({ "check": check, "collar_width": dec.collar_width(), "decomposition": dec.dump() }),
    )?;
    Ok(status)
}

fn run_tree(ctx: &mut Ctx) -> Result<Status, CliError> {
    let dom = ctx.cfg.domain()?;
    let dec = Arc::new(WhitneyDecomposition::build(Arc::clone(&dom), ctx.cfg.max_level)?);
    let cov = build_tree(&dec, dom.center())?;
    let stats = shadow_stats(cov.tree(), cov.levels());
    let k = cov.k();
    let bound = chain_bound(k);
    let max_chain = stats.max_chain_count();
    let c_emp = verify_shadow_lemma(&stats, ctx.cfg.lambda)?;
    let contained = cov.containment_factors().iter().all(|&f| f <= k);
    let ok = contained && f64::from(max_chain) <= bound;
    let metrics = BTreeMap::from([
        ("cubes".to_string(), cov.len() as f64),
        ("k".to_string(), k),
        ("chain_bound".to_string(), bound),
        ("max_chain_count".to_string(), f64::from(max_chain)),
        ("c_emp".to_string(), c_emp),
        ("lambda".to_string(), ctx.cfg.lambda),
    ]);
    let status = pass_if(ok);
    ctx.envelope(
        status,
        metrics,
        serde_json::json!({
            "k": k,
            "chain_bound": bound,
            "max_chain_count": max_chain,
            "shadow_growth": { "lambda": ctx.cfg.lambda, "c_emp": c_emp },
            "shadows_contained": contained,
            "tree": cov.dump(),
        }),
    )?;
    Ok(status)
}

/// Scale windows: for boundaries `[side/81, side/3]`, for the harmonic
/// sequence `[1e-6, 1e-2]`.
fn dimension_estimates(cfg: &RunConfig) -> Result<(CoverTarget, DimensionEstimate, DimensionEstimate), CliError> {
    match cfg.target {
        DimensionTarget::Boundary => {
            let dom = cfg.domain()?;
            let (r_min, r_max) = (cfg.side / 81.0, cfg.side / 3.0);
            let target = CoverTarget::boundary(&dom, cfg.spacing.unwrap_or(r_min / 16.0))?;
            let bx = box_dimension(&target, r_min, r_max, 13)?;
            let r_grid = geometric_grid(r_min, r_max / 3.0, 6);
            let big_r = geometric_grid(r_max / 3.0, 1.5 * r_max, 4);
            let asd = assouad_dimension(&target, &r_grid, &big_r, cfg.centers)?;
            Ok((target, bx, asd))
        }
        DimensionTarget::Harmonic => {
            let target = CoverTarget::harmonic(10_000);
            let bx = box_dimension(&target, 1e-6, 1e-2, 9)?;
            let r_grid = geometric_grid(1e-6, 1e-3, 7);
            let big_r = geometric_grid(1e-4, 1e-2, 5);
            let asd = assouad_dimension(&target, &r_grid, &big_r, cfg.centers)?;
            Ok((target, bx, asd))
        }
    }
}

fn run_dimension(ctx: &mut Ctx) -> Result<Status, CliError> {
    let (target, bx, asd) = dimension_estimates(ctx.cfg)?;
    let metrics = BTreeMap::from([
        ("box".to_string(), bx.value),
        ("assouad".to_string(), asd.value),
        ("box_r2".to_string(), bx.fit.r_squared),
        ("points".to_string(), target.points().len() as f64),
    ]);
    let mut body = Vec::new();
    asd.write_csv(&mut body)?;
    ctx.csv_with_header("dimension.csv", body)?;
    ctx.envelope(
        Status::Recorded,
        metrics,
        serde_json::json!({ "target": target.label(), "box": bx, "assouad": asd }),
    )?;
    Ok(Status::Recorded)
}

fn run_hardy(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let table = beta_sweep(cfg.domain, cfg.preset_params(), cfg.p, &cfg.beta_grid, &cfg.levels, &cfg.theta_grid)?;
    let mut body = Vec::new();
    table.write_csv(&mut body)?;
    ctx.csv_with_header("hardy.csv", body)?;
    let chain = build_cube_chain(cfg.m, 1.0)?;
    let spec = WeightSpec::with_thetas(0.0, cfg.p, cfg.theta_grid.clone())?;
    let rep = hardy_report(&chain, &spec)?;
    let a_chain = rep.a_chain.unwrap_or(f64::NAN);
    let bound = snake_chain_bound(cfg.m, cfg.p);
    let tree_within_chain = rep
        .per_theta
        .iter()
        .all(|v| v.value <= v.theta.powf(1.0 / cfg.p) * a_chain * (1.0 + 1e-12));
    let ok = a_chain <= bound * (1.0 + 1e-12) && tree_within_chain;
    let mut metrics = BTreeMap::from([
        ("snake_a_chain".to_string(), a_chain),
        ("snake_bound".to_string(), bound),
    ]);
    for g in &table.growth {
        if let Some(&r) = g.ratios.last() {
            metrics.insert(format!("growth_ratio_beta_{}", g.beta), r);
        }
    }
    let status = pass_if(ok);
    ctx.envelope(
        status,
        metrics,
        serde_json::json!({
            "growth": table.growth,
            "snake": { "m": cfg.m, "a_chain": a_chain, "bound": bound, "tree_within_chain_bound": tree_within_chain, "report": rep },
        }),
    )?;
    Ok(status)
}

fn covering(cfg: &RunConfig, level: u32) -> Result<crate::treecover::TreeCovering, CliError> {
    let dom = cfg.domain()?;
    let dec = Arc::new(WhitneyDecomposition::build(Arc::clone(&dom), level)?);
    Ok(build_tree(&dec, dom.center())?)
}

fn run_decompose(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let cov = covering(cfg, cfg.max_level)?;
    let grid = decomposition_grid_with(&cov, cfg.cells_per_side)?;
    let layout = Arc::new(CellLayout::new(&cov, &grid)?);
    let mut rows = Vec::new();
    let mut all_ok = true;
    let mut first = None;
    for k in 0..cfg.functions {
        let poly = TrigPolynomial::random(cfg.seed + k as u64, 6, 4);
        let g = covered_mean_zero(&GridFunction::from_fn(&grid, |x| poly.eval(x)), &layout);
        let dec = c_decompose(&cov, &layout, &g)?;
        let check = dec.check();
        let ratio = decomposition_ratio(&dec, cfg.p, cfg.beta)?;
        all_ok &= check.passes();
        rows.push(serde_json::json!({ "seed": cfg.seed + k as u64, "check": check, "ratio": ratio }));
        if first.is_none() {
            first = Some(dec);
        }
    }
    if let Some(dec) = &first {
        ctx.binary("decompose.bin", |w, meta| dec.write_binary_with_meta(w, meta))?;
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r["ratio"].as_f64()).collect();
    let metrics = BTreeMap::from([
        ("functions".to_string(), rows.len() as f64),
        ("ratio_max".to_string(), ratios.iter().copied().fold(f64::MIN, f64::max)),
        ("cells".to_string(), grid.len() as f64),
        ("collar_cells".to_string(), layout.collar_cells() as f64),
    ]);
    let status = pass_if(all_ok);
    ctx.envelope(status, metrics, serde_json::json!({ "h": grid.h(), "functions": rows }))?;
    Ok(status)
}

fn inequality_grid(cfg: &RunConfig) -> Result<Arc<Grid>, CliError> {
    Ok(Grid::covering(cfg.domain()?, cfg.h)?)
}

fn trig_family(cfg: &RunConfig, grid: &Arc<Grid>) -> Vec<(String, GridFunction)> {
    (0..cfg.functions)
        .map(|k| {
            let seed = cfg.seed + k as u64;
            let poly = TrigPolynomial::random(seed, 6, 4);
            (format!("trig:{seed}"), GridFunction::from_fn(grid, |x| poly.eval(x)))
        })
        .collect()
}

fn run_poincare(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let grid = inequality_grid(cfg)?;
    let reports: Vec<InequalityReport> = trig_family(cfg, &grid)
        .into_iter()
        .map(|(id, f)| improved_poincare_ratio(&f, cfg.p, cfg.beta).map(|r| r.with_test_function(id)))
        .collect::<crate::error::Result<_>>()?;
    ctx.inequality_outputs(&reports)?;
    ctx.envelope(Status::Recorded, ratio_metrics(&reports), &reports)?;
    Ok(Status::Recorded)
}

fn run_frac_poincare(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let grid = inequality_grid(cfg)?;
    let reports: Vec<InequalityReport> = trig_family(cfg, &grid)
        .into_iter()
        .enumerate()
        .map(|(k, (id, u))| {
            let fp = FractionalParams {
                p: cfg.p,
                beta: cfg.beta,
                s: cfg.s,
                tau: cfg.tau,
                samples: cfg.samples,
                seed: cfg.seed + k as u64,
            };
            fractional_poincare_ratio(&u, &fp).map(|r| r.with_test_function(id))
        })
        .collect::<crate::error::Result<_>>()?;
    ctx.inequality_outputs(&reports)?;
    ctx.envelope(Status::Recorded, ratio_metrics(&reports), &reports)?;
    Ok(Status::Recorded)
}

fn run_korn(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let grid = inequality_grid(cfg)?;
    let mut reports = Vec::new();
    let mut worst_identity: f64 = 0.0;
    for k in 0..cfg.functions {
        let seed = cfg.seed + k as u64;
        let field = PolynomialField::random(seed, 3);
        let u = VectorFieldGrid::from_fn(&grid, |x| field.eval(x));
        worst_identity = worst_identity.max(frobenius_identity_residual(&korn_normalize(&u, cfg.p, cfg.beta)?)?);
        reports.push(korn_ratio(&u, cfg.p, cfg.beta)?.with_test_function(format!("poly3:{seed}")));
    }
    let ok = if cfg.p == 2.0 {
        worst_identity <= 1e-10 && reports.iter().filter_map(|r| r.ratio).all(|r| r >= 1.0 - 1e-9)
    } else {
        true
    };
    let mut metrics = ratio_metrics(&reports);
    metrics.insert("frobenius_identity_residual".into(), worst_identity);
    ctx.inequality_outputs(&reports)?;
    let status = if cfg.p == 2.0 { pass_if(ok) } else { Status::Recorded };
    ctx.envelope(status, metrics, &reports)?;
    Ok(status)
}

fn run_fefferman_stein(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let grid = inequality_grid(cfg)?;
    let fp = FeffermanSteinParams {
        p: cfg.p,
        beta: cfg.beta,
        sigma: cfg.sigma,
        scales: cfg.scales,
    };
    let side = cfg.side;
    let origin = grid.domain().bounding_box().min;
    let mut family = vec![(
        "checkerboard:8".to_string(),
        GridFunction::from_fn(&grid, |x| checkerboard(Point::new(x.x - origin.x, x.y - origin.y), 8, side)),
    )];
    family.extend(trig_family(cfg, &grid));
    let reports: Vec<InequalityReport> = family
        .into_iter()
        .map(|(id, f)| fefferman_stein_ratio(&f, &fp).map(|r| r.with_test_function(id)))
        .collect::<crate::error::Result<_>>()?;
    let ok = reports.iter().filter_map(|r| r.ratio).all(|r| r <= FS_A_PRIORI);
    ctx.inequality_outputs(&reports)?;
    let status = pass_if(ok);
    ctx.envelope(status, ratio_metrics(&reports), &reports)?;
    Ok(status)
}

fn run_divergence(ctx: &mut Ctx) -> Result<Status, CliError> {
    let cfg = ctx.cfg;
    let mut reports = Vec::new();
    let mut residuals = Vec::new();
    for &level in &cfg.levels {
        let cov = covering(cfg, level)?;
        let grid = decomposition_grid_with(&cov, cfg.cells_per_side)?;
        let layout = Arc::new(CellLayout::new(&cov, &grid)?);
        let bb = grid.domain().bounding_box();
        let at = |fx: f64, fy: f64| Point::new(bb.min.x + fx * (bb.max.x - bb.min.x), bb.min.y + fy * (bb.max.y - bb.min.y));
        let f = dipole(&layout, at(0.3, 0.5), at(0.7, 0.5), 0.1 * cfg.side);
        let sol = solve_divergence(&cov, &layout, &f, cfg.p, cfg.beta, &SolverOptions::default())?;
        ctx.binary(&format!("divergence_velocity_L{level}.bin"), |w, meta| {
            sol.velocity.cell_centered()?.write_binary_with_meta(w, meta)
        })?;
        residuals.push(sol.residual);
        reports.push(sol.report.with_test_function(format!("dipole:L{level}")));
    }
    let ratios: Vec<f64> = reports.iter().filter_map(|r| r.ratio).collect();
    let growth: Vec<f64> = ratios.windows(2).map(|w| w[1] / w[0]).collect();
    let class = Classification::from_ratios(&growth);
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let mut metrics = ratio_metrics(&reports);
    metrics.insert("max_residual".into(), worst);
    if let Some(&g) = growth.last() {
        metrics.insert("growth_ratio".into(), g);
    }
    ctx.inequality_outputs(&reports)?;
    let status = pass_if(worst <= 1e-8);
    ctx.envelope(
        status,
        metrics,
        serde_json::json!({ "reports": reports, "residuals": residuals, "growth": growth, "classification": class }),
    )?;
    Ok(status)
}

/// One row of the aggregated summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub statement: String,
    pub command: String,
    pub status: Status,
    pub metrics: String,
}

fn report(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = &cfg.out;
    let mut names: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    let mut rows = Vec::new();
    for path in &names {
        let Ok(text) = fs::read_to_string(path) else { continue };
        let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) else { continue };
        if v["artifact"] != ARTIFACT {
            continue;
        }
        let Ok(summary) = serde_json::from_value::<Summary>(v["summary"].clone()) else { continue };
        let metrics = summary
            .metrics
            .iter()
            .map(|(k, x)| format!("{k}={x}"))
            .collect::<Vec<_>>()
            .join(";");
        rows.push(SummaryRow {
            statement: summary.statement,
            command: v["command"].as_str().unwrap_or_default().to_string(),
            status: summary.status,
            metrics,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "no {ARTIFACT} outputs in {}; run a subcommand with --out {} first",
            dir.display(),
            dir.display()
        )));
    }
    rows.sort_by(|a, b| a.statement.cmp(&b.statement));
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    for r in &rows {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush()?;
    for r in &rows {
        println!("{:<26} {:<8} {}", r.statement, format!("{:?}", r.status).to_lowercase(), r.metrics);
    }
    let failed = rows.iter().any(|r| r.status == Status::Fail);
    Ok(Outcome {
        status: if failed { Status::Fail } else { Status::Pass },
        files: vec![path],
    })
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = RunConfig::resolve(&cli.flags).and_then(|cfg| {
        configure_threads(cfg.threads)?;
        run(cli.command, &cfg)
    });
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            if outcome.status == Status::Fail {
                eprintln!("{}: verification failed", cli.command.name());
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn beta_grid_is_inclusive_and_rounded() {
        let g = parse_beta_grid("-0.9:0.3:0.1").unwrap();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], -0.9);
        assert_eq!(g[6], -0.3);
        assert_eq!(*g.last().unwrap(), 0.3);
        assert!(parse_beta_grid("1:0:0.1").is_err());
        assert!(parse_beta_grid("0:1").is_err());
    }

    #[test]
    fn config_file_then_flags() {
        let map = parse_config_text("# run\ndomain = koch\nkoch-level = 3\np = 3 # inline\n").unwrap();
        let mut c = RunConfig::from_map(&map).unwrap();
        assert_eq!(c.domain, Preset::KochPrefractal);
        assert_eq!(c.koch_level, 3);
        assert_eq!(c.p, 3.0);
        let mut map2 = map.clone();
        map2.insert("p".into(), "2.5".into());
        map2.insert("max_level".into(), "7".into());
        c = RunConfig::from_map(&map2).unwrap();
        assert_eq!(c.p, 2.5);
        assert_eq!(c.levels, vec![5, 6, 7]);
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("no equals sign").is_err());
    }

    #[test]
    fn threads_are_not_part_of_serialized_config() {
        let mut map = BTreeMap::new();
        map.insert("threads".to_string(), "3".to_string());
        let c = RunConfig::from_map(&map).unwrap();
        assert_eq!(c.threads, Some(3));
        let v = serde_json::to_value(&c).unwrap();
        assert!(v.get("threads").is_none());
    }

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("whardy-unit-{}-{name}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    fn call(args: &[&str], out: &Path) -> i32 {
        let mut v: Vec<OsString> = vec!["whardy".into()];
        v.extend(args.iter().map(OsString::from));
        v.push("--out".into());
        v.push(out.as_os_str().to_owned());
        main_with_args(v)
    }

    fn read_json(path: PathBuf) -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn report_without_outputs_is_a_usage_error() {
        let dir = scratch("empty");
        assert_eq!(call(&["report"], &dir), 1);
        let cfg = RunConfig {
            out: dir,
            ..RunConfig::default()
        };
        assert!(matches!(run(Command::Report, &cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn outputs_embed_config_and_version() {
        let dir = scratch("meta");
        let args = ["tree", "--domain", "koch", "--koch-level", "2", "--max-level", "6"];
        assert_eq!(call(&args, &dir), 0);
        let v = read_json(dir.join("tree.json"));
        assert_eq!(v["artifact"], ARTIFACT);
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["config"]["domain"], "koch_prefractal");
        assert_eq!(v["config"]["koch_level"], 2);
        assert_eq!(v["summary"]["status"], "pass");
        assert!(v["config"].get("threads").is_none());
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = scratch("cfg");
        fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("run.conf");
        fs::write(&cfg, "# poincare run\ndomain = l_shape\nfunctions = 2\nbeta = -0.2\n").unwrap();
        assert_eq!(call(&["poincare", "--config", cfg.to_str().unwrap(), "--beta", "-0.4"], &dir), 0);
        let v = read_json(dir.join("poincare.json"));
        assert_eq!(v["config"]["domain"], "l_shape");
        assert_eq!(v["config"]["beta"], -0.4);
        assert_eq!(v["result"].as_array().unwrap().len(), 2);
        let csv = fs::read_to_string(dir.join("poincare.csv")).unwrap();
        assert!(csv.starts_with("# {\"artifact\":\"whardy\""));
        assert_eq!(csv.lines().nth(1).unwrap().split(',').next(), Some("inequality"));
    }

    #[test]
    fn identical_configs_give_identical_bytes_across_thread_counts() {
        let dir = scratch("det");
        let mut map = BTreeMap::new();
        for (k, v) in [("functions", "2"), ("samples", "20000"), ("h", "0.03125")] {
            map.insert(k.to_string(), v.to_string());
        }
        map.insert("out".to_string(), dir.to_string_lossy().into_owned());
        let cfg = RunConfig::from_map(&map).unwrap();
        let files = ["frac-poincare.json", "frac-poincare.jsonl", "frac-poincare.csv"];
        let mut seen: Vec<Vec<Vec<u8>>> = Vec::new();
        for threads in [1, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run(Command::FracPoincare, &cfg)).unwrap();
            seen.push(files.iter().map(|f| fs::read(dir.join(f)).unwrap()).collect());
        }
        assert_eq!(seen[0], seen[1]);
    }

    #[test]
    fn report_aggregates_statements() {
        let dir = scratch("report");
        assert_eq!(call(&["whitney", "--max-level", "5"], &dir), 0);
        assert_eq!(call(&["korn", "--functions", "2", "--h", "0.03125"], &dir), 0);
        assert_eq!(call(&["report"], &dir), 0);
        let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
        let mut lines = summary.lines();
        assert_eq!(lines.next(), Some("statement,command,status,metrics"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("korn,korn,pass"));
        assert!(rows[1].starts_with("whitney_sandwich,whitney,pass"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["whardy"]), 1);
        assert_eq!(main_with_args(["whardy", "tree", "--p", "abc"]), 1);
        assert_eq!(main_with_args(["whardy", "frobnicate"]), 1);
        assert_eq!(main_with_args(["whardy", "tree", "--beta-grid", "0:1"]), 1);
    }
}
