//! Discrete Hardy constants on trees with distance-power weights
//! `nu_t = omega_t = l_t^beta`, `b_t = l_t^n`, and refinement sweeps in `beta`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_domain, Preset, PresetParams, DIM};
use crate::numeric::{CompensatedSum, LogSum};
use crate::treecover::{build_tree, RootedTree, TreeCovering};
use crate::whitney::WhitneyDecomposition;

pub const DEFAULT_THETA_GRID: [f64; 7] = [1.05, 1.1, 1.25, 1.5, 2.0, 3.0, 5.0];

/// Magnitude beyond which sums are redone in log space.
const LOG_SWITCH: f64 = 1e250;

/// Growth ratio at or above which a sweep is classified divergent.
pub const DIVERGENCE_RATIO: f64 = 1.05;

/// Exponents and the `theta` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub beta: f64,
    pub p: f64,
    pub q: f64,
    pub theta_grid: Vec<f64>,
}

impl WeightSpec {
    pub fn new(beta: f64, p: f64) -> Result<Self> {
        Self::with_thetas(beta, p, DEFAULT_THETA_GRID.to_vec())
    }

    pub fn with_thetas(beta: f64, p: f64, theta_grid: Vec<f64>) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::Parameter(format!("beta must be finite, got {beta}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Parameter(format!("p must be in (1, inf), got {p}")));
        }
        if theta_grid.is_empty() || theta_grid.iter().any(|&t| !(t > 1.0 && t.is_finite())) {
            return Err(Error::Parameter(format!("theta grid must be nonempty with every theta > 1, got {theta_grid:?}")));
        }
        Ok(Self {
            beta,
            p,
            q: p / (p - 1.0),
            theta_grid,
        })
    }
}

/// Per-node weights in frame units.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteWeights {
    pub nu: Vec<f64>,
    pub omega: Vec<f64>,
    pub b: Vec<f64>,
}

impl DiscreteWeights {
    /// `nu = omega = l^beta`, `b = l^n` with `n = 2`.
    pub fn distance_power(ell: &[f64], beta: f64) -> Result<Self> {
        if let Some(l) = ell.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Parameter(format!("side lengths must be positive, got {l}")));
        }
        let nu: Vec<f64> = ell.iter().map(|&l| l.powf(beta)).collect();
        Ok(Self {
            omega: nu.clone(),
            nu,
            b: ell.iter().map(|&l| l.powi(DIM as i32)).collect(),
        })
    }

    pub fn unit(n: usize) -> Self {
        Self {
            nu: vec![1.0; n],
            omega: vec![1.0; n],
            b: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.nu.len() != n || self.omega.len() != n || self.b.len() != n {
            return Err(Error::Parameter(format!(
                "weight arrays must have length {n}, got {}/{}/{}",
                self.nu.len(),
                self.omega.len(),
                self.b.len()
            )));
        }
        let bad = self
            .nu
            .iter()
            .chain(&self.omega)
            .chain(&self.b)
            .any(|&w| !(w > 0.0 && w.is_finite()));
        if bad {
            return Err(Error::Parameter("weights must be positive and finite".into()));
        }
        Ok(())
    }
}

/// One evaluation of the tree constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeValue {
    pub theta: f64,
    /// `+inf` when the value overflows `f64`; `ln_value` stays finite.
    pub value: f64,
    pub ln_value: f64,
    /// Node attaining the supremum (`None` for a single-node tree).
    pub argmax: Option<usize>,
    pub overflow: bool,
}

/// `sup` over non-root `t` of `S_t^{1/(theta q)} T_t^{1/p}` with
/// `S_t = sum_{root < s <= t} b_s^{-q/p} nu_s^{-q}` and
/// `T_t = sum_{s >= t} b_s omega_s^p S_s^{(p/q)(1 - 1/theta)}`.
pub fn a_tree(tree: &RootedTree, w: &DiscreteWeights, p: f64, theta: f64) -> Result<TreeValue> {
    w.check(tree.len())?;
    if !(p > 1.0) || !(theta > 1.0) {
        return Err(Error::Parameter(format!("need p > 1 and theta > 1, got p = {p}, theta = {theta}")));
    }
    let q = p / (p - 1.0);
    let direct = a_tree_direct(tree, w, p, q, theta);
    let ln_best = match direct {
        Some(best) => best,
        None => a_tree_log(tree, w, p, q, theta),
    };
    Ok(finish(theta, ln_best))
}

fn finish(theta: f64, best: Option<(f64, usize)>) -> TreeValue {
    match best {
        None => TreeValue {
            theta,
            value: 0.0,
            ln_value: f64::NEG_INFINITY,
            argmax: None,
            overflow: false,
        },
        Some((ln, t)) => {
            let value = ln.exp();
            TreeValue {
                theta,
                value,
                ln_value: ln,
                argmax: Some(t),
                overflow: value.is_infinite(),
            }
        }
    }
}

fn in_range(x: f64) -> bool {
    x == 0.0 || (x.is_finite() && x.abs() < LOG_SWITCH && x.abs() > 1.0 / LOG_SWITCH)
}

/// Linear-space evaluation; `None` when any intermediate leaves the safe range.
fn a_tree_direct(tree: &RootedTree, w: &DiscreteWeights, p: f64, q: f64, theta: f64) -> Option<Option<(f64, usize)>> {
    let n = tree.len();
    let root = tree.root();
    let ex = (p / q) * (1.0 - 1.0 / theta);
    let mut s = vec![CompensatedSum::new(); n];
    for &t in tree.order() {
        if let Some(a) = tree.parent(t) {
            let term = w.b[t].powf(-q / p) * w.nu[t].powf(-q);
            if !in_range(term) {
                return None;
            }
            s[t] = s[a];
            s[t].add(term);
        }
    }
    let sv: Vec<f64> = s.iter().map(|c| c.value()).collect();
    let mut tsum = vec![CompensatedSum::new(); n];
    for &t in tree.order().iter().rev() {
        let e = w.b[t] * w.omega[t].powf(p) * sv[t].powf(ex);
        if !in_range(e) {
            return None;
        }
        tsum[t].add(e);
        if let Some(a) = tree.parent(t) {
            let v = tsum[t].value();
            tsum[a].add(v);
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for &t in tree.order() {
        if t == root {
            continue;
        }
        let val = sv[t].powf(1.0 / (theta * q)) * tsum[t].value().powf(1.0 / p);
        if !in_range(val) || !in_range(tsum[t].value()) || !in_range(sv[t]) {
            return None;
        }
        if best.is_none_or(|(b, bt)| val > b || (val == b && t < bt)) {
            best = Some((val, t));
        }
    }
    Some(best.map(|(v, t)| (v.ln(), t)))
}

fn a_tree_log(tree: &RootedTree, w: &DiscreteWeights, p: f64, q: f64, theta: f64) -> Option<(f64, usize)> {
    let n = tree.len();
    let root = tree.root();
    let ex = (p / q) * (1.0 - 1.0 / theta);
    let mut ls = vec![LogSum::new(); n];
    for &t in tree.order() {
        if let Some(a) = tree.parent(t) {
            ls[t] = ls[a];
            ls[t].add_log(-(q / p) * w.b[t].ln() - q * w.nu[t].ln());
        }
    }
    let ln_s: Vec<f64> = ls.iter().map(LogSum::ln).collect();
    let mut lt = vec![LogSum::new(); n];
    for &t in tree.order().iter().rev() {
        if t != root {
            lt[t].add_log(w.b[t].ln() + p * w.omega[t].ln() + ex * ln_s[t]);
        }
        if let Some(a) = tree.parent(t) {
            let child = lt[t];
            lt[a].merge(&child);
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for &t in tree.order() {
        if t == root {
            continue;
        }
        let v = ln_s[t] / (theta * q) + lt[t].ln() / p;
        if best.is_none_or(|(b, bt)| v > b || (v == b && t < bt)) {
            best = Some((v, t));
        }
    }
    best
}

/// `sup` over non-root `t` of `(sum_{s <= t} b_s^{-q/p} nu_s^{-q})^{1/q}
/// (sum_{s >= t} b_s omega_s^p)^{1/p}` on a chain; the prefix includes the root.
pub fn a_chain(tree: &RootedTree, w: &DiscreteWeights, p: f64) -> Result<TreeValue> {
    w.check(tree.len())?;
    if !tree.is_chain() {
        return Err(Error::Structure("a_chain requires every node to have at most one child".into()));
    }
    if !(p > 1.0) {
        return Err(Error::Parameter(format!("p must be > 1, got {p}")));
    }
    let q = p / (p - 1.0);
    let order = tree.order();
    let mut prefix = LogSum::new();
    let ln_prefix: Vec<f64> = order
        .iter()
        .map(|&t| {
            prefix.add_log(-(q / p) * w.b[t].ln() - q * w.nu[t].ln());
            prefix.ln()
        })
        .collect();
    let mut suffix = LogSum::new();
    let mut ln_suffix: Vec<f64> = order
        .iter()
        .rev()
        .map(|&t| {
            suffix.add_log(w.b[t].ln() + p * w.omega[t].ln());
            suffix.ln()
        })
        .collect();
    ln_suffix.reverse();
    let best = (1..order.len())
        .map(|k| (ln_prefix[k] / q + ln_suffix[k] / p, order[k]))
        .fold(None, |acc: Option<(f64, usize)>, (v, t)| match acc {
            Some((b, _)) if b >= v => acc,
            _ => Some((v, t)),
        });
    Ok(finish(f64::NAN, best))
}

/// Closed-form chain bound `(#Gamma)^{1/q} (#Gamma)^{1/p} = m^n` for the
/// unweighted snake chain on an `m x m` partition.
pub fn snake_chain_bound(m: usize, p: f64) -> f64 {
    let q = p / (p - 1.0);
    let count = (m * m) as f64;
    count.powf(1.0 / q) * count.powf(1.0 / p)
}

/// All tree constants for one covering and weight exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    pub beta: f64,
    pub p: f64,
    pub per_theta: Vec<TreeValue>,
    pub a_tree_min: f64,
    pub theta_min: f64,
    pub argmax: Option<usize>,
    pub overflow: bool,
    /// Present when the tree is a chain.
    pub a_chain: Option<f64>,
}

pub fn hardy_report(cov: &TreeCovering, spec: &WeightSpec) -> Result<HardyReport> {
    let w = DiscreteWeights::distance_power(cov.ell(), spec.beta)?;
    let per_theta: Vec<TreeValue> = spec
        .theta_grid
        .iter()
        .map(|&th| a_tree(cov.tree(), &w, spec.p, th))
        .collect::<Result<_>>()?;
    let best = per_theta
        .iter()
        .min_by(|a, b| a.ln_value.total_cmp(&b.ln_value))
        .copied()
        .expect("theta grid is nonempty");
    let a_chain = if cov.tree().is_chain() {
        Some(a_chain(cov.tree(), &w, spec.p)?.value)
    } else {
        None
    };
    Ok(HardyReport {
        beta: spec.beta,
        p: spec.p,
        a_tree_min: best.value,
        theta_min: best.theta,
        argmax: best.argmax,
        overflow: best.overflow,
        per_theta,
        a_chain,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Convergent,
    Divergent,
    Undetermined,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Convergent => "convergent",
            Classification::Divergent => "divergent",
            Classification::Undetermined => "undetermined",
        }
    }

    /// From the last growth ratio of a refinement sequence.
    pub fn from_ratios(ratios: &[f64]) -> Self {
        match ratios.last() {
            Some(&r) if r >= DIVERGENCE_RATIO => Classification::Divergent,
            Some(&r) if r > 2.0 - DIVERGENCE_RATIO => Classification::Convergent,
            _ => Classification::Undetermined,
        }
    }
}

/// One `(beta, level)` cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub p: f64,
    pub theta: f64,
    pub level: u32,
    pub a_tree: f64,
    pub argmax_node: Option<usize>,
    pub overflow: bool,
    pub classification: Classification,
}

/// Growth of `A_tree_min` under refinement for one `beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub beta: f64,
    pub levels: Vec<u32>,
    pub values: Vec<f64>,
    /// `A(level_{k+1}) / A(level_k)`.
    pub ratios: Vec<f64>,
    pub classification: Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub domain: String,
    pub p: f64,
    pub rows: Vec<SweepRow>,
    pub growth: Vec<Growth>,
}

impl SweepTable {
    pub fn growth_for(&self, beta: f64) -> Option<&Growth> {
        self.growth.iter().find(|g| g.beta == beta)
    }

    /// CSV columns `beta,p,theta,level,A_tree,argmax_node,classification`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["beta", "p", "theta", "level", "A_tree", "argmax_node", "classification"])?;
        for r in &self.rows {
            wr.write_record([
                r.beta.to_string(),
                r.p.to_string(),
                r.theta.to_string(),
                r.level.to_string(),
                r.a_tree.to_string(),
                r.argmax_node.map(|t| t.to_string()).unwrap_or_default(),
                r.classification.as_str().to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Tree coverings of a preset at each truncation level, rooted at the
/// preset's default center.
pub fn coverings_for_levels(preset: Preset, params: PresetParams, levels: &[u32]) -> Result<Vec<TreeCovering>> {
    let dom = Arc::new(make_domain(preset, params)?);
    levels
        .par_iter()
        .map(|&lvl| {
            let dec = Arc::new(WhitneyDecomposition::build(Arc::clone(&dom), lvl)?);
            build_tree(&dec, dom.center())
        })
        .collect()
}

/// `A_tree_min` for every `(beta, level)` with growth ratios per `beta`.
pub fn beta_sweep(
    preset: Preset,
    params: PresetParams,
    p: f64,
    betas: &[f64],
    levels: &[u32],
    theta_grid: &[f64],
) -> Result<SweepTable> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(format!("levels must be nonempty and increasing, got {levels:?}")));
    }
    let specs: Vec<WeightSpec> = betas
        .iter()
        .map(|&b| WeightSpec::with_thetas(b, p, theta_grid.to_vec()))
        .collect::<Result<_>>()?;
    let covs = coverings_for_levels(preset, params, levels)?;
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|i| (0..covs.len()).map(move |j| (i, j)))
        .collect();
    let reports: Vec<HardyReport> = jobs
        .par_iter()
        .map(|&(i, j)| hardy_report(&covs[j], &specs[i]))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(jobs.len());
    let mut growth = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let reps = &reports[i * covs.len()..(i + 1) * covs.len()];
        let values: Vec<f64> = reps.iter().map(|r| r.a_tree_min).collect();
        let ratios: Vec<f64> = reps
            .windows(2)
            .map(|w| (w[1].per_theta_ln_min() - w[0].per_theta_ln_min()).exp())
            .collect();
        let classification = Classification::from_ratios(&ratios);
        for (rep, &lvl) in reps.iter().zip(levels) {
            rows.push(SweepRow {
                beta: spec.beta,
                p,
                theta: rep.theta_min,
                level: lvl,
                a_tree: rep.a_tree_min,
                argmax_node: rep.argmax,
                overflow: rep.overflow,
                classification,
            });
        }
        growth.push(Growth {
            beta: spec.beta,
            levels: levels.to_vec(),
            values,
            ratios,
            classification,
        });
    }
    Ok(SweepTable {
        domain: preset.name().to_string(),
        p,
        rows,
        growth,
    })
}

impl HardyReport {
    fn per_theta_ln_min(&self) -> f64 {
        self.per_theta
            .iter()
            .map(|v| v.ln_value)
            .fold(f64::INFINITY, f64::min)
    }
}
