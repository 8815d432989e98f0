//! Synthetic models with known ground truth, and scoring of discoveries
//! against it.
//!
//! The target function is
//!
//! ```text
//! y = Σ_{j ∈ I_L} αⱼ xⱼ + Σ_{(j,k) ∈ I_I} αⱼₖ xⱼ xₖ
//! ```
//!
//! over i.i.d. Bernoulli features. Coefficients are drawn uniformly from
//! (0, 1) on a grid of multiples of 2⁻³², so every partial sum over binary
//! inputs is exact in f64 and additive terms cancel exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{invalid, Result};
use crate::hierarchy::{FeatureHierarchy, NodeRecord};
use crate::importance::{analyze, AnalysisConfig, ImportanceReport};
use crate::interactions::{analyze_interactions, candidate_pairs, InteractionConfig, InteractionResult};
use crate::model::make_synthetic_model;
use crate::model::LossFunction;
use crate::perturb::PerturbationSpec;
use crate::seed;

const COEFFICIENT_GRID: f64 = 4_294_967_296.0; // 2^32

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub feature: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    /// Stored with `pair.0 < pair.1`.
    pub pair: (usize, usize),
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub n_features: usize,
    pub linear: Vec<LinearTerm>,
    pub interactions: Vec<InteractionTerm>,
}

impl GroundTruth {
    pub fn from_terms(
        n_features: usize,
        linear: Vec<(usize, f64)>,
        interactions: Vec<((usize, usize), f64)>,
    ) -> Result<Self> {
        let gt = GroundTruth {
            n_features,
            linear: linear
                .into_iter()
                .map(|(feature, coefficient)| LinearTerm { feature, coefficient })
                .collect(),
            interactions: interactions
                .into_iter()
                .map(|((a, b), coefficient)| InteractionTerm {
                    pair: (a.min(b), a.max(b)),
                    coefficient,
                })
                .collect(),
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(invalid("ground truth needs at least one feature"));
        }
        let mut seen = BTreeSet::new();
        for t in &self.linear {
            if t.feature >= self.n_features {
                return Err(invalid(format!("linear term on feature {} of {}", t.feature, self.n_features)));
            }
            if !seen.insert(t.feature) {
                return Err(invalid(format!("feature {} has two linear terms", t.feature)));
            }
            if !t.coefficient.is_finite() {
                return Err(invalid("coefficients must be finite"));
            }
        }
        let mut pairs = BTreeSet::new();
        for t in &self.interactions {
            let (a, b) = t.pair;
            if a == b {
                return Err(invalid(format!("interaction pairs feature {a} with itself")));
            }
            if a > b || b >= self.n_features {
                return Err(invalid(format!("malformed interaction pair ({a}, {b})")));
            }
            if !pairs.insert(t.pair) {
                return Err(invalid(format!("pair ({a}, {b}) appears twice")));
            }
            if !t.coefficient.is_finite() {
                return Err(invalid("coefficients must be finite"));
            }
        }
        Ok(())
    }

    pub fn value(&self, row: &[f64]) -> f64 {
        let mut y = 0.0;
        for t in &self.linear {
            y += t.coefficient * row[t.feature];
        }
        for t in &self.interactions {
            y += t.coefficient * row[t.pair.0] * row[t.pair.1];
        }
        y
    }

    /// Features in I_L or in some pair of I_I.
    pub fn important_features(&self) -> BTreeSet<usize> {
        self.linear
            .iter()
            .map(|t| t.feature)
            .chain(self.interactions.iter().flat_map(|t| [t.pair.0, t.pair.1]))
            .collect()
    }

    pub fn interaction_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.interactions.iter().map(|t| t.pair).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let gt: GroundTruth = serde_json::from_str(text)?;
        gt.validate()?;
        Ok(gt)
    }
}

fn coefficient(rng: &mut impl Rng) -> f64 {
    rng.gen_range(1..(1u64 << 32)) as f64 / COEFFICIENT_GRID
}

/// Samples I_L uniformly from all features and I_I as distinct pairs within
/// I_L, with U(0, 1) coefficients.
pub fn generate_ground_truth(n_features: usize, n_linear: usize, n_interactions: usize, seed: u64) -> Result<GroundTruth> {
    if n_features == 0 {
        return Err(invalid("need at least one feature"));
    }
    if n_linear > n_features {
        return Err(invalid(format!("{n_linear} linear terms over {n_features} features")));
    }
    let max_pairs = n_linear * n_linear.saturating_sub(1) / 2;
    if n_interactions > max_pairs {
        return Err(invalid(format!(
            "{n_interactions} interactions requested but only {max_pairs} pairs exist among {n_linear} features"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut features = sample(&mut rng, n_features, n_linear).into_vec();
    features.sort_unstable();
    let linear: Vec<(usize, f64)> = features.iter().map(|&f| (f, coefficient(&mut rng))).collect();

    let interactions: Vec<((usize, usize), f64)> = sample(&mut rng, max_pairs, n_interactions)
        .into_iter()
        .map(|k| (pair_at(&features, k), coefficient(&mut rng)))
        .collect();
    GroundTruth::from_terms(n_features, linear, interactions)
}

/// The k-th pair (i < j) in row-major order over `features`.
fn pair_at(features: &[usize], mut k: usize) -> (usize, usize) {
    let n = features.len();
    for i in 0..n {
        let row = n - 1 - i;
        if k < row {
            return (features[i], features[i + 1 + k]);
        }
        k -= row;
    }
    unreachable!("pair index in range")
}

/// Bernoulli(p) instances with exact targets. Rows are drawn in order from
/// one stream, so a smaller m gives a prefix of a larger draw.
pub fn generate_instances(truth: &GroundTruth, m: usize, bernoulli_p: f64, seed: u64) -> Result<Dataset> {
    if !(bernoulli_p > 0.0 && bernoulli_p < 1.0) {
        return Err(invalid(format!("Bernoulli parameter must lie in (0, 1), got {bernoulli_p}")));
    }
    if m == 0 {
        return Err(invalid("need at least one instance"));
    }
    let n = truth.n_features;
    let mut rng = seed::rng(seed);
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        data.push(if rng.gen_bool(bernoulli_p) { 1.0 } else { 0.0 });
    }
    let x = Matrix::new(m, n, data)?;
    let y = x.row_iter().map(|r| truth.value(r)).collect();
    Dataset::new(x, y)
}

/// Balanced binary tree over `n_features` leaves (sibling sizes differ by
/// at most one) with the features shuffled across the leaves. Groups are
/// named `g1`, `g2`, ... in preorder below `root`; leaves are named after
/// their feature, `x{j}`.
pub fn build_random_hierarchy(n_features: usize, seed: u64) -> Result<FeatureHierarchy> {
    if n_features == 0 {
        return Err(invalid("need at least one feature"));
    }
    let mut order: Vec<usize> = (0..n_features).collect();
    order.shuffle(&mut seed::rng(seed));

    let mut records = Vec::with_capacity(2 * n_features - 1);
    let mut next_group = 0usize;
    // (slice of `order`, parent name)
    let mut stack: Vec<(usize, usize, Option<String>)> = vec![(0, n_features, None)];
    while let Some((lo, hi, parent)) = stack.pop() {
        if hi - lo == 1 {
            records.push(NodeRecord::leaf(format!("x{}", order[lo]), parent.as_deref(), order[lo]));
            continue;
        }
        let name = if parent.is_none() {
            "root".to_string()
        } else {
            next_group += 1;
            format!("g{next_group}")
        };
        records.push(NodeRecord::group(name.clone(), parent.as_deref()));
        let mid = lo + (hi - lo).div_ceil(2);
        stack.push((mid, hi, Some(name.clone())));
        stack.push((lo, mid, Some(name)));
    }
    Ok(FeatureHierarchy::from_records(records)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationScore {
    pub feature_fdr: f64,
    pub feature_power: f64,
    pub interaction_fdr: f64,
    pub interaction_power: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores rejected nodes and interactions against the ground truth.
///
/// A node is truly important when its feature set holds an important
/// feature; an interaction result is a true discovery when some pair in
/// I_I has one member under each node. Ratios with a zero denominator are
/// reported as 0.
pub fn score(
    report: &ImportanceReport,
    interactions: &[InteractionResult],
    truth: &GroundTruth,
    h: &FeatureHierarchy,
) -> Result<EvaluationScore> {
    if report.config.n_features != truth.n_features {
        return Err(invalid(format!(
            "report covers {} features, ground truth {}",
            report.config.n_features, truth.n_features
        )));
    }
    if report.nodes.len() != h.len() {
        return Err(invalid("report and hierarchy disagree on the node count"));
    }
    let important = truth.important_features();
    let is_important = |features: &[usize]| features.iter().any(|f| important.contains(f));
    let mut n_important = 0;
    let (mut rejected, mut true_rejected) = (0, 0);
    for n in h.nodes() {
        let imp = is_important(&n.features);
        n_important += imp as usize;
        if report.nodes[n.id.0].rejected {
            rejected += 1;
            true_rejected += imp as usize;
        }
    }

    let pairs = truth.interaction_pairs();
    let mut found = BTreeSet::new();
    let (mut i_rejected, mut i_true) = (0, 0);
    for r in interactions.iter().filter(|r| r.rejected) {
        i_rejected += 1;
        let fa = h.features(r.candidate.a);
        let fb = h.features(r.candidate.b);
        let hits: Vec<(usize, usize)> = pairs
            .iter()
            .filter(|(j, k)| (fa.contains(j) && fb.contains(k)) || (fa.contains(k) && fb.contains(j)))
            .copied()
            .collect();
        if !hits.is_empty() {
            i_true += 1;
            found.extend(hits);
        }
    }

    Ok(EvaluationScore {
        feature_fdr: ratio(rejected - true_rejected, rejected),
        feature_power: ratio(true_rejected, n_important),
        interaction_fdr: ratio(i_rejected - i_true, i_rejected),
        interaction_power: ratio(found.len(), pairs.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vary {
    M,
    Sigma,
}

impl std::str::FromStr for Vary {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Vary::M),
            "sigma" => Ok(Vary::Sigma),
            other => Err(invalid(format!("cannot vary `{other}` (expected m or sigma)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub vary: Vary,
    pub grid: Vec<f64>,
    pub replicates: usize,
    pub n_features: usize,
    pub n_linear: usize,
    pub n_interactions: usize,
    /// Instances per dataset when σ is varied.
    pub m: usize,
    /// Noise scale when m is varied.
    pub sigma: f64,
    pub bernoulli_p: f64,
    pub q: f64,
    pub seed: u64,
    /// Test children only under rejected parents; the rejected sets are
    /// the same either way.
    pub lazy: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            vary: Vary::Sigma,
            grid: vec![0.0, 0.04, 0.08, 0.12, 0.16],
            replicates: 100,
            n_features: 500,
            n_linear: 50,
            n_interactions: 50,
            m: 10_000,
            sigma: 0.05,
            bernoulli_p: 0.5,
            q: 0.05,
            seed: 0,
            lazy: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(invalid("need at least one replicate"));
        }
        if self.grid.is_empty() {
            return Err(invalid("grid is empty"));
        }
        for &v in &self.grid {
            match self.vary {
                Vary::M if !(v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) => {
                    return Err(invalid(format!("grid value {v} is not a valid instance count")))
                }
                Vary::Sigma if !(v >= 0.0 && v.is_finite()) => {
                    return Err(invalid(format!("grid value {v} is not a valid noise scale")))
                }
                _ => {}
            }
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(invalid(format!("q must lie in (0, 1), got {}", self.q)));
        }
        if !(self.bernoulli_p > 0.0 && self.bernoulli_p < 1.0) {
            return Err(invalid("Bernoulli parameter must lie in (0, 1)"));
        }
        Ok(())
    }

    fn point(&self, value: f64) -> (usize, f64) {
        match self.vary {
            Vary::M => (value as usize, self.sigma),
            Vary::Sigma => (self.m, value),
        }
    }
}

/// One replicate: fresh truth, data, hierarchy and model, analyzed and
/// scored. Replicate r uses the same truth, hierarchy and draws at every
/// grid point, so grid rows differ only in the varied quantity.
pub fn run_replicate(config: &ExperimentConfig, m: usize, sigma: f64, replicate: usize) -> Result<EvaluationScore> {
    let base = seed::combine(config.seed, replicate as u64);
    let truth = generate_ground_truth(
        config.n_features,
        config.n_linear,
        config.n_interactions,
        seed::combine(base, 1),
    )?;
    let data = generate_instances(&truth, m, config.bernoulli_p, seed::combine(base, 2))?;
    let h = build_random_hierarchy(config.n_features, seed::combine(base, 3))?;
    let model = make_synthetic_model(truth.clone(), sigma, seed::combine(base, 4))?;

    let mut analysis = AnalysisConfig::new(LossFunction::SquaredError, PerturbationSpec::erasure());
    analysis.q = config.q;
    analysis.lazy = config.lazy;
    let report = analyze(&model, &data, &h, &analysis)?;

    let leaves: Vec<_> = report
        .nodes
        .iter()
        .filter(|n| n.rejected && n.leaf)
        .map(|n| n.id)
        .collect();
    let candidates = candidate_pairs(&leaves, &h)?;
    let mut ic = InteractionConfig::new(PerturbationSpec::erasure());
    ic.q = config.q;
    let interactions = analyze_interactions(&model, &data, &h, &candidates, &ic)?;
    score(&report, &interactions, &truth, &h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        MeanSe { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub value: f64,
    pub m: usize,
    pub sigma: f64,
    pub feature_fdr: MeanSe,
    pub feature_power: MeanSe,
    pub interaction_fdr: MeanSe,
    pub interaction_power: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub config: ExperimentConfig,
    pub rows: Vec<ExperimentRow>,
    /// Per-replicate scores, `scores[row][replicate]`.
    pub scores: Vec<Vec<EvaluationScore>>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.grid.len())
        .flat_map(|g| (0..config.replicates).map(move |r| (g, r)))
        .collect();
    let results: BTreeMap<(usize, usize), EvaluationScore> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let (m, sigma) = config.point(config.grid[g]);
            let s = run_replicate(config, m, sigma, r)?;
            log::debug!("grid {} replicate {r}: {s:?}", config.grid[g]);
            Ok(((g, r), s))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(config.grid.len());
    let mut scores = Vec::with_capacity(config.grid.len());
    for (g, &value) in config.grid.iter().enumerate() {
        let s: Vec<EvaluationScore> = (0..config.replicates).map(|r| results[&(g, r)]).collect();
        let col = |f: fn(&EvaluationScore) -> f64| MeanSe::of(&s.iter().map(f).collect::<Vec<_>>());
        let (m, sigma) = config.point(value);
        rows.push(ExperimentRow {
            value,
            m,
            sigma,
            feature_fdr: col(|s| s.feature_fdr),
            feature_power: col(|s| s.feature_power),
            interaction_fdr: col(|s| s.interaction_fdr),
            interaction_power: col(|s| s.interaction_power),
        });
        scores.push(s);
    }
    Ok(ExperimentTable {
        config: config.clone(),
        rows,
        scores,
    })
}

impl ExperimentTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Aligned text table with a header line echoing the fixed settings.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let fixed = match c.vary {
            Vary::M => format!("sigma = {}", c.sigma),
            Vary::Sigma => format!("m = {}", c.m),
        };
        let _ = writeln!(
            out,
            "# {fixed}, n = {}, |I_L| = {}, |I_I| = {}, p = {}, q = {}, replicates = {}, seed = {}",
            c.n_features, c.n_linear, c.n_interactions, c.bernoulli_p, c.q, c.replicates, c.seed
        );
        let head = match c.vary {
            Vary::M => "m",
            Vary::Sigma => "sigma",
        };
        let _ = writeln!(
            out,
            "{head:>8}  {:>15}  {:>15}  {:>15}  {:>15}",
            "feature FDR", "feature power", "inter. FDR", "inter. power"
        );
        for r in &self.rows {
            let cell = |v: MeanSe| format!("{:.3} ({:.3})", v.mean, v.se);
            let _ = writeln!(
                out,
                "{:>8}  {:>15}  {:>15}  {:>15}  {:>15}",
                r.value,
                cell(r.feature_fdr),
                cell(r.feature_power),
                cell(r.interaction_fdr),
                cell(r.interaction_power)
            );
        }
        out
    }
}
