//! Per-node perturbation tests and top-down FDR control over a hierarchy.
//!
//! For a node covering feature set S, each instance contributes the paired
//! difference
//!
//! ```text
//! dᵢ = (1/P) Σₚ L[yᵢ, h(Δxᵢ⁽ᵖ⁾)] − L[yᵢ, h(xᵢ)]
//! ```
//!
//! where Δxᵢ⁽ᵖ⁾ is xᵢ with S perturbed in replicate p. A node is important
//! when perturbing it raises the loss, tested one-sided (`Tail::Greater`)
//! by default. The hierarchy is then walked from the root: the root is
//! rejected iff p ≤ q, and the children of every rejected node are tested
//! as one Benjamini-Hochberg family at level q.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::eval::perturbed_outputs;
use crate::hierarchy::{outer_nodes, FeatureHierarchy, NodeId, RejectedSubtree};
use crate::model::{evaluate, LossFunction, Model, Output};
use crate::perturb::{normalize_features, part_for_replicate, PerturbationSpec};
use crate::stats::{auroc, benjamini_hochberg, wilcoxon_signed_rank, PairedDifferences, Tail, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub q: f64,
    pub perturbation: PerturbationSpec,
    pub loss: LossFunction,
    pub tail: Tail,
    /// Test children only once their parent is rejected.
    pub lazy: bool,
}

impl AnalysisConfig {
    pub fn new(loss: LossFunction, perturbation: PerturbationSpec) -> Self {
        AnalysisConfig {
            q: 0.05,
            perturbation,
            loss,
            tail: Tail::Greater,
            lazy: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(invalid(format!("q must lie in (0, 1), got {}", self.q)));
        }
        self.perturbation.validate()
    }
}

/// Outcome of perturbing one feature set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTest {
    pub result: TestResult,
    pub mean_baseline_loss: f64,
    pub mean_perturbed_loss: f64,
    /// Mean AUROC of the perturbed predictions, for 0/1 targets.
    pub auroc: Option<f64>,
}

impl NodeTest {
    /// Mean loss increase caused by the perturbation.
    pub fn effect_size(&self) -> f64 {
        self.mean_perturbed_loss - self.mean_baseline_loss
    }
}

/// Unperturbed predictions and losses, shared by every node test.
pub(crate) struct Baseline {
    pub predictions: Vec<f64>,
    pub losses: Vec<f64>,
    pub mean_loss: f64,
    pub binary_targets: bool,
}

impl Baseline {
    pub fn compute(model: &dyn Model, data: &Dataset, loss: LossFunction) -> Result<Self> {
        let predictions = evaluate(model, &data.x, Output::Predict)?;
        let losses = loss.per_instance(&data.y, &predictions);
        let mean_loss = mean(&losses);
        let binary_targets = data.y.iter().all(|&y| y == 0.0 || y == 1.0);
        Ok(Baseline {
            predictions,
            losses,
            mean_loss,
            binary_targets,
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn test_features(
    model: &dyn Model,
    data: &Dataset,
    features: &[usize],
    spec: &PerturbationSpec,
    loss: LossFunction,
    tail: Tail,
    baseline: &Baseline,
) -> Result<NodeTest> {
    let cols = normalize_features(&data.x, features, spec)?;
    let m = data.n_instances();
    let replicates = spec.replicates();
    let mut loss_sums = vec![0.0; m];
    let mut auroc_sum = 0.0;
    let mut auroc_count = 0usize;
    for p in 0..replicates {
        let part = part_for_replicate(m, &cols, spec, p);
        let preds = perturbed_outputs(model, Output::Predict, &data.x, &[part], &baseline.predictions, None)?;
        for ((acc, &y), &h) in loss_sums.iter_mut().zip(&data.y).zip(&preds) {
            *acc += loss.eval(y, h);
        }
        if baseline.binary_targets {
            if let Some(a) = auroc(&preds, &data.y) {
                auroc_sum += a;
                auroc_count += 1;
            }
        }
    }
    let scale = 1.0 / replicates as f64;
    let perturbed: Vec<f64> = loss_sums.iter().map(|s| s * scale).collect();
    let diffs: Vec<f64> = perturbed
        .iter()
        .zip(&baseline.losses)
        .map(|(p, b)| p - b)
        .collect();
    let result = wilcoxon_signed_rank(&PairedDifferences::new(diffs)?, tail);
    Ok(NodeTest {
        result,
        mean_baseline_loss: baseline.mean_loss,
        mean_perturbed_loss: mean(&perturbed),
        auroc: (auroc_count > 0).then(|| auroc_sum / auroc_count as f64),
    })
}

/// Tests whether perturbing `features` raises the model's loss.
pub fn test_node(
    model: &dyn Model,
    data: &Dataset,
    features: &[usize],
    spec: &PerturbationSpec,
    loss: LossFunction,
) -> Result<NodeTest> {
    test_node_with_tail(model, data, features, spec, loss, Tail::Greater)
}

pub fn test_node_with_tail(
    model: &dyn Model,
    data: &Dataset,
    features: &[usize],
    spec: &PerturbationSpec,
    loss: LossFunction,
    tail: Tail,
) -> Result<NodeTest> {
    let baseline = Baseline::compute(model, data, loss)?;
    test_features(model, data, features, spec, loss, tail, &baseline)
}

/// Top-down FDR control. `test_family` is asked for the results of the
/// root alone, then for the children of each rejected node as a family;
/// nothing else is ever requested.
pub fn hierarchical_fdr<F>(h: &FeatureHierarchy, q: f64, mut test_family: F) -> Result<RejectedSubtree>
where
    F: FnMut(&[NodeId]) -> Result<Vec<TestResult>>,
{
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("q must lie in (0, 1), got {q}")));
    }
    let mut rejected = RejectedSubtree::new();
    let root = h.root();
    let root_result = family_results(&mut test_family, &[root])?[0];
    if root_result.p_value > q {
        return Ok(rejected);
    }
    rejected.insert(root, root_result);
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        let children = h.children(node);
        if children.is_empty() {
            continue;
        }
        let results = family_results(&mut test_family, children)?;
        let ps: Vec<f64> = results.iter().map(|r| r.p_value).collect();
        for i in benjamini_hochberg(&ps, q)? {
            rejected.insert(children[i], results[i]);
            queue.push_back(children[i]);
        }
    }
    Ok(rejected)
}

fn family_results<F>(test_family: &mut F, family: &[NodeId]) -> Result<Vec<TestResult>>
where
    F: FnMut(&[NodeId]) -> Result<Vec<TestResult>>,
{
    let results = test_family(family)?;
    if results.len() != family.len() {
        return Err(Error::Internal(format!(
            "{} results for a family of {}",
            results.len(),
            family.len()
        )));
    }
    Ok(results)
}

/// [`hierarchical_fdr`] over precomputed results. A visited node without a
/// result is an internal error.
pub fn hierarchical_fdr_precomputed(
    h: &FeatureHierarchy,
    results: &BTreeMap<NodeId, TestResult>,
    q: f64,
) -> Result<RejectedSubtree> {
    hierarchical_fdr(h, q, |family| {
        family
            .iter()
            .map(|id| {
                results
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Internal(format!("node {id} visited without a p-value")))
            })
            .collect()
    })
}

/// Per-node line of an [`ImportanceReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTestRecord {
    pub id: NodeId,
    pub name: String,
    pub parent: Option<String>,
    pub leaf: bool,
    pub features: Vec<usize>,
    pub tested: bool,
    pub p_value: Option<f64>,
    pub statistic: Option<f64>,
    pub n_effective: Option<usize>,
    /// Mean perturbed loss minus mean baseline loss.
    pub effect_size: Option<f64>,
    pub mean_baseline_loss: Option<f64>,
    pub mean_perturbed_loss: Option<f64>,
    pub auroc: Option<f64>,
    pub rejected: bool,
    pub outer: bool,
}

/// Rows mirroring the usual summary of an importance analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryCounts {
    pub total_nodes: usize,
    pub nodes_with_unadjusted_p_below_0_05: usize,
    pub nodes_rejected: usize,
    pub outer_nodes: usize,
    pub feature_groups_among_outer_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    #[serde(flatten)]
    pub analysis: AnalysisConfig,
    pub n_instances: usize,
    pub n_features: usize,
    /// Caller-supplied provenance (input paths, model source).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub config: ReportConfig,
    pub summary: SummaryCounts,
    /// Outer node names, largest effect first.
    pub outer_nodes: Vec<String>,
    pub nodes: Vec<NodeTestRecord>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ImportanceReport {
    pub fn rejected_ids(&self) -> BTreeSet<NodeId> {
        self.nodes.iter().filter(|n| n.rejected).map(|n| n.id).collect()
    }

    pub fn outer_ids(&self) -> Vec<NodeId> {
        self.outer_nodes
            .iter()
            .filter_map(|name| self.nodes.iter().find(|n| &n.name == name).map(|n| n.id))
            .collect()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeTestRecord> {
        self.nodes.get(id.0).filter(|n| n.id == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Tests the hierarchy's nodes and applies top-down FDR control.
///
/// Node tests run on the current rayon pool. Every node's perturbation
/// stream is keyed by its feature set, so results do not depend on the
/// pool size or on which other nodes get tested.
pub fn analyze(
    model: &dyn Model,
    data: &Dataset,
    h: &FeatureHierarchy,
    config: &AnalysisConfig,
) -> Result<ImportanceReport> {
    config.validate()?;
    h.check_arity(data.n_features())?;
    let mut warnings = Vec::new();
    let unreferenced = h.unreferenced_features(data.n_features());
    if !unreferenced.is_empty() {
        let msg = format!(
            "{} of {} features are not in the hierarchy and were not tested",
            unreferenced.len(),
            data.n_features()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let baseline = Baseline::compute(model, data, config.loss)?;
    let run = |id: &NodeId| -> Result<(NodeId, NodeTest)> {
        let t = test_features(
            model,
            data,
            h.features(*id),
            &config.perturbation,
            config.loss,
            config.tail,
            &baseline,
        )?;
        Ok((*id, t))
    };

    let tests: Mutex<BTreeMap<NodeId, NodeTest>> = Mutex::new(BTreeMap::new());
    if !config.lazy {
        let all: Vec<NodeId> = h.nodes().iter().map(|n| n.id).collect();
        let done = all.par_iter().map(run).collect::<Result<Vec<_>>>()?;
        tests.lock().expect("no poisoning").extend(done);
    }
    let rejected = hierarchical_fdr(h, config.q, |family| {
        let mut map = tests.lock().expect("no poisoning");
        let missing: Vec<NodeId> = family.iter().filter(|id| !map.contains_key(id)).copied().collect();
        if !missing.is_empty() {
            drop(map);
            let done = missing.par_iter().map(run).collect::<Result<Vec<_>>>()?;
            map = tests.lock().expect("no poisoning");
            map.extend(done);
        }
        Ok(family.iter().map(|id| test_result(&map[id])).collect())
    })?;
    let tests = tests.into_inner().expect("no poisoning");
    let outer = outer_nodes(h, &rejected)?;
    Ok(build_report(h, data, config, &tests, &rejected, &outer, warnings))
}

fn test_result(t: &NodeTest) -> TestResult {
    TestResult {
        effect_size: t.effect_size(),
        ..t.result
    }
}

fn build_report(
    h: &FeatureHierarchy,
    data: &Dataset,
    config: &AnalysisConfig,
    tests: &BTreeMap<NodeId, NodeTest>,
    rejected: &RejectedSubtree,
    outer: &[NodeId],
    warnings: Vec<String>,
) -> ImportanceReport {
    let outer_set: BTreeSet<NodeId> = outer.iter().copied().collect();
    let nodes: Vec<NodeTestRecord> = h
        .nodes()
        .iter()
        .map(|n| {
            let t = tests.get(&n.id);
            NodeTestRecord {
                id: n.id,
                name: n.name.clone(),
                parent: n.parent.map(|p| h.node(p).name.clone()),
                leaf: n.is_leaf(),
                features: n.features.clone(),
                tested: t.is_some(),
                p_value: t.map(|t| t.result.p_value),
                statistic: t.map(|t| t.result.statistic),
                n_effective: t.map(|t| t.result.n_effective),
                effect_size: t.map(NodeTest::effect_size),
                mean_baseline_loss: t.map(|t| t.mean_baseline_loss),
                mean_perturbed_loss: t.map(|t| t.mean_perturbed_loss),
                auroc: t.and_then(|t| t.auroc),
                rejected: rejected.contains(n.id),
                outer: outer_set.contains(&n.id),
            }
        })
        .collect();
    let summary = SummaryCounts {
        total_nodes: h.len(),
        nodes_with_unadjusted_p_below_0_05: nodes
            .iter()
            .filter(|n| n.p_value.is_some_and(|p| p < 0.05))
            .count(),
        nodes_rejected: rejected.len(),
        outer_nodes: outer.len(),
        feature_groups_among_outer_nodes: outer.iter().filter(|id| !h.is_leaf(**id)).count(),
    };
    ImportanceReport {
        config: ReportConfig {
            analysis: *config,
            n_instances: data.n_instances(),
            n_features: data.n_features(),
            inputs: BTreeMap::new(),
        },
        summary,
        outer_nodes: outer.iter().map(|id| h.node(*id).name.clone()).collect(),
        nodes,
        warnings,
    }
}
