//! Report rendering: summary tables, Graphviz DOT, interaction documents.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hierarchy::{FeatureHierarchy, NodeId};
use crate::importance::ImportanceReport;
use crate::interactions::{InteractionConfig, InteractionResult};

/// −log₁₀ p at which the fill saturates.
const SATURATION: f64 = 10.0;
const PALETTE_SIZE: usize = 9;

/// Text table of the summary counts.
pub fn summary_table(report: &ImportanceReport) -> String {
    let s = &report.summary;
    let rows = [
        ("total nodes", s.total_nodes),
        ("nodes with unadjusted p < 0.05", s.nodes_with_unadjusted_p_below_0_05),
        ("nodes rejected", s.nodes_rejected),
        ("outer nodes", s.outer_nodes),
        ("feature groups among outer nodes", s.feature_groups_among_outer_nodes),
    ];
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (label, n) in rows {
        let _ = writeln!(out, "{label:<width$}  {n:>8}");
    }
    out
}

/// Palette index in 1..=9 for a p-value.
pub fn fill_level(p: f64) -> usize {
    let strength = if p <= 0.0 { SATURATION } else { (-p.log10()).clamp(0.0, SATURATION) };
    (1 + ((strength / SATURATION) * (PALETTE_SIZE - 1) as f64).floor() as usize).min(PALETTE_SIZE)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn format_p(p: f64) -> String {
    if p == 0.0 {
        "0".into()
    } else if p < 1e-3 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

/// Graphviz rendering of the rejected subtree. Rejected leaves are boxes,
/// rejected groups ellipses, shaded by −log₁₀ p; every non-rejected child
/// of a rejected node is collapsed into a triangle standing for its whole
/// subtree. Outer nodes get a bold outline.
pub fn to_dot(report: &ImportanceReport, h: &FeatureHierarchy) -> Result<String> {
    if report.nodes.len() != h.len() {
        return Err(invalid(format!(
            "report has {} nodes, hierarchy {}",
            report.nodes.len(),
            h.len()
        )));
    }
    for (rec, node) in report.nodes.iter().zip(h.nodes()) {
        if rec.name != node.name {
            return Err(invalid(format!("report node `{}` does not match hierarchy node `{}`", rec.name, node.name)));
        }
    }
    let mut out = String::new();
    out.push_str("digraph hierarchy {\n");
    out.push_str("  node [style=filled, colorscheme=blues9, fontname=\"Helvetica\"];\n");
    out.push_str("  edge [arrowhead=none];\n");

    let mut stack = vec![h.root()];
    let mut edges = Vec::new();
    while let Some(id) = stack.pop() {
        let rec = &report.nodes[id.0];
        let name = escape(&rec.name);
        let p = rec.p_value.map(format_p).unwrap_or_else(|| "untested".into());
        if !rec.rejected {
            let _ = writeln!(
                out,
                "  n{} [shape=triangle, fillcolor=white, label=\"{name}\\n{} feature{}\\np = {p}\"];",
                id.0,
                rec.features.len(),
                if rec.features.len() == 1 { "" } else { "s" }
            );
            continue;
        }
        let shape = if rec.leaf { "box" } else { "ellipse" };
        let level = fill_level(rec.p_value.unwrap_or(1.0));
        let font = if level >= 6 { ", fontcolor=white" } else { "" };
        let pen = if rec.outer { ", penwidth=3" } else { "" };
        let _ = writeln!(
            out,
            "  n{} [shape={shape}, fillcolor={level}{font}{pen}, label=\"{name}\\np = {p}\"];",
            id.0
        );
        for &c in h.children(id).iter().rev() {
            stack.push(c);
        }
        edges.extend(h.children(id).iter().map(|c| (id, *c)));
    }
    for (a, b) in edges {
        let _ = writeln!(out, "  n{} -> n{};", a.0, b.0);
    }
    out.push_str("}\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub node_a: String,
    pub node_b: String,
    pub p: f64,
    pub nonadditivity: f64,
    pub rejected: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub experimental: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReportConfig {
    #[serde(flatten)]
    pub interaction: InteractionConfig,
    pub n_instances: usize,
    pub n_features: usize,
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub config: InteractionReportConfig,
    pub nodes: Vec<String>,
    /// Sorted by p ascending.
    pub results: Vec<InteractionRecord>,
}

impl InteractionReport {
    pub fn new(config: InteractionReportConfig, h: &FeatureHierarchy, nodes: &[NodeId], results: &[InteractionResult]) -> Self {
        let mut records: Vec<InteractionRecord> = results
            .iter()
            .map(|r| InteractionRecord {
                node_a: r.node_a.clone(),
                node_b: r.node_b.clone(),
                p: r.p_value,
                nonadditivity: r.nonadditivity,
                rejected: r.rejected,
                experimental: r.experimental,
            })
            .collect();
        records.sort_by(|x, y| {
            x.p.total_cmp(&y.p)
                .then_with(|| x.node_a.cmp(&y.node_a))
                .then_with(|| x.node_b.cmp(&y.node_b))
        });
        InteractionReport {
            config,
            nodes: nodes.iter().map(|id| h.node(*id).name.clone()).collect(),
            results: records,
        }
    }

    pub fn rejected(&self) -> usize {
        self.results.iter().filter(|r| r.rejected).count()
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
