//! Paired nonparametric tests and multiple-testing procedures.

mod bh;
pub mod wilcoxon;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use bh::benjamini_hochberg;
pub use wilcoxon::wilcoxon_signed_rank;

/// Per-instance paired differences. Nonempty, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifferences(Vec<f64>);

impl PairedDifferences {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("paired differences must be nonempty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "paired difference {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(PairedDifferences(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Signed-rank sum of the positive differences, W⁺.
    pub statistic: f64,
    pub p_value: f64,
    /// Number of nonzero differences.
    pub n_effective: usize,
    /// Mean difference.
    pub effect_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    #[default]
    Greater,
    TwoSided,
}

impl std::str::FromStr for Tail {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater" => Ok(Tail::Greater),
            "two_sided" | "two-sided" => Ok(Tail::TwoSided),
            other => Err(invalid(format!("unknown tail `{other}`"))),
        }
    }
}

/// Area under the ROC curve of `scores` against binary `labels`, ties
/// counted as one half. `None` unless both classes are present and every
/// label is 0 or 1.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    if scores.len() != labels.len() || labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut pos_rank_sum, mut n_pos) = (0.0, 0usize);
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            if labels[i] == 1.0 {
                pos_rank_sum += midrank;
                n_pos += 1;
            }
        }
        start = end;
    }
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}
