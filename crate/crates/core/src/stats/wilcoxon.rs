//! Wilcoxon matched-pairs signed-rank test.
//!
//! Zero differences are dropped before ranking, tied magnitudes share
//! midranks. Up to [`EXACT_THRESHOLD`] nonzero differences the p-value is
//! exact: the null distribution of W⁺ over all 2ⁿ sign assignments is
//! built by counting subset sums of the (doubled, hence integral) ranks.
//! Above it a normal approximation with tie and continuity corrections
//! is used.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{PairedDifferences, Tail, TestResult};

/// Largest number of nonzero differences for which the exact null
/// distribution is used.
pub const EXACT_THRESHOLD: usize = 25;

/// Nonzero differences ranked by magnitude.
#[derive(Debug, Clone)]
pub struct SignedRanks {
    /// Twice the midrank of each nonzero difference, in input order.
    doubled_ranks: Vec<u64>,
    positive: Vec<bool>,
    /// Sizes of each group of tied magnitudes.
    tie_groups: Vec<usize>,
}

impl SignedRanks {
    pub fn from_differences(values: &[f64]) -> Self {
        let mut nonzero: Vec<f64> = values.iter().copied().filter(|v| *v != 0.0).collect();
        nonzero.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

        let n = nonzero.len();
        let mut doubled_ranks = Vec::with_capacity(n);
        let mut positive = Vec::with_capacity(n);
        let mut tie_groups = Vec::new();
        let mut start = 0;
        while start < n {
            let mag = nonzero[start].abs();
            let mut end = start + 1;
            while end < n && nonzero[end].abs() == mag {
                end += 1;
            }
            // ranks start..end (1-based start+1..=end); doubled midrank = start+1+end
            let r2 = (start + 1 + end) as u64;
            for v in &nonzero[start..end] {
                doubled_ranks.push(r2);
                positive.push(*v > 0.0);
            }
            tie_groups.push(end - start);
            start = end;
        }
        SignedRanks {
            doubled_ranks,
            positive,
            tie_groups,
        }
    }

    pub fn len(&self) -> usize {
        self.doubled_ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doubled_ranks.is_empty()
    }

    /// W⁺ scaled by two, an integer even when ranks are tied.
    pub fn doubled_positive_sum(&self) -> u64 {
        self.doubled_ranks
            .iter()
            .zip(&self.positive)
            .filter(|(_, &p)| p)
            .map(|(r, _)| *r)
            .sum()
    }

    pub fn positive_rank_sum(&self) -> f64 {
        self.doubled_positive_sum() as f64 / 2.0
    }

    /// Exact `(P(W⁺ ≥ w), P(W⁺ ≤ w))` under the sign-flip null.
    pub fn exact_tails(&self) -> (f64, f64) {
        let total: u64 = self.doubled_ranks.iter().sum();
        let mut counts = vec![0f64; total as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &self.doubled_ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                let c = counts[s];
                if c != 0.0 {
                    counts[s + r] += c;
                }
            }
            reach += r;
        }
        let w = self.doubled_positive_sum() as usize;
        let denom = 2f64.powi(self.len() as i32);
        let upper: f64 = counts[w..].iter().sum();
        let lower: f64 = counts[..=w].iter().sum();
        (upper / denom, lower / denom)
    }

    /// Normal-approximation `(P(W⁺ ≥ w), P(W⁺ ≤ w))` with tie and
    /// continuity corrections.
    pub fn normal_tails(&self) -> (f64, f64) {
        let n = self.len() as f64;
        let mean = n * (n + 1.0) / 4.0;
        let tie_term: f64 = self
            .tie_groups
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum();
        let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
        let sd = var.sqrt();
        let w = self.positive_rank_sum();
        let upper = normal_sf((w - mean - 0.5) / sd);
        let lower = normal_sf((mean - w - 0.5) / sd);
        (upper.min(1.0), lower.min(1.0))
    }
}

fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

fn combine(tail: Tail, (upper, lower): (f64, f64)) -> f64 {
    let p = match tail {
        Tail::Greater => upper,
        Tail::TwoSided => 2.0 * upper.min(lower),
    };
    p.clamp(0.0, 1.0)
}

/// Exact p-value regardless of sample size. Cost grows as O(n³).
pub fn exact_p_value(ranks: &SignedRanks, tail: Tail) -> f64 {
    if ranks.is_empty() {
        return 1.0;
    }
    combine(tail, ranks.exact_tails())
}

/// Normal-approximation p-value regardless of sample size.
pub fn normal_p_value(ranks: &SignedRanks, tail: Tail) -> f64 {
    if ranks.is_empty() {
        return 1.0;
    }
    combine(tail, ranks.normal_tails())
}

/// Signed-rank test of the paired differences. `Tail::Greater` tests
/// whether the median difference exceeds zero.
pub fn wilcoxon_signed_rank(diffs: &PairedDifferences, tail: Tail) -> TestResult {
    let values = diffs.values();
    let effect_size = values.iter().sum::<f64>() / values.len() as f64;
    let ranks = SignedRanks::from_differences(values);
    let n_effective = ranks.len();
    if n_effective == 0 {
        return TestResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            effect_size,
        };
    }
    let p_value = if n_effective <= EXACT_THRESHOLD {
        exact_p_value(&ranks, tail)
    } else {
        normal_p_value(&ranks, tail)
    };
    TestResult {
        statistic: ranks.positive_rank_sum(),
        p_value,
        n_effective,
        effect_size,
    }
}

/// Which regime [`wilcoxon_signed_rank`] used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Exact,
    Normal,
}

pub fn regime_for(n_effective: usize) -> Regime {
    if n_effective <= EXACT_THRESHOLD {
        Regime::Exact
    } else {
        Regime::Normal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diffs(v: &[f64]) -> PairedDifferences {
        PairedDifferences::new(v.to_vec()).unwrap()
    }

    #[test]
    fn all_zero_is_degenerate() {
        let r = wilcoxon_signed_rank(&diffs(&[0.0, 0.0, 0.0]), Tail::Greater);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.n_effective, 0);
    }

    #[test]
    fn six_positive_is_one_in_64() {
        let r = wilcoxon_signed_rank(&diffs(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), Tail::Greater);
        assert_eq!(r.statistic, 21.0);
        assert_abs_diff_eq!(r.p_value, 1.0 / 64.0, epsilon = 1e-15);
    }

    #[test]
    fn one_negative_of_five() {
        let r = wilcoxon_signed_rank(&diffs(&[-1.0, 2.0, 3.0, 4.0, 5.0]), Tail::Greater);
        assert_eq!(r.statistic, 14.0);
        assert_abs_diff_eq!(r.p_value, 2.0 / 32.0, epsilon = 1e-15);
    }

    #[test]
    fn zeros_are_dropped() {
        let r = wilcoxon_signed_rank(&diffs(&[0.0, 1.0, 0.0, 2.0]), Tail::Greater);
        assert_eq!(r.n_effective, 2);
        assert_abs_diff_eq!(r.p_value, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(r.effect_size, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn ties_get_midranks() {
        let ranks = SignedRanks::from_differences(&[-2.0, 2.0, 1.0]);
        // |1| -> rank 1, |2|,|-2| -> 2.5 each
        assert_eq!(ranks.positive_rank_sum(), 3.5);
    }

    #[test]
    fn two_sided_is_capped() {
        let r = wilcoxon_signed_rank(&diffs(&[1.0, -1.0]), Tail::TwoSided);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn two_sided_symmetric_in_sign() {
        let a = wilcoxon_signed_rank(&diffs(&[1.0, 2.0, -3.0, 4.0, 5.0]), Tail::TwoSided);
        let b = wilcoxon_signed_rank(&diffs(&[-1.0, -2.0, 3.0, -4.0, -5.0]), Tail::TwoSided);
        assert_abs_diff_eq!(a.p_value, b.p_value, epsilon = 1e-15);
    }

    #[test]
    fn large_samples_use_normal_regime() {
        let v: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&diffs(&v), Tail::Greater);
        assert_eq!(regime_for(r.n_effective), Regime::Normal);
        assert!(r.p_value < 1e-6);
    }
}
