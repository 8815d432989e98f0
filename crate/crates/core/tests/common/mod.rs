//! Brute-force reference implementations shared by the integration tests.
//! They are deliberately naive and share no code with the library.

#![allow(dead_code)]

use std::collections::BTreeSet;

/// Midrank of every |d| among the nonzero differences, by direct counting.
fn midranks(abs: &[f64]) -> Vec<f64> {
    abs.iter()
        .map(|&a| {
            let below = abs.iter().filter(|&&b| b < a).count() as f64;
            let tied = abs.iter().filter(|&&b| b == a).count() as f64;
            below + (tied + 1.0) / 2.0
        })
        .collect()
}

/// Upper and lower tail probabilities of W⁺ by enumerating every sign
/// assignment of the nonzero differences.
pub fn wilcoxon_tails(diffs: &[f64]) -> (f64, f64) {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nz.is_empty() {
        return (1.0, 1.0);
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let observed: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let n = nz.len();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        // midranks are multiples of 1/2, so these sums are exact
        if w >= observed {
            ge += 1;
        }
        if w <= observed {
            le += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (ge as f64 / total, le as f64 / total)
}

pub fn wilcoxon_greater(diffs: &[f64]) -> f64 {
    wilcoxon_tails(diffs).0
}

pub fn wilcoxon_two_sided(diffs: &[f64]) -> f64 {
    let (up, down) = wilcoxon_tails(diffs);
    (2.0 * up.min(down)).min(1.0)
}

/// r = max{i : P(i) ≤ i q / k}; rejects every p ≤ P(r).
pub fn bh(p: &[f64], q: f64) -> BTreeSet<usize> {
    let k = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut r = 0;
    for i in 1..=k {
        if sorted[i - 1] <= i as f64 * q / k as f64 {
            r = i;
        }
    }
    if r == 0 {
        return BTreeSet::new();
    }
    let cut = sorted[r - 1];
    (0..k).filter(|&i| p[i] <= cut).collect()
}

/// One merge of the reference clustering: columns on each side, and the
/// complete-linkage distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub distance: usize,
}

/// Replays the greedy adjacent complete-linkage merges, recomputing every
/// distance from the raw columns.
pub fn constrained_merges(columns: &[Vec<u8>], order: &[usize]) -> Vec<Merge> {
    let hamming = |a: usize, b: usize| columns[a].iter().zip(&columns[b]).filter(|(x, y)| x != y).count();
    let mut clusters: Vec<Vec<usize>> = order.iter().map(|&c| vec![c]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let linkage = |a: &Vec<usize>, b: &Vec<usize>| {
            a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| hamming(i, j)).max().unwrap()
        };
        let dists: Vec<usize> = (0..clusters.len() - 1).map(|k| linkage(&clusters[k], &clusters[k + 1])).collect();
        let best = dists.iter().min().unwrap();
        let k = dists.iter().position(|d| d == best).unwrap();
        let right = clusters.remove(k + 1);
        let left = clusters[k].clone();
        merges.push(Merge { left: left.clone(), right: right.clone(), distance: *best });
        clusters[k].extend(right);
    }
    merges
}
