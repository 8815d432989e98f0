//! Perturbation of feature sets across test instances.
//!
//! Permutation shuffles a feature set's values across rows, moving each
//! row's values for the set as a unit; erasure overwrites them with a
//! constant; flip maps binary `x` to `1 - x`. Permutations are drawn from a
//! stream keyed by `(seed, sorted feature set, replicate)`, so a node's
//! perturbations do not depend on which other nodes are evaluated or in
//! what order.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{invalid, Result};
use crate::seed;

/// Replicates drawn for permutation perturbations unless overridden.
pub const DEFAULT_PERMUTATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    Permutation { count: usize },
    Erasure { value: f64 },
    Flip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn permutation(count: usize, seed: u64) -> Self {
        PerturbationSpec {
            kind: PerturbationKind::Permutation { count },
            seed,
        }
    }

    /// Erasure to zero.
    pub fn erasure() -> Self {
        Self::erasure_to(0.0)
    }

    pub fn erasure_to(value: f64) -> Self {
        PerturbationSpec {
            kind: PerturbationKind::Erasure { value },
            seed: 0,
        }
    }

    pub fn flip() -> Self {
        PerturbationSpec {
            kind: PerturbationKind::Flip,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of perturbed copies per feature set (P).
    pub fn replicates(&self) -> usize {
        match self.kind {
            PerturbationKind::Permutation { count } => count,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            PerturbationKind::Permutation { count: 0 } => {
                Err(invalid("permutation count must be at least 1"))
            }
            PerturbationKind::Erasure { value } if !value.is_finite() => {
                Err(invalid("erasure value must be finite"))
            }
            _ => Ok(()),
        }
    }
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self::permutation(DEFAULT_PERMUTATIONS, 0)
    }
}

impl fmt::Display for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PerturbationKind::Permutation { count } => {
                write!(f, "permutation x{count} (seed {})", self.seed)
            }
            PerturbationKind::Erasure { value } => write!(f, "erasure to {value}"),
            PerturbationKind::Flip => write!(f, "flip"),
        }
    }
}

/// One perturbed copy of the data per replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedBatch {
    pub matrices: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub(crate) enum PartOp {
    Set(f64),
    Flip,
    /// Row `i` takes the set's values from row `perm[i]`.
    Permute(Vec<usize>),
}

/// How one feature set is perturbed in one replicate.
#[derive(Debug, Clone)]
pub(crate) struct Part<'a> {
    pub cols: &'a [usize],
    pub op: PartOp,
}

impl Part<'_> {
    /// Whether this part alters row `i`, compared bitwise.
    #[inline]
    pub fn changes(&self, data: &Matrix, i: usize) -> bool {
        let row = data.row(i);
        match &self.op {
            PartOp::Set(v) => self.cols.iter().any(|&c| row[c].to_bits() != v.to_bits()),
            PartOp::Flip => self
                .cols
                .iter()
                .any(|&c| (1.0 - row[c]).to_bits() != row[c].to_bits()),
            PartOp::Permute(perm) => {
                let src = data.row(perm[i]);
                self.cols.iter().any(|&c| src[c].to_bits() != row[c].to_bits())
            }
        }
    }

    /// Writes row `i`'s perturbed values for this part into `buf`, which
    /// holds a copy of the row.
    #[inline]
    pub fn apply_row(&self, data: &Matrix, i: usize, buf: &mut [f64]) {
        match &self.op {
            PartOp::Set(v) => {
                for &c in self.cols {
                    buf[c] = *v;
                }
            }
            PartOp::Flip => {
                for &c in self.cols {
                    buf[c] = 1.0 - buf[c];
                }
            }
            PartOp::Permute(perm) => {
                let src = data.row(perm[i]);
                for &c in self.cols {
                    buf[c] = src[c];
                }
            }
        }
    }
}

/// The perturbation of `cols` (sorted) in replicate `p`.
pub(crate) fn part_for_replicate<'a>(
    rows: usize,
    cols: &'a [usize],
    spec: &PerturbationSpec,
    p: usize,
) -> Part<'a> {
    let op = match spec.kind {
        PerturbationKind::Erasure { value } => PartOp::Set(value),
        PerturbationKind::Flip => PartOp::Flip,
        PerturbationKind::Permutation { .. } => {
            let stream = seed::combine(seed::feature_set_seed(spec.seed, cols), p as u64);
            let mut perm: Vec<usize> = (0..rows).collect();
            perm.shuffle(&mut seed::rng(stream));
            PartOp::Permute(perm)
        }
    };
    Part { cols, op }
}

/// Sorts, deduplicates and range-checks a feature set against `data`, and
/// checks the perturbation's preconditions on it.
pub fn normalize_features(data: &Matrix, features: &[usize], spec: &PerturbationSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    if features.is_empty() {
        return Err(invalid("feature set is empty"));
    }
    let mut f = features.to_vec();
    f.sort_unstable();
    f.dedup();
    if let Some(&bad) = f.iter().find(|&&j| j >= data.cols()) {
        return Err(invalid(format!(
            "feature index {bad} out of range for {} columns",
            data.cols()
        )));
    }
    if spec.kind == PerturbationKind::Flip {
        if let Some(&bad) = f.iter().find(|&&j| !data.is_binary_column(j)) {
            return Err(invalid(format!("cannot flip non-binary column {bad}")));
        }
    }
    Ok(f)
}

fn materialize(data: &Matrix, parts: &[Part<'_>]) -> Matrix {
    let mut out = data.clone();
    let mut buf = vec![0.0; data.cols()];
    for i in 0..data.rows() {
        buf.copy_from_slice(data.row(i));
        for part in parts {
            part.apply_row(data, i, &mut buf);
        }
        out.row_mut(i).copy_from_slice(&buf);
    }
    out
}

/// Perturbed copies of `data` with `features` perturbed, one per replicate.
pub fn apply(data: &Matrix, features: &[usize], spec: &PerturbationSpec) -> Result<PerturbedBatch> {
    let cols = normalize_features(data, features, spec)?;
    let matrices = (0..spec.replicates())
        .map(|p| materialize(data, &[part_for_replicate(data.rows(), &cols, spec, p)]))
        .collect();
    Ok(PerturbedBatch { matrices })
}

/// Both sets perturbed in the same replicate. Under permutation each set
/// follows its own stream, the same one [`apply`] uses for it alone.
pub fn apply_joint(
    data: &Matrix,
    features_a: &[usize],
    features_b: &[usize],
    spec: &PerturbationSpec,
) -> Result<PerturbedBatch> {
    let a = normalize_features(data, features_a, spec)?;
    let b = normalize_features(data, features_b, spec)?;
    ensure_disjoint(&a, &b)?;
    let matrices = (0..spec.replicates())
        .map(|p| {
            materialize(
                data,
                &[
                    part_for_replicate(data.rows(), &a, spec, p),
                    part_for_replicate(data.rows(), &b, spec, p),
                ],
            )
        })
        .collect();
    Ok(PerturbedBatch { matrices })
}

pub(crate) fn ensure_disjoint(a: &[usize], b: &[usize]) -> Result<()> {
    if let Some(shared) = a.iter().find(|f| b.binary_search(f).is_ok()) {
        return Err(invalid(format!(
            "feature sets overlap (both contain column {shared})"
        )));
    }
    Ok(())
}
