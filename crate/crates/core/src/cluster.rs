//! Hierarchies derived from binary data by adjacency-constrained
//! agglomerative clustering.
//!
//! Columns start as singletons in a given linear order. At each step the
//! adjacent pair of clusters with the smallest complete-linkage Hamming
//! distance (the largest column-to-column distance across the two) is
//! merged, leftmost pair first on ties, until one cluster remains. Only
//! neighbours merge, so the tree's leaves read left to right in the input
//! order.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{invalid, Result};
use crate::hierarchy::{FeatureHierarchy, NodeRecord};

/// Clusters `0..n` are the leaves by position in the order; merge `k`
/// creates cluster `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkageStep {
    pub left: usize,
    pub right: usize,
    pub distance: usize,
    pub id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linkage {
    /// Column at each leaf position.
    pub order: Vec<usize>,
    pub steps: Vec<LinkageStep>,
}

/// Columns packed as bitsets for fast Hamming distances.
fn packed_columns(x: &Matrix) -> Result<Vec<Vec<u64>>> {
    let words = x.rows().div_ceil(64);
    let mut cols = vec![vec![0u64; words]; x.cols()];
    for i in 0..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            if v == 1.0 {
                cols[j][i / 64] |= 1 << (i % 64);
            } else if v != 0.0 {
                return Err(invalid(format!("entry ({i}, {j}) = {v} is not binary")));
            }
        }
    }
    Ok(cols)
}

fn hamming(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum()
}

fn check_order(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(invalid(format!("order lists {} columns, matrix has {n}", order.len())));
    }
    let mut seen = vec![false; n];
    for &c in order {
        if c >= n || std::mem::replace(&mut seen[c], true) {
            return Err(invalid(format!("order is not a permutation of 0..{n} (at column {c})")));
        }
    }
    Ok(())
}

pub fn constrained_linkage(x: &Matrix, order: &[usize]) -> Result<Linkage> {
    let n = x.cols();
    if n == 0 {
        return Err(invalid("matrix has no columns"));
    }
    check_order(order, n)?;
    let cols = packed_columns(x)?;

    // distances between live clusters, indexed by cluster id
    let total = 2 * n - 1;
    let mut dist = vec![vec![0usize; total]; total];
    for a in 0..n {
        for b in a + 1..n {
            let d = hamming(&cols[order[a]], &cols[order[b]]);
            dist[a][b] = d;
            dist[b][a] = d;
        }
    }

    let mut live: Vec<usize> = (0..n).collect();
    let mut steps = Vec::with_capacity(n - 1);
    while live.len() > 1 {
        let mut best = 0;
        for k in 1..live.len() - 1 {
            if dist[live[k]][live[k + 1]] < dist[live[best]][live[best + 1]] {
                best = k;
            }
        }
        let (a, b) = (live[best], live[best + 1]);
        let id = n + steps.len();
        steps.push(LinkageStep {
            left: a,
            right: b,
            distance: dist[a][b],
            id,
        });
        for &c in &live {
            if c != a && c != b {
                let d = dist[a][c].max(dist[b][c]);
                dist[id][c] = d;
                dist[c][id] = d;
            }
        }
        live[best] = id;
        live.remove(best + 1);
    }
    Ok(Linkage {
        order: order.to_vec(),
        steps,
    })
}

impl Linkage {
    pub fn n_leaves(&self) -> usize {
        self.order.len()
    }

    fn children(&self, id: usize) -> Option<(usize, usize)> {
        let n = self.n_leaves();
        (id >= n).then(|| {
            let s = &self.steps[id - n];
            (s.left, s.right)
        })
    }

    fn root(&self) -> usize {
        2 * self.n_leaves() - 2
    }

    /// Largest column-to-column distance inside each cluster, by id.
    pub fn diameters(&self) -> Vec<usize> {
        let n = self.n_leaves();
        let mut d = vec![0; 2 * n - 1];
        for s in &self.steps {
            d[s.id] = s.distance.max(d[s.left]).max(d[s.right]);
        }
        d
    }

    /// Columns under cluster `id`, in leaf order.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            match self.children(c) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(self.order[c]),
            }
        }
        out
    }

    /// Maximal clusters whose every pair of columns lies within
    /// `threshold` bits, left to right.
    pub fn flat_clusters(&self, threshold: usize) -> Vec<Vec<usize>> {
        let diam = self.diameters();
        let mut out = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(c) = stack.pop() {
            match self.children(c) {
                Some((l, r)) if diam[c] > threshold => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => out.push(self.members(c)),
            }
        }
        out
    }

    /// The merge tree as a hierarchy. Leaves take `names[column]` (default
    /// `x{column}`); groups are `c{k}` for merge k (1-based), the last one
    /// being `root`.
    pub fn to_hierarchy(&self, names: Option<&[String]>) -> Result<FeatureHierarchy> {
        let n = self.n_leaves();
        if let Some(names) = names {
            if names.len() < n {
                return Err(invalid(format!("{} column names for {n} columns", names.len())));
            }
        }
        let name_of = |id: usize| -> String {
            if id < n {
                let col = self.order[id];
                names.map(|v| v[col].clone()).unwrap_or_else(|| format!("x{col}"))
            } else if id == self.root() {
                "root".into()
            } else {
                format!("c{}", id - n + 1)
            }
        };
        let mut records = Vec::with_capacity(2 * n - 1);
        let mut stack: Vec<(usize, Option<String>)> = vec![(self.root(), None)];
        while let Some((id, parent)) = stack.pop() {
            let name = name_of(id);
            match self.children(id) {
                Some((l, r)) => {
                    records.push(NodeRecord::group(name.clone(), parent.as_deref()));
                    stack.push((r, Some(name.clone())));
                    stack.push((l, Some(name)));
                }
                None => records.push(NodeRecord::leaf(name, parent.as_deref(), self.order[id])),
            }
        }
        Ok(FeatureHierarchy::from_records(records)?)
    }
}

/// Clusters the columns of binary `x` along `order` into a full binary
/// hierarchy (n leaves, n − 1 groups).
pub fn constrained_cluster(x: &Matrix, order: &[usize], names: Option<&[String]>) -> Result<FeatureHierarchy> {
    constrained_linkage(x, order)?.to_hierarchy(names)
}
