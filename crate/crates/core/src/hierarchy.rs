//! Feature-group trees over base-feature columns.
//!
//! Leaves are base features (exactly one column each), internal nodes are
//! groups whose feature set is the union of their children's. A hierarchy
//! is immutable once validated.
//!
//! Two on-disk formats are accepted, both one record per node:
//!
//! * JSON: `[{"name": "root"}, {"name": "x0", "parent": "root", "features": [0]}, ...]`
//! * CSV with header `name,parent,features`; `parent` is empty for the root
//!   and `features` is a `;`-joined index list.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, HierarchyError, Result};
use crate::stats::TestResult;

/// Position of a node in its hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One node as written in a hierarchy document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<usize>,
}

impl NodeRecord {
    pub fn group(name: impl Into<String>, parent: Option<&str>) -> Self {
        NodeRecord {
            name: name.into(),
            parent: parent.map(str::to_string),
            features: Vec::new(),
        }
    }

    pub fn leaf(name: impl Into<String>, parent: Option<&str>, feature: usize) -> Self {
        NodeRecord {
            name: name.into(),
            parent: parent.map(str::to_string),
            features: vec![feature],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyNode {
    pub id: NodeId,
    pub name: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Sorted column indices covered by this node.
    pub features: Vec<usize>,
}

impl HierarchyNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureHierarchy {
    nodes: Vec<HierarchyNode>,
    root: NodeId,
}

impl FeatureHierarchy {
    /// Validates records and materializes every node's feature set. Node ids
    /// follow record order.
    pub fn from_records(records: Vec<NodeRecord>) -> std::result::Result<Self, HierarchyError> {
        if records.is_empty() {
            return Err(HierarchyError::Empty);
        }
        let mut by_name: HashMap<&str, usize> = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_name.insert(r.name.as_str(), i).is_some() {
                return Err(HierarchyError::DuplicateName {
                    name: r.name.clone(),
                });
            }
        }

        let mut parents = Vec::with_capacity(records.len());
        for r in &records {
            let parent = match &r.parent {
                None => None,
                Some(p) if *p == r.name => {
                    return Err(HierarchyError::Cycle {
                        node: r.name.clone(),
                    })
                }
                Some(p) => match by_name.get(p.as_str()) {
                    Some(&i) => Some(i),
                    None => {
                        return Err(HierarchyError::UnknownParent {
                            node: r.name.clone(),
                            parent: p.clone(),
                        })
                    }
                },
            };
            parents.push(parent);
        }

        // 0 = unvisited, 1 = on current path, 2 = reaches a root
        let mut state = vec![0u8; records.len()];
        for start in 0..records.len() {
            let mut path = Vec::new();
            let mut cur = Some(start);
            while let Some(i) = cur {
                match state[i] {
                    2 => break,
                    1 => {
                        return Err(HierarchyError::Cycle {
                            node: records[i].name.clone(),
                        })
                    }
                    _ => {
                        state[i] = 1;
                        path.push(i);
                        cur = parents[i];
                    }
                }
            }
            for i in path {
                state[i] = 2;
            }
        }

        let roots: Vec<usize> = (0..records.len()).filter(|&i| parents[i].is_none()).collect();
        let root = match roots.as_slice() {
            [] => return Err(HierarchyError::NoRoot),
            [r] => *r,
            many => {
                return Err(HierarchyError::MultipleRoots {
                    nodes: many.iter().map(|&i| records[i].name.clone()).collect(),
                })
            }
        };

        let mut children = vec![Vec::new(); records.len()];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(NodeId(i));
            }
        }

        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if children[i].is_empty() {
                if r.features.len() != 1 {
                    return Err(HierarchyError::LeafFeatureCount {
                        node: r.name.clone(),
                        found: r.features.len(),
                    });
                }
                if owner.insert(r.features[0], i).is_some() {
                    return Err(HierarchyError::DuplicateFeature {
                        node: r.name.clone(),
                        feature: r.features[0],
                    });
                }
            } else if !r.features.is_empty() {
                return Err(HierarchyError::InternalFeatures {
                    node: r.name.clone(),
                });
            }
        }

        let nodes: Vec<HierarchyNode> = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| HierarchyNode {
                id: NodeId(i),
                name: r.name,
                parent: parents[i].map(NodeId),
                children: std::mem::take(&mut children[i]),
                features: r.features,
            })
            .collect();

        let mut h = FeatureHierarchy {
            nodes,
            root: NodeId(root),
        };
        // reversed preorder visits children before parents
        for id in h.preorder().into_iter().rev() {
            if !h.nodes[id.0].is_leaf() {
                let mut feats: Vec<usize> = h.nodes[id.0]
                    .children
                    .iter()
                    .flat_map(|c| h.nodes[c.0].features.iter().copied())
                    .collect();
                feats.sort_unstable();
                h.nodes[id.0].features = feats;
            }
        }
        Ok(h)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[HierarchyNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &HierarchyNode {
        &self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&HierarchyNode> {
        self.nodes.get(id.0)
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn features(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].features
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id.0].is_leaf()
    }

    pub fn depth(&self, id: NodeId) -> usize {
        let mut d = 0;
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            d += 1;
            cur = self.parent(p);
        }
        d
    }

    /// Root-first depth-first order, children in declaration order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id.0].children.iter().rev().copied());
        }
        out
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|&id| self.is_leaf(id))
            .collect()
    }

    /// Leaf holding base feature `feature`, if any.
    pub fn leaf_for_feature(&self, feature: usize) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.is_leaf() && n.features[0] == feature)
            .map(|n| n.id)
    }

    pub fn is_ancestor(&self, ancestor: NodeId, of: NodeId) -> bool {
        let mut cur = self.parent(of);
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parent(p);
        }
        false
    }

    /// Columns in `0..n_features` not covered by any leaf.
    pub fn unreferenced_features(&self, n_features: usize) -> Vec<usize> {
        let covered = self.features(self.root);
        (0..n_features)
            .filter(|f| covered.binary_search(f).is_err())
            .collect()
    }

    pub fn check_arity(&self, n_features: usize) -> std::result::Result<(), HierarchyError> {
        for n in self.nodes.iter().filter(|n| n.is_leaf()) {
            if n.features[0] >= n_features {
                return Err(HierarchyError::FeatureOutOfRange {
                    node: n.name.clone(),
                    feature: n.features[0],
                    n_features,
                });
            }
        }
        Ok(())
    }

    /// Checks that every internal node's features equal the union of its
    /// children's.
    pub fn unions_consistent(&self) -> bool {
        self.nodes.iter().filter(|n| !n.is_leaf()).all(|n| {
            let mut u: Vec<usize> = n
                .children
                .iter()
                .flat_map(|c| self.features(*c).iter().copied())
                .collect();
            u.sort_unstable();
            u == n.features
        })
    }

    pub fn to_records(&self) -> Vec<NodeRecord> {
        self.nodes
            .iter()
            .map(|n| NodeRecord {
                name: n.name.clone(),
                parent: n.parent.map(|p| self.nodes[p.0].name.clone()),
                features: if n.is_leaf() {
                    n.features.clone()
                } else {
                    Vec::new()
                },
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_records())
            .expect("hierarchy records always serialize");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,parent,features\n");
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in self.to_records() {
            let feats = r
                .features
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([r.name.as_str(), r.parent.as_deref().unwrap_or(""), &feats])
                .expect("in-memory csv write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierarchyFormat {
    Json,
    Csv,
}

impl HierarchyFormat {
    /// JSON when the document starts with `[` or `{`, CSV otherwise.
    pub fn sniff(document: &str) -> Self {
        match document.trim_start().chars().next() {
            Some('[') | Some('{') => HierarchyFormat::Json,
            _ => HierarchyFormat::Csv,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonDocument {
    Nodes(Vec<NodeRecord>),
    Wrapped { nodes: Vec<NodeRecord> },
}

/// Parses and validates a hierarchy document in either format.
pub fn load_hierarchy(document: &str) -> Result<FeatureHierarchy> {
    let records = match HierarchyFormat::sniff(document) {
        HierarchyFormat::Json => match serde_json::from_str::<JsonDocument>(document)? {
            JsonDocument::Nodes(n) | JsonDocument::Wrapped { nodes: n } => n,
        },
        HierarchyFormat::Csv => parse_csv_records(document)?,
    };
    Ok(FeatureHierarchy::from_records(records)?)
}

fn parse_csv_records(document: &str) -> Result<Vec<NodeRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(document.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid(format!("hierarchy csv lacks a `{name}` column")))
    };
    let (ni, pi, fi) = (col("name")?, col("parent")?, col("features")?);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let name = row.get(ni).unwrap_or("").to_string();
        let parent = row.get(pi).filter(|p| !p.is_empty()).map(str::to_string);
        let features = row
            .get(fi)
            .unwrap_or("")
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| invalid(format!("node `{name}`: bad feature index `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(NodeRecord {
            name,
            parent,
            features,
        });
    }
    Ok(out)
}

/// Nodes rejected by hierarchical FDR control, with their test results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RejectedSubtree {
    nodes: BTreeMap<NodeId, TestResult>,
}

impl RejectedSubtree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: NodeId, result: TestResult) {
        self.nodes.insert(id, result);
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn result(&self, id: NodeId) -> Option<&TestResult> {
        self.nodes.get(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Rejected ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn is_parent_closed(&self, h: &FeatureHierarchy) -> bool {
        self.ids()
            .all(|id| h.parent(id).map_or(true, |p| self.contains(p)))
    }

    /// Rejected node with no rejected child.
    pub fn is_outer(&self, h: &FeatureHierarchy, id: NodeId) -> bool {
        self.contains(id) && !h.children(id).iter().any(|c| self.contains(*c))
    }
}

/// Rejected nodes with no rejected children, largest effect first (ties by
/// id).
pub fn outer_nodes(h: &FeatureHierarchy, rejected: &RejectedSubtree) -> Result<Vec<NodeId>> {
    if let Some(id) = rejected.ids().find(|id| id.0 >= h.len()) {
        return Err(invalid(format!("rejected node {id} is not in the hierarchy")));
    }
    if !rejected.is_parent_closed(h) {
        return Err(invalid("rejected set is not closed under parent"));
    }
    let mut outer: Vec<NodeId> = rejected.ids().filter(|&id| rejected.is_outer(h, id)).collect();
    outer.sort_by(|a, b| {
        let ea = rejected.result(*a).map_or(0.0, |r| r.effect_size);
        let eb = rejected.result(*b).map_or(0.0, |r| r.effect_size);
        eb.total_cmp(&ea).then(a.cmp(b))
    });
    Ok(outer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_leaf() -> FeatureHierarchy {
        FeatureHierarchy::from_records(vec![
            NodeRecord::group("root", None),
            NodeRecord::leaf("a", Some("root"), 0),
            NodeRecord::leaf("b", Some("root"), 1),
        ])
        .unwrap()
    }

    fn balanced4() -> FeatureHierarchy {
        FeatureHierarchy::from_records(vec![
            NodeRecord::group("root", None),
            NodeRecord::group("l", Some("root")),
            NodeRecord::group("r", Some("root")),
            NodeRecord::leaf("x0", Some("l"), 0),
            NodeRecord::leaf("x1", Some("l"), 1),
            NodeRecord::leaf("x2", Some("r"), 2),
            NodeRecord::leaf("x3", Some("r"), 3),
        ])
        .unwrap()
    }

    fn tr(effect: f64) -> TestResult {
        TestResult {
            statistic: 0.0,
            p_value: 0.01,
            n_effective: 1,
            effect_size: effect,
        }
    }

    #[test]
    fn root_is_union_of_leaves() {
        let h = two_leaf();
        assert_eq!(h.features(h.root()), &[0, 1]);
        assert!(h.unions_consistent());
    }

    #[test]
    fn balanced_tree_counts() {
        let h = balanced4();
        assert_eq!(h.len(), 7);
        assert_eq!(h.features(h.root()), &[0, 1, 2, 3]);
        assert_eq!(h.leaves().len(), 4);
        assert!(h.leaves().iter().all(|&l| h.depth(l) == 2));
    }

    #[test]
    fn self_parent_is_cycle() {
        let err = FeatureHierarchy::from_records(vec![NodeRecord {
            name: "a".into(),
            parent: Some("a".into()),
            features: vec![0],
        }])
        .unwrap_err();
        assert!(matches!(err, HierarchyError::Cycle { ref node } if node == "a"));
        assert!(err.to_string().contains("cycle"));
    }

    #[test]
    fn longer_cycle_detected() {
        let err = FeatureHierarchy::from_records(vec![
            NodeRecord::group("root", None),
            NodeRecord::group("a", Some("b")),
            NodeRecord::group("b", Some("a")),
        ])
        .unwrap_err();
        assert!(matches!(err, HierarchyError::Cycle { .. }));
    }

    #[test]
    fn structural_errors() {
        let multi = FeatureHierarchy::from_records(vec![
            NodeRecord::leaf("a", None, 0),
            NodeRecord::leaf("b", None, 1),
        ]);
        assert!(matches!(multi, Err(HierarchyError::MultipleRoots { .. })));

        let unknown = FeatureHierarchy::from_records(vec![
            NodeRecord::group("root", None),
            NodeRecord::leaf("a", Some("nope"), 0),
        ]);
        assert!(matches!(
            unknown,
            Err(HierarchyError::UnknownParent { ref node, .. }) if node == "a"
        ));

        let dup = FeatureHierarchy::from_records(vec![
            NodeRecord::group("root", None),
            NodeRecord::leaf("a", Some("root"), 0),
            NodeRecord::leaf("b", Some("root"), 0),
        ]);
        assert!(matches!(
            dup,
            Err(HierarchyError::DuplicateFeature { feature: 0, .. })
        ));

        let dup_name = FeatureHierarchy::from_records(vec![
            NodeRecord::group("root", None),
            NodeRecord::leaf("root", Some("root"), 0),
        ]);
        assert!(matches!(dup_name, Err(HierarchyError::DuplicateName { .. })));

        let bare_leaf = FeatureHierarchy::from_records(vec![
            NodeRecord::group("root", None),
            NodeRecord::group("a", Some("root")),
        ]);
        assert!(matches!(
            bare_leaf,
            Err(HierarchyError::LeafFeatureCount { found: 0, .. })
        ));
    }

    #[test]
    fn json_and_csv_load_same_tree() {
        let h = balanced4();
        assert_eq!(load_hierarchy(&h.to_json()).unwrap(), h);
        assert_eq!(load_hierarchy(&h.to_csv()).unwrap(), h);
        let wrapped = format!("{{\"nodes\": {}}}", h.to_json());
        assert_eq!(load_hierarchy(&wrapped).unwrap(), h);
    }

    #[test]
    fn csv_parent_may_precede_or_follow() {
        let doc = "name,parent,features\nx0,root,0\nroot,,\nx1,root,1\n";
        let h = load_hierarchy(doc).unwrap();
        assert_eq!(h.node(h.root()).name, "root");
        assert_eq!(h.features(h.root()), &[0, 1]);
    }

    #[test]
    fn unreferenced_and_arity() {
        let h = two_leaf();
        assert_eq!(h.unreferenced_features(4), vec![2, 3]);
        assert!(h.check_arity(2).is_ok());
        assert!(matches!(
            h.check_arity(1),
            Err(HierarchyError::FeatureOutOfRange { feature: 1, .. })
        ));
    }

    #[test]
    fn outer_of_root_only() {
        let h = two_leaf();
        let mut r = RejectedSubtree::new();
        r.insert(h.root(), tr(1.0));
        assert_eq!(outer_nodes(&h, &r).unwrap(), vec![h.root()]);
    }

    #[test]
    fn outer_is_deepest_rejected() {
        let h = two_leaf();
        let mut r = RejectedSubtree::new();
        r.insert(h.root(), tr(1.0));
        r.insert(NodeId(1), tr(0.5));
        assert_eq!(outer_nodes(&h, &r).unwrap(), vec![NodeId(1)]);
        assert!(outer_nodes(&h, &RejectedSubtree::new()).unwrap().is_empty());
    }

    #[test]
    fn outer_sorted_by_effect() {
        let h = balanced4();
        let mut r = RejectedSubtree::new();
        for (id, e) in [(0, 3.0), (1, 1.0), (2, 2.0), (3, 0.2), (6, 0.9)] {
            r.insert(NodeId(id), tr(e));
        }
        // outer: x0 (3, 0.2), r's child x3 (6, 0.9); l (1) has x0 rejected
        assert_eq!(outer_nodes(&h, &r).unwrap(), vec![NodeId(6), NodeId(3)]);
    }

    #[test]
    fn outer_requires_parent_closure() {
        let h = two_leaf();
        let mut r = RejectedSubtree::new();
        r.insert(NodeId(1), tr(1.0));
        assert!(outer_nodes(&h, &r).is_err());
    }
}
