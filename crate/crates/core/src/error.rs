use std::io;

use thiserror::Error;

/// Structural problems found while validating a feature hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HierarchyError {
    #[error("hierarchy is empty")]
    Empty,
    #[error("cycle through node `{node}`")]
    Cycle { node: String },
    #[error("multiple roots: {}", .nodes.join(", "))]
    MultipleRoots { nodes: Vec<String> },
    #[error("no root node (every node names a parent)")]
    NoRoot,
    #[error("node `{node}` names unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("duplicate node name `{name}`")]
    DuplicateName { name: String },
    #[error("feature {feature} appears in more than one leaf (second: `{node}`)")]
    DuplicateFeature { node: String, feature: usize },
    #[error("leaf `{node}` must list exactly one feature, found {found}")]
    LeafFeatureCount { node: String, found: usize },
    #[error("internal node `{node}` lists features; only leaves may")]
    InternalFeatures { node: String },
    #[error("leaf `{node}` references feature {feature}, but data has {n_features} columns")]
    FeatureOutOfRange {
        node: String,
        feature: usize,
        n_features: usize,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid hierarchy: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error("data error: {0}")]
    Data(String),
    #[error("model capability: {0}")]
    Capability(String),
    #[error("model arity mismatch: model expects {expected} columns, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("adapter protocol error (request {}): {message}", request_label(.request))]
    Protocol { request: Option<u64>, message: String },
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn request_label(request: &Option<u64>) -> String {
    match request {
        Some(id) => id.to_string(),
        None => "handshake".to_string(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
