//! Model-agnostic significance testing of features, feature groups and
//! pairwise interactions.
//!
//! A model's loss is compared, instance by instance, before and after a
//! feature set is perturbed; the paired differences go through a Wilcoxon
//! signed-rank test. Nodes of a feature hierarchy are tested top-down with
//! Benjamini-Hochberg control inside every sibling family, and candidate
//! pairs of discovered nodes are tested for non-additive joint effects.
//! The [`synth`] module generates models with known ground truth and
//! scores discoveries against it.

pub mod cluster;
pub mod data;
mod error;
mod eval;
pub mod hierarchy;
pub mod importance;
pub mod interactions;
pub mod model;
pub mod perturb;
pub mod report;
mod seed;
pub mod stats;
pub mod synth;

pub use data::{Dataset, Matrix};
pub use error::{Error, HierarchyError, Result};
pub use hierarchy::{load_hierarchy, outer_nodes, FeatureHierarchy, NodeId, RejectedSubtree};
pub use importance::{analyze, hierarchical_fdr, test_node, AnalysisConfig, ImportanceReport};
pub use interactions::{
    analyze_interactions, candidate_pairs, test_interaction, test_interaction_loss,
    InteractionCandidate, InteractionConfig, InteractionResult,
};
pub use model::{LossFunction, Model, SyntheticModel, Transfer};
pub use perturb::{PerturbationKind, PerturbationSpec};
pub use stats::{benjamini_hochberg, wilcoxon_signed_rank, PairedDifferences, Tail, TestResult};
