//! A small synthetic stand-in for a real annotated model, rendered through
//! every output format. Compared byte-for-byte against `tests/golden/`.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use featsig::hierarchy::NodeRecord;
use featsig::interactions::{analyze_interactions, candidate_pairs, InteractionConfig};
use featsig::model::make_synthetic_model;
use featsig::report::{summary_table, to_dot, InteractionReport, InteractionReportConfig};
use featsig::synth::{generate_instances, GroundTruth};
use featsig::{analyze, AnalysisConfig, Dataset, FeatureHierarchy, ImportanceReport, LossFunction, PerturbationSpec, SyntheticModel};

pub struct Documents {
    pub report: ImportanceReport,
    pub interactions: InteractionReport,
    pub files: Vec<(&'static str, String)>,
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Two gene-like groups and a stray feature; one interaction across groups.
/// Noise-free: with six binary features most rows share their perturbed
/// points, so hashed noise would be strongly correlated across rows.
fn stand_in() -> (FeatureHierarchy, SyntheticModel, Dataset) {
    let h = FeatureHierarchy::from_records(vec![
        NodeRecord::group("genome", None),
        NodeRecord::group("UL", Some("genome")),
        NodeRecord::leaf("UL1", Some("UL"), 0),
        NodeRecord::leaf("UL2", Some("UL"), 1),
        NodeRecord::leaf("UL3", Some("UL"), 2),
        NodeRecord::group("US \"short\"", Some("genome")),
        NodeRecord::leaf("US1", Some("US \"short\""), 3),
        NodeRecord::leaf("US2", Some("US \"short\""), 4),
        NodeRecord::leaf("RL", Some("genome"), 5),
    ])
    .unwrap();
    let truth = GroundTruth::from_terms(6, vec![(0, 0.75), (3, 0.5)], vec![((1, 4), 0.875)]).unwrap();
    let data = generate_instances(&truth, 96, 0.5, 12).unwrap();
    let model = make_synthetic_model(truth, 0.0, 7).unwrap();
    (h, model, data)
}

pub fn documents() -> Documents {
    let (h, model, data) = stand_in();
    let mut config = AnalysisConfig::new(LossFunction::SquaredError, PerturbationSpec::permutation(20, 3));
    config.lazy = true;
    let mut report = analyze(&model, &data, &h, &config).unwrap();
    report.config.inputs = BTreeMap::from([("model".to_string(), "stand-in".to_string())]);

    let nodes = report.outer_ids();
    let candidates = candidate_pairs(&nodes, &h).unwrap();
    let ic = InteractionConfig::new(PerturbationSpec::erasure());
    let results = analyze_interactions(&model, &data, &h, &candidates, &ic).unwrap();
    let interactions = InteractionReport::new(
        InteractionReportConfig {
            interaction: ic,
            n_instances: data.n_instances(),
            n_features: data.n_features(),
            candidates: candidates.len(),
            inputs: BTreeMap::new(),
        },
        &h,
        &nodes,
        &results,
    );
    let files = vec![
        ("report.json", report.to_json()),
        ("summary.txt", summary_table(&report)),
        ("report.dot", to_dot(&report, &h).unwrap()),
        ("interactions.json", interactions.to_json()),
    ];
    Documents { report, interactions, files }
}

/// Names of the documents that differ from their golden copy.
pub fn mismatches(docs: &Documents) -> Vec<&'static str> {
    docs.files
        .iter()
        .filter(|(name, text)| std::fs::read_to_string(golden_path(name)).ok().as_deref() != Some(text.as_str()))
        .map(|(name, _)| *name)
        .collect()
}
