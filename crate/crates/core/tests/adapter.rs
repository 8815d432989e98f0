use std::io::Write;

use featsig::model::{predict, pre_transfer, ExternalModel, FnModel};
use featsig::{analyze, AnalysisConfig, Dataset, Error, FeatureHierarchy, LossFunction, Matrix, Model, PerturbationSpec, Transfer};
use featsig::hierarchy::NodeRecord;

/// Writes a python adapter that prints `handshake` verbatim and runs `body` per request.
fn script(dir: &tempfile::TempDir, handshake: &str, body: &str) -> String {
    let path = dir.path().join("adapter.py");
    let mut f = std::fs::File::create(&path).unwrap();
    write!(
        f,
        r#"import json, math, sys
print('{handshake}', flush=True)
def g(row):
    return 2.0 * row[0] - row[1] + row[0] * row[1]
for line in sys.stdin:
    req = json.loads(line)
{body}
"#
    )
    .unwrap();
    format!("python3 {}", path.display())
}

const ECHO: &str = r#"    vals = [g(r) for r in req["X"]]
    if req["op"] == "predict":
        vals = [1 / (1 + math.exp(-v)) for v in vals] if TRANSFER == "logistic" else vals
    print(json.dumps({"id": req["id"], "values": vals}), flush=True)"#;

fn echo(transfer: &str) -> String {
    ECHO.replace("TRANSFER", &format!("{transfer:?}"))
}

fn x() -> Matrix {
    Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
}

#[test]
fn identity_adapter_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(&dir, r#"{"arity": 2, "transfer": "identity"}"#, &echo("identity"));
    let m = ExternalModel::spawn(&cmd).unwrap();
    assert_eq!(m.arity(), 2);
    assert_eq!(predict(&m, &x()).unwrap(), vec![0.0, 2.0, 2.0, -1.0]);
    // identity transfer: g is the prediction
    assert_eq!(pre_transfer(&m, &x()).unwrap(), vec![0.0, 2.0, 2.0, -1.0]);
}

#[test]
fn logistic_adapter_serves_g_when_declared() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(&dir, r#"{"arity": 2, "transfer": "logistic", "supports_g": true}"#, &echo("logistic"));
    let m = ExternalModel::spawn(&cmd).unwrap();
    let g = pre_transfer(&m, &x()).unwrap();
    let h = predict(&m, &x()).unwrap();
    for (gv, hv) in g.iter().zip(&h) {
        assert!((Transfer::Logistic.apply(*gv) - hv).abs() < 1e-9);
    }
}

#[test]
fn logistic_adapter_without_g_is_a_capability_error() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(&dir, r#"{"arity": 2, "transfer": "logistic"}"#, &echo("logistic"));
    let m = ExternalModel::spawn(&cmd).unwrap();
    assert!(matches!(pre_transfer(&m, &x()), Err(Error::Capability(_))));
}

#[test]
fn arity_mismatch_is_caught_before_the_request() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(&dir, r#"{"arity": 3, "transfer": "identity"}"#, &echo("identity"));
    let m = ExternalModel::spawn(&cmd).unwrap();
    assert!(matches!(predict(&m, &x()), Err(Error::Arity { expected: 3, found: 2 })));
}

fn protocol_failure(body: &str) -> Error {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(&dir, r#"{"arity": 2, "transfer": "identity"}"#, body);
    let m = ExternalModel::spawn(&cmd).unwrap();
    predict(&m, &x()).unwrap_err()
}

#[test]
fn protocol_violations_name_the_request() {
    let cases = [
        r#"    print("not json", flush=True)"#,
        r#"    print(json.dumps({"id": req["id"] + 1, "values": [0, 0, 0, 0]}), flush=True)"#,
        r#"    print(json.dumps({"id": req["id"], "values": [0, 0]}), flush=True)"#,
        r#"    print(json.dumps({"id": req["id"], "values": [0, None, 0, 0]}), flush=True)"#,
        r#"    sys.exit(1)"#,
    ];
    for body in cases {
        match protocol_failure(body) {
            Error::Protocol { request, .. } => assert_eq!(request, Some(0), "{body}"),
            other => panic!("{body}: {other}"),
        }
    }
}

#[test]
fn bad_handshake() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(&dir, r#"{"transfer": "identity"}"#, &echo("identity"));
    assert!(matches!(ExternalModel::spawn(&cmd), Err(Error::Protocol { request: None, .. })));
}

#[test]
fn analysis_through_adapter_matches_in_process_model() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(&dir, r#"{"arity": 2, "transfer": "identity"}"#, &echo("identity"));
    let external = ExternalModel::spawn(&cmd).unwrap();
    let local = FnModel::regression(2, |r| 2.0 * r[0] - r[1] + r[0] * r[1]);

    let rows: Vec<[f64; 2]> = (0..40).map(|i| [(i % 2) as f64, ((i / 3) % 2) as f64]).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y = rows.iter().map(|r| 2.0 * r[0] - r[1] + r[0] * r[1]).collect();
    let data = Dataset::new(x, y).unwrap();
    let h = FeatureHierarchy::from_records(vec![
        NodeRecord::group("root", None),
        NodeRecord::leaf("a", Some("root"), 0),
        NodeRecord::leaf("b", Some("root"), 1),
    ])
    .unwrap();
    let config = AnalysisConfig::new(LossFunction::SquaredError, PerturbationSpec::permutation(5, 3));
    let a = analyze(&external, &data, &h, &config).unwrap();
    let b = analyze(&local, &data, &h, &config).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}
