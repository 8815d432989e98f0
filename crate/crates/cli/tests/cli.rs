use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn featsig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featsig")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = featsig(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small generated problem: truth.json, data.csv and hierarchy.json.
fn generated(dir: &Path) -> PathBuf {
    let out = dir.join("gen");
    ok(&[
        "generate",
        "--n-features", "24",
        "--n-linear", "6",
        "--n-interactions", "4",
        "--m", "300",
        "--seed", "3",
        "--out-dir", s(&out),
    ]);
    out
}

fn analyze(gen: &Path, out: &Path, extra: &[&str]) -> String {
    let (data, hierarchy, truth) = (gen.join("data.csv"), gen.join("hierarchy.json"), gen.join("truth.json"));
    let mut args = vec![
        "analyze",
        "--data", s(&data),
        "--hierarchy", s(&hierarchy),
        "--truth", s(&truth),
        "--num-permutations", "4",
        "--seed", "11",
        "--out", s(out),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn missing_hierarchy_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let gen = generated(dir.path());
    let missing = dir.path().join("nope.json");
    let out = featsig(&[
        "analyze",
        "--data", s(&gen.join("data.csv")),
        "--hierarchy", s(&missing),
        "--truth", s(&gen.join("truth.json")),
        "--out", s(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn bad_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let gen = generated(dir.path());
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,x\n").unwrap();
    let out = featsig(&[
        "analyze",
        "--data", s(&bad),
        "--hierarchy", s(&gen.join("hierarchy.json")),
        "--truth", s(&gen.join("truth.json")),
        "--out", s(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn analyze_is_deterministic_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let gen = generated(dir.path());
    let (a, b, c) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("c.json"));
    let dot = dir.path().join("a.dot");
    let table = analyze(&gen, &a, &["--workers", "1", "--dot", s(&dot)]);
    analyze(&gen, &b, &["--workers", "1"]);
    analyze(&gen, &c, &["--workers", "8"]);
    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
    assert!(table.contains("nodes rejected"));
    assert!(read(&dot).starts_with("digraph"));

    let report: serde_json::Value = serde_json::from_str(&read(&a)).unwrap();
    assert!(report["config"]["inputs"]["model"].as_str().unwrap().starts_with("synthetic"));
    assert!(!report["outer_nodes"].as_array().unwrap().is_empty());
}

#[test]
fn interact_from_report_and_from_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let gen = generated(dir.path());
    let report = dir.path().join("r.json");
    analyze(&gen, &report, &[]);
    let (data, hierarchy, truth) = (gen.join("data.csv"), gen.join("hierarchy.json"), gen.join("truth.json"));
    let common = [
        "--data", s(&data),
        "--hierarchy", s(&hierarchy),
        "--truth", s(&truth),
        "--perturbation", "erasure",
    ];
    let run = |extra: &[&str], out: &Path| {
        let mut args = vec!["interact"];
        args.extend_from_slice(&common);
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", s(out)]);
        ok(&args);
        serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(out).unwrap()).unwrap()
    };

    let from_report = run(&["--report", s(&report)], &dir.path().join("i1.json"));
    let outer = serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(&report).unwrap()).unwrap()
        ["outer_nodes"]
        .as_array()
        .unwrap()
        .len();
    assert_eq!(from_report["results"].as_array().unwrap().len(), outer * (outer - 1) / 2);

    let three = run(&["--nodes", "x0,x1,x2"], &dir.path().join("i3.json"));
    assert_eq!(three["results"].as_array().unwrap().len(), 3);

    let one = run(&["--nodes", "x0"], &dir.path().join("i0.json"));
    assert!(one["results"].as_array().unwrap().is_empty());

    let unknown = dir.path().join("x.json");
    let mut args = vec!["interact"];
    args.extend_from_slice(&common);
    args.extend_from_slice(&["--nodes", "nope", "--out", s(&unknown)]);
    let out = featsig(&args);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn synth_sweep_produces_one_row_per_grid_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let text = ok(&[
        "synth",
        "--vary", "m",
        "--grid", "32,128",
        "--replicates", "5",
        "--n-features", "40",
        "--n-linear", "6",
        "--n-interactions", "4",
        "--out", s(&out),
    ]);
    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["m"], 32);
    assert_eq!(rows[1]["m"], 128);
    assert!(text.lines().next().unwrap().starts_with('#'));
}

#[test]
fn cluster_and_export_dot() {
    let dir = tempfile::tempdir().unwrap();
    let gen = generated(dir.path());
    let tree = dir.path().join("tree.csv");
    let stdout = ok(&[
        "cluster",
        "--data", s(&gen.join("data.csv")),
        "--threshold", "100",
        "--out", s(&tree),
    ]);
    assert!(stdout.starts_with("24 leaves, 47 nodes"));
    assert_eq!(std::fs::read_to_string(&tree).unwrap().lines().count(), 48);

    let report = dir.path().join("r.json");
    analyze(&gen, &report, &[]);
    let dot = dir.path().join("r.dot");
    ok(&[
        "export-dot",
        "--report", s(&report),
        "--hierarchy", s(&gen.join("hierarchy.json")),
        "--out", s(&dot),
    ]);
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));
}

#[test]
fn model_source_is_required() {
    let out = featsig(&["analyze", "--data", "d.csv", "--hierarchy", "h.json", "--out", "r.json"]);
    assert!(!out.status.success());
}
