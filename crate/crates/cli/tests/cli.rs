use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_broadlearn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from\n{text}"))
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_seeded_series() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("mg.txt");
    let b = dir.path().join("mg2.txt");
    let out = ok(&["gen", "mackey-glass", "--out", s(&a)]);
    assert_eq!(out.lines().last().unwrap(), s(&a));
    ok(&["gen", "mackey-glass", "--out", s(&b)]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1200);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let c = dir.path().join("noise.txt");
    ok(&["gen", "alpha-stable", "--n", "300", "--seed", "4", "--out", s(&c)]);
    assert_eq!(std::fs::read_to_string(&c).unwrap().lines().count(), 300);
    let d = dir.path().join("sinc.csv");
    ok(&["gen", "sinc", "--n", "40", "--noise", "0.1", "--out", s(&d)]);
    assert_eq!(std::fs::read_to_string(&d).unwrap().lines().count(), 40);
}

#[test]
fn train_is_deterministic_and_reports_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let m1 = dir.path().join("a.json");
    let m2 = dir.path().join("b.json");
    let args = |m: &Path| {
        vec![
            "train".to_string(),
            "--train".into(),
            s(&data("friedman_train.csv")).into(),
            "--test".into(),
            s(&data("friedman_test.csv")).into(),
            "--header".into(),
            "--nf".into(),
            "3".into(),
            "--nw".into(),
            "2".into(),
            "--ne".into(),
            "20".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            s(m).into(),
        ]
    };
    let a1 = args(&m1);
    let out = ok(&a1.iter().map(String::as_str).collect::<Vec<_>>());
    let rmse: f64 = value(&out, "test_rmse").parse().unwrap();
    assert!(rmse.is_finite() && rmse < 5.0);
    let a2 = args(&m2);
    ok(&a2.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
}

#[test]
fn classification_train_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let pred = dir.path().join("pred.csv");
    let out = ok(&[
        "train", "--model", "bls", "--task", "classification",
        "--train", s(&data("blobs_train.csv")), "--test", s(&data("blobs_test.csv")),
        "--header", "--nf", "2", "--nw", "2", "--ne", "20", "--out", s(&model),
    ]);
    let acc: f64 = value(&out, "test_accuracy").parse().unwrap();
    assert!(acc > 80.0, "accuracy {acc}");
    ok(&["predict", "--model-file", s(&model), "--test", s(&data("blobs_test.csv")), "--header", "--out", s(&pred)]);
    let text = std::fs::read_to_string(&pred).unwrap();
    assert_eq!(text.lines().count(), 81);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",neg") || l.ends_with(",pos")));
}

#[test]
fn increments_chain_and_refresh() {
    let dir = tempfile::tempdir().unwrap();
    let bls = dir.path().join("bls.json");
    let cbls = dir.path().join("cbls.json");
    let common = ["--header", "--nf", "3", "--nw", "2", "--ne", "20"];
    let train = data("friedman_train.csv");
    let mut args = vec!["train", "--model", "bls", "--train", s(&train), "--out", s(&bls)];
    args.extend(common);
    ok(&args);
    let out = ok(&[
        "increment", "--model-file", s(&bls), "--mode", "samples",
        "--train", s(&data("friedman_more.csv")), "--test", s(&data("friedman_test.csv")), "--header",
    ]);
    assert_eq!(value(&out, "samples"), "360");
    let out = ok(&["increment", "--model-file", s(&bls), "--mode", "enhancement", "--ne", "5", "--seed", "3"]);
    assert_eq!(value(&out, "width"), "31");
    let out = ok(&["increment", "--model-file", s(&bls), "--mode", "features", "--seed", "4"]);
    assert_eq!(value(&out, "width"), "54");

    let mut args = vec!["train", "--model", "cbls", "--train", s(&train), "--out", s(&cbls)];
    args.extend(common);
    ok(&args);
    let out = ok(&[
        "increment", "--model-file", s(&cbls), "--mode", "samples", "--refresh",
        "--train", s(&data("friedman_more.csv")), "--header",
    ]);
    assert_eq!(value(&out, "model"), "cbls");
    let refused = run(&["increment", "--model-file", s(&bls), "--mode", "enhancement", "--refresh"]);
    assert_eq!(refused.status.code(), Some(1));
}

#[test]
fn bench_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let out = ok(&[
        "bench", "--p-list", "0,0.1,0.2,0.3,0.4", "--nf", "1", "--nw", "1", "--ne", "10",
        "--sigma", "0.25,1", "--runs", "2", "--out", s(&csv),
    ]);
    assert_eq!(value(&out, "levels"), "5");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "p,bls_mean,bls_std,bls_median,cbls_mean,cbls_std,cbls_median");
    assert_eq!(lines.count(), 5);
    assert!(csv.with_extension("json").exists());
}

#[test]
fn singleton_grid_echoes_its_config() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("grid.json");
    let out = ok(&[
        "grid", "--train", s(&data("friedman_train.csv")), "--test", s(&data("friedman_test.csv")), "--header",
        "--nf", "3", "--nw", "2", "--ne", "15", "--sigma", "2", "--runs", "3", "--seed", "5", "--out", s(&json),
    ]);
    assert_eq!(value(&out, "cells"), "1");
    assert_eq!(value(&out, "best_ne"), "15");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["config"]["nf"], serde_json::json!([3]));
    assert_eq!(report["config"]["sigmas"], serde_json::json!([2.0]));
    assert_eq!(report["config"]["runs"], 3);
    assert_eq!(report["best"]["nw"], 2);
    assert_eq!(report["per_run"].as_array().unwrap().len(), 3);
    assert!(json.with_extension("csv").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--train", "/nonexistent/x.csv"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    ok(&[
        "train", "--model", "bls", "--gamma", "0.5", "--train", s(&data("friedman_train.csv")),
        "--header", "--nf", "3", "--nw", "2", "--ne", "10", "--out", s(&model),
    ]);
    let regularized = run(&["increment", "--model-file", s(&model), "--mode", "enhancement", "--ne", "3"]);
    assert_eq!(regularized.status.code(), Some(2));
    let zero = run(&["increment", "--model-file", s(&model), "--mode", "enhancement", "--ne", "0"]);
    assert_eq!(zero.status.code(), Some(1));
    let strict = run(&[
        "train", "--train", s(&data("friedman_train.csv")), "--header", "--nf", "3", "--nw", "2", "--ne", "10",
        "--max-iter", "1", "--eps", "1e-30", "--strict", "--out", s(&model),
    ]);
    assert_eq!(strict.status.code(), Some(2));
}
