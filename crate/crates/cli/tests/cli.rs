use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn model(name: &str) -> String {
    root().join("models").join(format!("{name}.json")).display().to_string()
}

fn cavc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavc"))
        .args(args)
        .env_remove("CAVC_SEED")
        .output()
        .expect("cavc runs")
}

fn cavc_seeded(args: &[&str], seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavc"))
        .args(args)
        .env("CAVC_SEED", seed)
        .output()
        .expect("cavc runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn analyze_example_one() {
    let v = json(&cavc(&["analyze", &model("example_one")]));
    assert_eq!(v["cis1"], false);
    assert_eq!(v["cis2"], false);
    assert_eq!(v["trans"], true);
    assert_eq!(v["intersection_empty"], true);
    assert_eq!(v["config"]["command"], "analyze");
    assert_eq!(v["config"]["model_sha256"].as_str().map(str::len), Some(64));
}

#[test]
fn avc_hulls_intersect() {
    let v = json(&cavc(&["analyze", &model("bsc_avc")]));
    assert_eq!(v["intersection_empty"], false);
    assert_eq!(v["positive_capacity"]["and"], false);
}

#[test]
fn malformed_model_names_the_cell() {
    let bad = root().join("crates/cli/tests/fixtures/row_sum.json");
    let out = cavc(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("kernel[1][1]"), "{}", stderr(&out));
}

#[test]
fn missing_model_is_an_input_error() {
    let out = cavc(&["capacity", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_task_is_an_input_error() {
    let out = cavc(&["capacity", &model("bsc_pair"), "--task", "both"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn capacity_values() {
    let v = json(&cavc(&["capacity", &model("bsc_pair"), "--task", "com"]));
    let c = v["value"].as_f64().unwrap();
    assert!((c - 0.27807).abs() < 1e-4, "{c}");
    let v = json(&cavc(&["capacity", &model("bsc_disjoint_hulls"), "--task", "or"]));
    assert_eq!(v["value"], "inf");
}

#[test]
fn oracle_bracket_contains_value() {
    let v = json(&cavc(&["capacity", &model("bsc_overlapping_hulls"), "--task", "or", "--oracle"]));
    assert_eq!(v["oracle"]["contains_value"], true);
    let (lo, hi) = (v["oracle"]["lower"].as_f64().unwrap(), v["oracle"]["upper"].as_f64().unwrap());
    let c = v["value"].as_f64().unwrap();
    assert!(lo <= c && c <= hi);
}

#[test]
fn numbers_keep_six_significant_digits() {
    let out = cavc(&["capacity", &model("bsc_pair")]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"value\": 0.278072"), "{text}");
}

#[test]
fn attack_demo_reports_witness_and_bound() {
    let v = json(&cavc(&[
        "attack-demo",
        &model("adder_avc"),
        "--attack",
        "cis",
        "--spurious",
        "uniform",
        "--n",
        "4",
    ]));
    assert!(v["error"]["estimate"].as_f64().unwrap() >= 0.25);
    assert_eq!(v["codewords"].as_array().unwrap().len(), 2);
    assert!(v["witnesses"][0]["recomputed_residual"].as_f64().unwrap() <= 1e-9);
    assert!(v["converse"].is_object());
}

#[test]
fn regression_suite_matches_golden_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let suite = root().join("suites/regression.json");
    let out = cavc(&["simulate", suite.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    let summary = json(&out);
    let golden: BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(root().join("suites/regression.golden.json")).unwrap()).unwrap();
    let got: BTreeMap<String, String> = summary["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["name"].as_str().unwrap().to_string(), s["config_sha256"].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(got, golden);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("scenario_id,task,n,M,rate,attack,estimate,ci_low,ci_high,exact,seed\n"));
    assert!(dir.path().join("bsc-com.json").exists());
}

#[test]
fn partial_failure_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let good = model("bsc_pair");
    let suite = serde_json::json!({
        "name": "mixed",
        "scenarios": [
            {"name": "ok", "model": good, "task": "com", "n": 8, "codebook": {"M": 2}, "trials": 20},
            {"name": "missing", "model": "no_such_model.json", "task": "com", "n": 8, "trials": 20}
        ]
    });
    let path = dir.path().join("suite.json");
    std::fs::write(&path, suite.to_string()).unwrap();
    let out = cavc(&["simulate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["completed"], 1);
    assert_eq!(summary["failed"], 1);
    assert!(dir.path().join("mixed-out/ok.csv").exists());
}

#[test]
fn suite_typo_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.json");
    std::fs::write(&path, r#"{"scenarios": [{"name": "a", "model": "m.json", "trails": 5}]}"#).unwrap();
    assert_eq!(cavc(&["simulate", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn verify_quick_passes_and_loose_tolerance_fails() {
    let v = json(&cavc(&["verify", "--quick"]));
    assert_eq!(v["passed"], true);
    let out = cavc(&["verify", "--quick", "--lp-tol", "1e-2"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn seed_from_environment_is_deterministic() {
    let args = ["attack-demo", &model("bsc_pair"), "--attack", "iid", "--n", "6", "-m", "3"];
    let a = cavc_seeded(&args, "11");
    let b = cavc_seeded(&args, "11");
    let c = cavc_seeded(&args, "12");
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let flag = cavc(&["attack-demo", &model("bsc_pair"), "--attack", "iid", "--n", "6", "-m", "3", "--seed", "11"]);
    assert_eq!(flag.stdout, a.stdout);
    let bad = cavc_seeded(&args, "eleven");
    assert_eq!(bad.status.code(), Some(2));
}
