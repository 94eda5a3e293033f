use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cpcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpcm")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let csv = dir.join(name);
    let csv = csv.to_str().unwrap().to_string();
    let mut args = vec!["simulate", "--out", csv.as_str(), "--report", "/dev/null"];
    args.extend_from_slice(extra);
    let out = cpcm(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    csv
}

#[test]
fn simulate_writes_csv_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let out = cpcm(&[
        "simulate",
        "--scenario",
        "pareto-fig2",
        "--alpha-param",
        "2",
        "--n",
        "300",
        "--seed",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let r = report(&out);
    assert_eq!(r["schema"], "cpcm-report/1");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 301);
    assert_eq!(text.lines().next().unwrap(), "x1,x2");
    let sidecar: Value =
        serde_json::from_str(&std::fs::read_to_string(r["result"]["sidecar"].as_str().unwrap()).unwrap()).unwrap();
    assert_eq!(sidecar["ground_truth"], serde_json::json!(["x1->x2"]));
    assert_eq!(sidecar["seed"], 1);
}

#[test]
fn simulate_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let out = cpcm(&["simulate", "--scenario", "gp", "--n", "200", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn discover_reports_verdict_and_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "d.csv", &["--scenario", "exp-robustness", "--n", "300", "--seed", "4"]);
    let models = dir.path().join("models");
    let out = cpcm(&[
        "discover",
        "--input",
        &csv,
        "--x1",
        "x1",
        "--x2",
        "x2",
        "--family1",
        "gamma",
        "--family2",
        "gamma",
        "--alpha",
        "0.05",
        "--seed",
        "7",
        "--n-perm",
        "199",
        "--dump-model",
        models.to_str().unwrap(),
    ]);
    let r = report(&out);
    assert_eq!(r["command"], "discover");
    assert!(r["result"]["verdict"].is_string());
    let dirs = r["result"]["directions"].as_array().unwrap();
    assert_eq!(dirs.len(), 2);
    for d in dirs {
        assert!(d["p_residual"].is_number());
        assert!(d.get("model").is_none());
    }
    assert!(models.join("x1_to_x2.json").exists());
    assert!(models.join("x2_to_x1.json").exists());
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "d.csv", &["--scenario", "gp", "--kind", "LSs", "--n", "200", "--seed", "2"]);
    let args = [
        "discover",
        "--input",
        &csv,
        "--x1",
        "x1",
        "--x2",
        "x2",
        "--family1",
        "gaussian",
        "--family2",
        "gaussian",
        "--seed",
        "3",
        "--n-perm",
        "99",
    ];
    let a = cpcm(&args);
    let b = cpcm(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_family_exits_2_and_lists_valid_ids() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "d.csv", &["--scenario", "gp", "--n", "200", "--seed", "2"]);
    let out = cpcm(&[
        "discover",
        "--input",
        &csv,
        "--x1",
        "x1",
        "--x2",
        "x2",
        "--family1",
        "weibull",
        "--family2",
        "gaussian",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma_fixed_scale") && err.contains("pareto"), "{err}");
}

#[test]
fn missing_values_are_counted_and_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let mut text = String::from("a,b\n");
    for i in 0..60 {
        let b = if i % 20 == 0 { "NA".to_string() } else { format!("{}", 1.0 + i as f64 * 0.1) };
        text.push_str(&format!("{},{b}\n", 1.0 + (i % 7) as f64));
    }
    std::fs::write(&csv, text).unwrap();
    let out = cpcm(&[
        "discover",
        "--input",
        csv.to_str().unwrap(),
        "--x1",
        "a",
        "--x2",
        "b",
        "--family1",
        "gamma",
        "--family2",
        "gamma",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("3 of 60 rows"), "{err}");
}

#[test]
fn missing_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "d.csv", &["--scenario", "gp", "--n", "200", "--seed", "2"]);
    let out = cpcm(&["icp", "--input", &csv, "--target", "nope", "--family", "gaussian"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_count_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_cpcm"))
        .args(["benchmark", "--suite", "gaussian", "--seed", "1"])
        .env("CPCM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn icp_on_simulated_environments() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "e.csv", &["--scenario", "linear-env", "--n", "400", "--seed", "5"]);
    let out = cpcm(&["icp", "--input", &csv, "--target", "y", "--family", "gaussian", "--n-perm", "199"]);
    let r = report(&out);
    assert_eq!(r["config"]["covariates"], serde_json::json!(["x1", "x2", "x3"]));
    assert_eq!(r["result"]["results"].as_array().unwrap().len(), 8);
    assert_eq!(r["result"]["estimate"], serde_json::json!(["x1"]));
}

#[test]
fn search_names_graphs_by_column() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "d.csv", &["--scenario", "exp-robustness", "--n", "200", "--seed", "6"]);
    let out = cpcm(&["search", "--input", &csv, "--families", "gamma", "--n-perm", "99"]);
    let r = report(&out);
    assert!(r["result"]["verdict"].is_null());
    let table = r["result"]["score_table"].as_array().unwrap();
    assert_eq!(table.len(), 3);
    let named: Vec<&Value> = table.iter().flat_map(|e| e["dag"].as_array().unwrap()).collect();
    assert_eq!(named.len(), 2);
    assert!(named.contains(&&Value::from("x1->x2")) && named.contains(&&Value::from("x2->x1")));
}

#[test]
fn small_benchmark_reports_accuracy_rows() {
    let out = cpcm(&[
        "benchmark",
        "--suite",
        "robustness",
        "--rates",
        "linear",
        "--families",
        "gamma_fixed_scale",
        "--pairs",
        "2",
        "--n",
        "150",
        "--seed",
        "3",
        "--n-perm",
        "99",
    ]);
    let r = report(&out);
    let rows = r["result"]["accuracy"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["reps"], 2);
}
