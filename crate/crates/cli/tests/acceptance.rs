//! CLI acceptance: byte-identical experiment reruns, the documented exit
//! codes, and the mean subcommand's reference output.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_medmean"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmp_file(name: &str, contents: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("medmean_cli_{}_{name}", std::process::id()));
    fs::write(&path, contents).unwrap();
    path
}

/// Criterion 13: rerunning any experiment with one seed is byte-identical.
#[test]
fn c13_experiment_reruns_are_byte_identical() {
    for kind in ["prop21", "cor22", "thm51_l2"] {
        let a = run(&["experiment", "--kind", kind, "--reps", "100", "--seed", "7"]);
        let b = run(&["experiment", "--kind", kind, "--reps", "100", "--seed", "7"]);
        assert!(a.status.success(), "{kind} failed: {:?}", a);
        assert_eq!(a.stdout, b.stdout, "kind {kind} not byte-identical");
        assert!(!a.stdout.is_empty());
    }
    println!("criterion 13 PASS: byte-identical experiment reruns");
}

#[test]
fn csv_output_is_also_deterministic() {
    let args = [
        "experiment",
        "--kind",
        "prop21",
        "--reps",
        "100",
        "--seed",
        "3",
        "--output",
        "csv",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("rep,statistic,bound,violation\n"));
    assert_eq!(text.lines().count(), 101);
}

#[test]
fn mean_of_zeros_prints_zero_with_v3() {
    let path = tmp_file("zeros.csv", &"0\n".repeat(1000));
    let out = run(&["mean", "--delta", "0.05", "--input", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mean"], 0.0);
    assert_eq!(v["v"], 3);
    assert_eq!(v["half_width"], 0.0);
    fs::remove_file(path).ok();
}

#[test]
fn experiment_config_overrides_are_echoed() {
    let path = tmp_file("override.json", r#"{"n": 600, "delta": 0.1}"#);
    let out = run(&[
        "experiment",
        "--kind",
        "prop21",
        "--reps",
        "100",
        "--seed",
        "4",
        "--config",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["n"], 600);
    assert_eq!(v["config"]["delta"], 0.1);
    fs::remove_file(path).ok();
}

#[test]
fn unknown_config_field_is_a_data_error() {
    let path = tmp_file("badfield.json", r#"{"m": 600}"#);
    let out = run(&[
        "experiment",
        "--kind",
        "prop21",
        "--config",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    fs::remove_file(path).ok();
}

#[test]
fn missing_input_file_exits_3() {
    let out = run(&["mean", "--input", "/no/such/file.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_input_exits_3() {
    let path = tmp_file("bad.csv", "1.0\nnot-a-number\n");
    let out = run(&["mean", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    fs::remove_file(path).ok();
}

#[test]
fn usage_error_exits_1() {
    let out = run(&["experiment", "--kind", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn condition_violation_exits_2() {
    // delta so small that V would exceed n/2
    let path = tmp_file("short.csv", &"1.5\n".repeat(10));
    let out = run(&[
        "mean",
        "--delta",
        "0.0000000001",
        "--input",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    fs::remove_file(path).ok();
}

#[test]
fn missing_input_flag_is_usage() {
    let out = run(&["mean"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn lasso_reports_sparse_fit() {
    // data concentrated on [0, 0.25): expect at most the matching cells
    let rows: String = (0..2000)
        .map(|i| format!("{}\n", (i % 250) as f64 / 1000.0))
        .collect();
    let path = tmp_file("lasso.csv", &rows);
    let out = run(&["lasso", "--input", path.to_str().unwrap(), "--delta", "0.1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["converged"], true);
    assert!(v["theta_hat"].is_object());
    fs::remove_file(path).ok();
}

#[test]
fn mselect_trace_has_pairwise_matrix() {
    let rows: String = (0..320)
        .map(|i| format!("{}\n", (i as f64 + 0.5) / 320.0))
        .collect();
    let path = tmp_file("mselect.csv", &rows);
    let out = run(&[
        "mselect",
        "--input",
        path.to_str().unwrap(),
        "--delta",
        "0.5",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ve = v["v"].as_u64().unwrap() as usize;
    assert_eq!(v["pairwise"].as_array().unwrap().len(), ve);
    assert!(v["k_star"].as_u64().unwrap() < ve as u64);
    fs::remove_file(path).ok();
}
