use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sqrtlasso"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn write_data(path: &Path, zero_y: bool) {
    let mut text = String::from("y,x1,x2,x3\n");
    for i in 0..12 {
        let t = i as f64;
        let (x1, x2, x3) = ((t * 0.7).sin(), (t * 1.3).cos(), t / 12.0 - 0.4);
        let y = if zero_y { 0.0 } else { 2.0 * x1 - x3 + 0.1 * (t * 2.9).sin() };
        text.push_str(&format!("{y},{x1},{x2},{x3}\n"));
    }
    std::fs::write(path, text).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn calibrate_asymptotic_level() {
    let out = run(&["calibrate", "--option", "asymptotic", "--n", "100", "--p", "500", "--alpha", "0.05", "--c", "1.1"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let lambda = v["calibration"]["lambda"].as_f64().unwrap();
    assert!((lambda - 42.797).abs() < 1e-3, "{lambda}");
    assert_eq!(v["config"]["command"]["subcommand"], "calibrate");
}

#[test]
fn zero_response_gives_zero_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let fit = dir.path().join("fit.json");
    write_data(&data, true);
    let out = run(&["fit", "--data", data.to_str().unwrap(), "--penalty-option", "asymptotic", "--output", fit.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&fit);
    for c in v["coefficients"].as_array().unwrap() {
        assert_eq!(c["raw"].as_f64().unwrap(), 0.0);
        assert_eq!(c["normalized"].as_f64().unwrap(), 0.0);
    }
    assert!(v["support"].as_array().unwrap().is_empty());
}

#[test]
fn fit_then_check_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let fit = dir.path().join("fit.json");
    let coef = dir.path().join("coef.csv");
    let conic = dir.path().join("p.txt");
    write_data(&data, false);
    let d = data.to_str().unwrap();
    let out = run(&[
        "fit", "--data", d, "--lambda", "2.0", "--tol", "1e-12", "--coef-out", coef.to_str().unwrap(),
        "--emit-conic", conic.to_str().unwrap(), "--output", fit.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&fit)["lambda"].as_f64().unwrap(), 2.0);
    assert!(std::fs::read_to_string(&conic).unwrap().starts_with("SQRTLASSO-CONIC 1"));
    for scale in ["raw", "normalized"] {
        let out = run(&["check", "--data", d, "--coef", coef.to_str().unwrap(), "--lambda", "2.0", "--coef-scale", scale]);
        assert!(out.status.success());
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["optimal"], true, "{scale}: {v}");
    }
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{k}"));
        let out = run(&[
            "--threads", threads, "simulate", "--reps", "1", "--seed", "7", "--n", "30", "--p", "40", "--s", "3",
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join("summary.json").exists());
        csvs.push(std::fs::read(out_dir.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert!(!csvs[0].is_empty());
}

#[test]
fn diagnose_reports_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_data(&data, false);
    let out = run(&["diagnose", "--data", data.to_str().unwrap(), "--support", "0", "--budget", "200"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["restricted_eigenvalues"]["kappa"].as_f64().unwrap() >= 0.0);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["calibrate", "--option", "exact", "--n", "10", "--p", "5"]).status.code(), Some(1));
    assert_eq!(run(&["fit", "--data", "/nonexistent/file.csv"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,x1\n1,abc\n").unwrap();
    assert_eq!(run(&["fit", "--data", bad.to_str().unwrap()]).status.code(), Some(2));

    let data = dir.path().join("d.csv");
    let fit = dir.path().join("fit.json");
    write_data(&data, false);
    let out = run(&[
        "fit", "--data", data.to_str().unwrap(), "--lambda", "0.5", "--solver", "first-order", "--max-iter", "1",
        "--output", fit.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&fit)["converged"], false);
}
