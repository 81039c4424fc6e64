use std::process::{Command, Output};

use serde_json::Value;

fn combsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_combsr")).args(args).output().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(combsr(&["fit", "--no-such-flag", "x.csv"]).status.code(), Some(2));
    assert_eq!(combsr(&["bench", "NoSuchSet"]).status.code(), Some(2));
    assert_eq!(combsr(&["bench", "Nguyen", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(combsr(&["bench", "Nguyen", "--problems", "Nguyen-99"]).status.code(), Some(2));
    assert_eq!(combsr(&["estimate-mem", "--ops", "NoSuchOps", "--slots", "2", "--layers", "2"]).status.code(), Some(2));
    assert_eq!(combsr(&["fit", "x.csv", "--constants", "maybe"]).status.code(), Some(2));
}

#[test]
fn missing_csv_is_a_runtime_error() {
    let out = combsr(&["fit", "/nonexistent/data.csv", "--max-iters", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "slots = 3\nbogus = true\n").unwrap();
    let out = combsr(&["fit", "x.csv", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constant_target_gives_a_leaf() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    let rows: String = (0..20).map(|i| format!("{},2.5\n", i as f64 / 10.0)).collect();
    std::fs::write(&csv, format!("x,y\n{rows}")).unwrap();
    let out = combsr(&[
        "fit", csv.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--slots", "2", "--layers", "2",
        "--max-iters", "8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("front.json")).unwrap()).unwrap();
    let front = report["front"].as_array().unwrap();
    let leaf = front.iter().find(|e| e["complexity"] == 0).expect("complexity 0 entry");
    assert!(leaf["mse"].as_f64().unwrap() < 1e-12);
    assert_eq!(report["seed"], 0);
}

#[test]
fn estimate_mem_reports_widths() {
    let out = combsr(&["estimate-mem", "--ops", "Arithmetic", "--slots", "2", "--layers", "2", "--samples", "10"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let widths: Vec<&str> = v["per_layer_widths"].as_array().unwrap().iter().map(|w| w.as_str().unwrap()).collect();
    // one unary, two squared, two triangled operators
    assert_eq!(widths, ["2", "16", "800"]);
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = combsr(&[
        "bench", "Nguyen", "--problems", "Nguyen-1", "--trials", "1", "--max-iters", "2", "--slots", "3", "--layers",
        "2", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "problem,trials,successes,rate,mean_seconds");
    assert!(csv.lines().nth(1).unwrap().starts_with("Nguyen-1,1,"));
    assert!(dir.path().join("report.json").exists());
}
