use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mfcg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfcg")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracle_prints_benchmark_solution() {
    let out = mfcg(&["oracle"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["m"].as_f64().unwrap() - 0.2409639).abs() < 1e-6);
    assert!((v["limit_std"].as_f64().unwrap() - 0.3243480).abs() < 1e-6);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mfcg(&["train", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"steps": 4, "batch_size": 8, "hidden": {"actor": 4, "critic": 4, "score": 4},
            "langevin": {"particles": 20, "iterations": 5}}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = mfcg(&["train", "--algo", "batch", "--config", path(&cfg), "--out", path(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("checkpoints/step_4.json").exists());

    let csv = dir.path().join("eval.csv");
    let out = mfcg(&["eval", "--run", path(&run), "--grid=-1:1:0.5", "--out", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["value_sup"].as_f64().is_some(), "{report}");
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,value_learned,value_analytical,control_learned,control_analytical");
    assert_eq!(lines.len(), 1 + 5);
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // A huge Langevin step with a drifting score blows the particles up.
    fs::write(
        &cfg,
        r#"{"steps": 3, "batch_size": 4, "langevin": {"particles": 5, "iterations": 200, "step_size": 1e6},
            "lr": {"actor": 0, "critic": 0, "score_global": 0, "score_local": 0}}"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = mfcg(&["train", "--config", path(&cfg), "--out", path(&run)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "diverged");
    assert_eq!(manifest["diverged_at"], 0);
}
