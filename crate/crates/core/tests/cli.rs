use std::path::Path;
use std::process::Command;

fn mfdpc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfdpc"))
}

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn unknown_subcommand_prints_usage() {
    let out = mfdpc().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfdpc().args(["simulate", "--config", "/nonexistent.toml", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn non_convergence_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("example1.toml")).unwrap().replace("max_iterations = 50", "max_iterations = 1");
    assert!(text.contains("max_iterations = 1"));
    let path = dir.path().join("short.toml");
    std::fs::write(&path, text).unwrap();
    let out = mfdpc().args(["train", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_constant_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    let mut text = String::from("t,n11,n12,n21,n22,u12,u21,q11,q12,q21,q22,clamped_flag\n");
    for k in 0..=60 {
        text.push_str(&format!("{}.0,500.0,500.0,500.0,500.0,0.5,0.5,0.0,0.0,0.0,0.0,0\n", 60 * k));
    }
    std::fs::write(&path, text).unwrap();
    let out = mfdpc().args(["evaluate", "--trace"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(v["tts_veh_s"].as_f64(), Some(2000.0 * 3600.0));
}

#[test]
fn metrics_prints_constants() {
    let out = mfdpc().args(["metrics", "--config", &config("example1.toml")]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("n_crit 3391.9"));
    assert!(text.contains("1538.9"));
}

#[test]
fn reference_respects_dt() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfdpc().args(["reference", "--config", &config("example1.toml"), "--dt", "600", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(Path::new(dir.path()).join("reference.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 18000 / 600 + 1);
}

#[test]
fn compare_report_contents() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfdpc().args(["compare", "--config", &config("example1.toml"), "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(v["candidate"]["controller"], "TPC");
    assert_eq!(v["baseline"]["controller"], "SPC");
    assert_eq!(v["seed"], 7);
    assert_eq!(v["config_hash"].as_str().map(str::len), Some(64));
    let tts = 100.0 * (v["candidate"]["tts_veh_s"].as_f64().unwrap() / v["baseline"]["tts_veh_s"].as_f64().unwrap() - 1.0);
    assert!((tts - v["tts_change_pct"].as_f64().unwrap()).abs() < 1e-9);
    for f in ["trace_tpc.csv", "trace_spc.csv", "weights_model_free.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
