use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn blends(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blends")).args(args).output().expect("binary runs")
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).expect("JSON error line")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn unknown_mode_is_an_argument_error() {
    let out = blends(&["--mode", "fly"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_line(&out);
    assert_eq!(e["error"], "ArgumentError");
    assert_eq!(e["code"], 2);
    assert_eq!(e["stage"], "config");
}

#[test]
fn unknown_flag_is_an_argument_error() {
    let out = blends(&["--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["stage"], "arguments");
}

#[test]
fn missing_correction_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = blends(&["--mode", "blends", "--provider", "file:/nonexistent/records.csv", "--out", dir.path().to_str().unwrap()]);
    let e = error_line(&out);
    assert_eq!(e["error"], "ConfigError");
    assert_eq!(out.status.code(), e["code"].as_i64().map(|c| c as i32));
}

#[test]
fn simulate_writes_sensor_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mode = \"simulate\"\n[trajectory]\nduration = 3.0\n");
    let out_dir = dir.path().join("sim");
    let out = blends(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["epochs"], 301);
    assert_eq!(summary["gnss_fixes"], 31);
    for f in ["imu.csv", "gnss.csv", "truth.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn tfs_run_prints_its_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mode = \"tfs\"\n[trajectory]\nduration = 6.0\n[sensors]\ngnss_mu = [1.5, 0.0, 0.0]\n",
    );
    let out_dir = dir.path().join("tfs");
    let out = blends(&["--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["estimators"]["tfs"]["horizontal_rmse"].as_f64().unwrap() > 1.0);
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk["epochs"], summary["epochs"]);
}
