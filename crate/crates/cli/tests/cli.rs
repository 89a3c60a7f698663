use std::fs;
use std::path::Path;
use std::process::Command;

fn run(args: &[&str], threads: Option<&str>) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pinn-spectral"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("PINN_SPECTRAL_THREADS", t),
        None => cmd.env_remove("PINN_SPECTRAL_THREADS"),
    };
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn kernel_check_succeeds_with_a_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"pairs": 2, "width": 10, "n_nets": 100}"#);
    let out = dir.path().join("out");
    let (code, err) = run(&["kernel-check", "--config", &cfg, "--out", out.to_str().unwrap()], Some("1"));
    assert_eq!(code, 0, "{err}");
    assert!(out.join("kernel_check.csv").exists());
    assert!(out.join("kernel_check.csv.meta.json").exists());
    assert!(!out.join("error.json").exists());
}

#[test]
fn unknown_config_key_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"pairs": 2, "colour": "blue"}"#);
    let out = dir.path().join("out");
    let (code, _) = run(&["kernel-check", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code, 2);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "config");
    assert_eq!(report["exit_code"], 2);
}

#[test]
fn missing_config_and_bad_family_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.json");
    let (code, _) = run(&["toy", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code, 2);
    let cfg = write_config(dir.path(), r#"{"families": ["SquaredExponential"]}"#);
    let (code, _) = run(&["kernel-check", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code, 2);
}

#[test]
fn numerical_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"residual_grid": [3, 3], "spectral_grid": [6, 4], "operator_grid": [4, 3],
        "n_bulk": [8], "n_boundary": 4, "test_grid": [3, 3]}"#);
    let out = dir.path().join("out");
    let (code, err) = run(&["heat", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code, 1, "{err}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "grid_too_small");
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"pairs": 1, "width": 10, "n_nets": 100}"#);
    let out = dir.path().join("out");
    let (code, _) = run(&["kernel-check", "--config", &cfg, "--out", out.to_str().unwrap()], Some("zero"));
    assert_eq!(code, 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let (code, _) = run(&["toy"], None);
    assert_eq!(code, 2);
    let (code, _) = run(&["train", "--config", "x", "--out", "y"], None);
    assert_eq!(code, 2);
}
