use std::fs;
use std::path::Path;

use pinn_spectral::experiments::{
    parse_config, run_heat, run_kernel_check, run_spectral, run_toy, write_error_report, HeatExperimentConfig,
    KernelCheckConfig, SpectralExperimentConfig, ToyExperimentConfig,
};
use pinn_spectral::{Error, VERSION};
use serde_json::Value;

fn small_toy() -> ToyExperimentConfig {
    parse_config(
        r#"{"n_bulk": [32, 64], "inset_n_bulk": [128, 256, 512], "x_star": {"lo": 0.0, "hi": 3.0, "n": 7},
            "grid_length": 40.0, "grid_points": 201, "x_max": 64.0}"#,
    )
    .unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_sidecars(dir: &Path, files: &[&str], experiment: &str) {
    for f in files {
        assert!(dir.join(f).exists(), "{f} missing");
        let meta = read_json(&dir.join(format!("{f}.meta.json")));
        assert_eq!(meta["version"], VERSION);
        assert_eq!(meta["experiment"], experiment);
        assert!(meta["config"].is_object());
    }
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn toy_run_writes_curves_inset_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_toy(&small_toy(), dir.path()).unwrap();
    assert_sidecars(dir.path(), &["toy_n32.csv", "toy_n64.csv", "inset.csv", "summary.json"], "toy");
    let (header, rows) = csv_rows(&dir.path().join("toy_n64.csv"));
    assert_eq!(header, ["x_star", "f_gpr", "f_nie_analytic", "f_nie_grid"]);
    assert_eq!(rows.len(), 7);
    for cell in &rows[3] {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{cell}");
        cell.parse::<f64>().unwrap();
    }
    let s = &report.summary;
    assert!(s["max_gap"]["64"].is_number());
    assert!(s["powerlaw"]["r2"].is_number());
    assert_eq!(s["inset"]["n_bulk"].as_array().unwrap().len(), 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_toy();
    run_toy(&cfg, a.path()).unwrap();
    run_toy(&cfg, b.path()).unwrap();
    for name in ["toy_n32.csv", "toy_n64.csv", "inset.csv", "summary.json", "summary.json.meta.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn heat_run_writes_monotone_cumulative_curves() {
    let cfg: HeatExperimentConfig = parse_config(
        r#"{"residual_grid": [41, 21], "spectral_grid": [16, 8], "operator_grid": [8, 6], "n_bulk": [16, 32],
            "n_boundary": 8, "test_grid": [9, 5], "eta_ladder": [0.0, 1.0, 100.0]}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_heat(&cfg, dir.path()).unwrap();
    let files = ["residual.csv", "gpr_error.csv", "qn.csv", "ak_K_u_a0.csv", "ak_LKhatL_phihat_a1.csv", "summary.json"];
    assert_sidecars(dir.path(), &files, "heat");
    for name in ["ak_K_u_a0.csv", "ak_K_u_a1.csv", "ak_LKhatL_phihat_a0.csv", "ak_LKhatL_phihat_a1.csv"] {
        let (_, rows) = csv_rows(&dir.path().join(name));
        let a: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert!(a.windows(2).all(|w| w[1] >= w[0]), "{name}");
    }
    let (_, gpr) = csv_rows(&dir.path().join("gpr_error.csv"));
    assert_eq!(gpr.len(), 4);
    let widths = report.summary["widths"].as_array().unwrap();
    assert_eq!(widths[0]["qn"][0], 1.0);
}

#[test]
fn spectral_run_on_a_user_grid() {
    let cfg: SpectralExperimentConfig = parse_config(
        r#"{"kernel": {"family": "CosineFeature", "l": 1.0},
            "operator": [{"orders": [1], "coeff": "const:1.0"}],
            "axes": [{"lo": 0.0, "hi": 6.0, "n": 25}], "faces": [{"axis": 0, "end": "lo"}],
            "source": "const:0.5", "boundary": "const:2.5", "eta_boundary": 10.0, "eta_bulk": [1.0, 10.0],
            "target": "const:1.0"}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_spectral(&cfg, dir.path()).unwrap();
    assert_sidecars(dir.path(), &["eigenvalues.csv", "ak_phihat.csv", "ak_K_target.csv", "qn.json"], "spectral");
    let q = report.summary["qn"].as_array().unwrap();
    assert!(q[1]["q_n"].as_f64().unwrap() <= q[0]["q_n"].as_f64().unwrap());
}

#[test]
fn kernel_check_reports_seed_and_sample_counts() {
    let cfg: KernelCheckConfig = parse_config(r#"{"pairs": 3, "width": 20, "n_nets": 100, "seed": 9}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_kernel_check(&cfg, dir.path()).unwrap();
    assert_sidecars(dir.path(), &["kernel_check.csv", "summary.json"], "kernel-check");
    let (header, rows) = csv_rows(&dir.path().join("kernel_check.csv"));
    assert_eq!(header.last().unwrap(), "seed");
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[7] == "2000" && r[8] == "9"));
    assert_eq!(report.summary["seed"], 9);
}

#[test]
fn invalid_configs_are_config_errors() {
    assert!(matches!(parse_config::<ToyExperimentConfig>(r#"{"n_bulk": "many"}"#), Err(Error::Config(_))));
    assert!(matches!(parse_config::<SpectralExperimentConfig>(r#"{"kernel": {"family": "CosineFeature", "l": 1.0}}"#), Err(Error::Config(_))));
    let cfg: ToyExperimentConfig = parse_config(r#"{"n_bulk": []}"#).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(run_toy(&cfg, dir.path()), Err(Error::Config(_))));
}

#[test]
fn error_report_is_structured() {
    let dir = tempfile::tempdir().unwrap();
    let err = Error::GridTooSmall { points: 3, required: 6 };
    let path = write_error_report(dir.path(), "heat", &err).unwrap();
    let v = read_json(&path);
    assert_eq!(v["exit_code"], 1);
    assert_eq!(v["kind"], "grid_too_small");
    assert_eq!(v["experiment"], "heat");
}
