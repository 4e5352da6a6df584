use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nonlocal_core::experiment::ExperimentConfig;
use nonlocal_core::fem::ExampleId;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nonlocal-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonlocal-lab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, c: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, c.to_json()).unwrap();
    path.display().to_string()
}

#[test]
fn spectrum_writes_csv() {
    let dir = scratch("spectrum");
    let out = lab(&["spectrum", "--out", "s"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("s/spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("kind,omega0,t_re,t_im,lambda_re,lambda_im,det_zero_order,residual")
    );
    // five t values, zeros 0 and ±3i in |Im λ| ≤ 3.5 at ω₀ = π/3
    assert_eq!(lines.count(), 15);
}

#[test]
fn invalid_config_exits_3() {
    let dir = scratch("invalid");
    let mut c = ExperimentConfig::default_for(ExampleId::Ex3);
    c.omega0 = 2.0;
    let path = write_config(&dir, &c);
    let out = lab(&["experiment", "ex3", "--config", &path], &dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("omega0"));
}

#[test]
fn example_mismatch_exits_3() {
    let dir = scratch("mismatch");
    let path = write_config(&dir, &ExperimentConfig::default_for(ExampleId::Ex1));
    let out = lab(&["experiment", "ex3", "--config", &path], &dir);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_json_exits_3() {
    let dir = scratch("malformed");
    std::fs::write(dir.join("config.json"), "{ not json").unwrap();
    let out = lab(&["kernel", "--config", "config.json"], &dir);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn report_exit_code_follows_criteria() {
    let dir = scratch("report");
    let pass = r#"{"config_hash":"abc","criteria":[{"id":"C1","name":"x","passed":true,"detail":""}],"rows":[],"spectral":{}}"#;
    let fail = r#"{"config_hash":"abc","criteria":[{"id":"C9","name":"y","passed":false,"detail":""}],"rows":[],"spectral":{}}"#;
    std::fs::write(dir.join("pass.json"), pass).unwrap();
    std::fs::write(dir.join("fail.json"), fail).unwrap();
    assert_eq!(lab(&["report", "pass.json"], &dir).status.code(), Some(0));
    let out = lab(&["report", "pass.json", "fail.json"], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL C9"));
}

#[test]
fn small_ex3_experiment_writes_outputs() {
    let dir = scratch("ex3");
    let mut c = ExperimentConfig::default_for(ExampleId::Ex3);
    c.h_values = vec![0.1];
    c.mms_h_values = vec![];
    let path = write_config(&dir, &c);
    let out = lab(
        &["experiment", "ex3", "--config", &path, "--out", "run", "--cache", "cache", "--svg"],
        &dir,
    );
    // no convergence meshes, so C8 fails and the exit code is 2
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["sweep.csv", "report.json", "kernel_dim.svg", "sigma_min.svg"] {
        assert!(dir.join("run").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run/report.json")).unwrap()).unwrap();
    for key in ["config_hash", "criteria", "rows", "spectral"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    let csv = std::fs::read_to_string(dir.join("run/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let first = std::fs::read(dir.join("run/report.json")).unwrap();
    lab(&["experiment", "ex3", "--config", &path, "--out", "run", "--cache", "cache"], &dir);
    assert_eq!(std::fs::read(dir.join("run/report.json")).unwrap(), first);

    let summary = lab(&["report", "--out", "run"], &dir);
    assert_eq!(summary.status.code(), Some(2));
}
