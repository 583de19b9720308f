//! End-to-end tests of the binary: parsing, exit codes, artifact shape and
//! byte reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn homoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homoflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(name)).expect("artifact exists");
    serde_json::from_str(&text).expect("valid JSON")
}

#[test]
fn help_lists_subcommands_and_columns() {
    let out = homoflow(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "classify",
        "kernel-info",
        "moments",
        "eigen",
        "simulate",
        "selfsim",
        "stability-check",
        "entropy",
        "sweep",
    ] {
        assert!(text.contains(sub), "help missing {sub}");
    }
    assert!(text.contains("fourth_cumulant,collisions_this_interval"));
}

#[test]
fn minimal_simulate_config_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = homoflow(&[
        "simulate",
        "flow=simple_shear",
        "K=0.06",
        "kernel=isotropic",
        "N=500",
        "seed=1",
        "t_end=1",
        &format!("outdir={}", dir.path().display()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with(
        "t,rho,M11,M22,M33,M12,M13,M23,energy,q1,q2,q3,fourth_cumulant,collisions_this_interval"
    ));
    let manifest = read_json(dir.path(), "manifest.json");
    // defaults materialized into the manifest config
    assert_eq!(manifest["subcommand"], "simulate");
    assert!(manifest["outputs"]["results.csv"]["digest_fnv1a64"].is_string());
}

#[test]
fn missing_shear_parameter_names_the_key() {
    let out = homoflow(&["simulate", "flow=simple_shear", "kernel=isotropic", "N=100"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("flow.K"), "stderr: {err}");
}

#[test]
fn rescaled_mode_rejects_nonzero_homogeneity() {
    let out = homoflow(&[
        "simulate",
        "flow=simple_shear",
        "K=0.1",
        "kernel=isotropic",
        "gamma=0.5",
        "mode=rescaled",
        "N=100",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma"), "stderr: {err}");
}

#[test]
fn unknown_key_is_rejected() {
    let out = homoflow(&["kernel-info", "kernel=isotropic", "wibble=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wibble"));
}

#[test]
fn blowup_flow_maps_to_numeric_exit_code() {
    let out = homoflow(&["classify", "A=-1,0,0,0,0,0,0,0,0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blows up"));
}

#[test]
fn eigen_reports_alpha_and_eigenvector() {
    let dir = tempfile::tempdir().unwrap();
    let out = homoflow(&[
        "eigen",
        "flow=simple_shear",
        "K=0.1",
        "b=1",
        &format!("outdir={}", dir.path().display()),
    ]);
    assert!(out.status.success());
    let summary = read_json(dir.path(), "summary.json");
    let alpha = summary["alpha_bar"].as_f64().unwrap();
    // b (lambda1 - 1) with lambda1 ~ 1 + K^2/6
    assert!((alpha - 0.1_f64.powi(2) / 6.0).abs() < 1e-5);
    assert_eq!(summary["spectrum"].as_array().unwrap().len(), 6);
    assert_eq!(summary["positive_definite"], true);
}

#[test]
fn reruns_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = homoflow(&[
            "simulate",
            "flow=planar_shear",
            "K=0.3",
            "kernel=isotropic",
            "N=400",
            "seed=9",
            "t_end=2",
            "replicas=2",
            &format!("outdir={}", dir.path().display()),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let csv_a = std::fs::read(dir_a.path().join("results.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.path().join("results.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let sum_a = std::fs::read(dir_a.path().join("summary.json")).unwrap();
    let sum_b = std::fs::read(dir_b.path().join("summary.json")).unwrap();
    assert_eq!(sum_a, sum_b);
    // manifests agree on digests (wall clock may differ)
    let man_a = read_json(dir_a.path(), "manifest.json");
    let man_b = read_json(dir_b.path(), "manifest.json");
    assert_eq!(man_a["outputs"], man_b["outputs"]);
}

#[test]
fn config_file_is_merged_and_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    std::fs::write(
        &cfg_path,
        r#"{ "flow": "simple_shear", "K": "0.06", "kernel": "isotropic", "N": "300", "t_end": "1" }"#,
    )
    .unwrap();
    let out = homoflow(&[
        "simulate",
        &format!("config={}", cfg_path.display()),
        "N=200", // override
        &format!("outdir={}", dir.path().display()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = read_json(dir.path(), "manifest.json");
    assert_eq!(manifest["config"]["N"], "200");
    assert_eq!(manifest["config"]["K"], "0.06");
}

#[test]
fn manifest_reproduces_its_run() {
    let dir_a = tempfile::tempdir().unwrap();
    let out = homoflow(&[
        "simulate",
        "flow=simple_shear",
        "K=0.06",
        "kernel=isotropic",
        "N=400",
        "seed=5",
        "t_end=2",
        &format!("outdir={}", dir_a.path().display()),
    ]);
    assert!(out.status.success());
    // rerun from the manifest alone, into a fresh directory
    let dir_b = tempfile::tempdir().unwrap();
    let out = homoflow(&[
        "simulate",
        &format!("config={}", dir_a.path().join("manifest.json").display()),
        &format!("outdir={}", dir_b.path().display()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv_a = std::fs::read(dir_a.path().join("results.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.path().join("results.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn stability_check_small_shear_holds() {
    let dir = tempfile::tempdir().unwrap();
    let out = homoflow(&[
        "stability-check",
        "kernel=isotropic",
        "K=0.02",
        "grid_level=3",
        "starts=4",
        &format!("outdir={}", dir.path().display()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = read_json(dir.path(), "summary.json");
    assert_eq!(summary["holds"], true);
    assert!(summary["criterion_value"].as_f64().unwrap() < 0.0);
}

#[test]
fn selfsim_then_entropy_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = homoflow(&[
        "selfsim",
        "flow=simple_shear",
        "K=0.06",
        "kernel=isotropic",
        "N=5000",
        "seed=2",
        &format!("outdir={}", dir.path().display()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = read_json(dir.path(), "summary.json");
    assert_eq!(summary["converged"], true);
    let csv = dir.path().join("results.csv");
    let first_line = std::fs::read_to_string(&csv).unwrap();
    assert!(first_line.starts_with("xi1,xi2,xi3"));

    let dir2 = tempfile::tempdir().unwrap();
    let out = homoflow(&[
        "entropy",
        &format!("samples={}", csv.display()),
        &format!("outdir={}", dir2.path().display()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = read_json(dir2.path(), "summary.json");
    let c_g = report["c_g"].as_f64().unwrap();
    let c_m = report["c_m"].as_f64().unwrap();
    assert!(c_g <= c_m + 0.05, "C_G {c_g} vs C_M {c_m}");
}

#[test]
fn sweep_emits_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = homoflow(&[
        "sweep",
        "kernel=isotropic",
        "k_values=0.02,0.06",
        "N=2000",
        "t_end=60",
        &format!("outdir={}", dir.path().display()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "K,b,K_over_b,lambda1,beta_analytic,beta_measured,beta_rel_error"
    );
    assert_eq!(lines.count(), 2);
}
