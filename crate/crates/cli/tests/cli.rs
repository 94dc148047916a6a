use std::path::Path;
use std::process::{Command, Output};

fn ftlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftlab")).args(args).output().expect("binary runs")
}

fn run_dirs(out: &Path) -> Vec<std::path::PathBuf> {
    let mut dirs: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    dirs.sort();
    dirs
}

#[test]
fn presets_catalog() {
    let out = ftlab(&["presets"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let sin = json["drifts"].as_array().unwrap().iter().find(|d| d["name"] == "sin").unwrap();
    assert_eq!(sin["sup_norm_b_prime"].as_f64(), Some(1.0));
    let rot = json["drifts"].as_array().unwrap().iter().find(|d| d["name"] == "rotation-2d").unwrap();
    assert_eq!(rot["divergence_free"], true);
}

#[test]
fn invalid_hurst_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ftlab(&["density-envelope", "--set", "density.H=1.2", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("density.H"));
    // the manifest records the failure
    let dirs = run_dirs(tmp.path());
    assert_eq!(dirs.len(), 1);
    let manifest = std::fs::read_to_string(dirs[0].join("manifest.json")).unwrap();
    assert!(manifest.contains("\"kind\": \"config\"") && manifest.contains("density.H"));
}

#[test]
fn unknown_keys_and_experiments_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = ftlab(&["density-envelope", "--set", "density.samples=3", "--out", dir]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("density.samples"));
    assert_eq!(ftlab(&["no-such-experiment"]).status.code(), Some(2));
    assert_eq!(ftlab(&["fbm-validate", "--config", "/nonexistent/config.toml"]).status.code(), Some(2));
}

#[test]
fn config_file_with_overrides_runs_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("fbm.toml");
    std::fs::write(&config, "experiment = \"fbm-validate\"\nseed = 3\n\n[fbm]\nH = [0.5]\nn_steps = 16\nn_paths = 4000\n").unwrap();
    let out_dir = tmp.path().join("runs");
    let out = ftlab(&[
        "fbm-validate",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "fbm.H=[0.7]",
        "--threads",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS gram_within_3se_H0.7"), "{stdout}");
    let dirs = run_dirs(&out_dir);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dirs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 3);
    assert_eq!(manifest["config"]["fbm"]["H"][0].as_f64(), Some(0.7));
    assert_eq!(manifest["passed"], true);
    let csv = std::fs::read_to_string(dirs[0].join("path_H0.7.csv")).unwrap();
    assert!(csv.starts_with("t,value\n"));
}

#[test]
fn mismatched_experiment_in_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.toml");
    std::fs::write(&config, "experiment = \"weak-residual\"\n").unwrap();
    let out = ftlab(&["fbm-validate", "--config", config.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment"));
}
