use std::fs;
use std::process::Command;

use ldp_harness::config::TataruSuiteParams;
use ldp_harness::{Experiment, ExperimentConfig};

fn ldp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ldp"))
}

fn small_tataru(seed: u64) -> ExperimentConfig {
    let mut p = TataruSuiteParams::default();
    p.suite.samples = 40;
    p.semigroup_samples = 40;
    ExperimentConfig::new(seed, Experiment::TataruSuite(p))
}

#[test]
fn defaults_prints_a_loadable_config() {
    for kind in Experiment::KINDS {
        let out = ldp().args(["defaults", kind]).output().unwrap();
        assert!(out.status.success(), "{kind}");
        let cfg = ExperimentConfig::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default_for(kind).unwrap());
    }
    let out = ldp().args(["defaults", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, serde_json::to_string(&small_tataru(3)).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let out = ldp().arg("tataru-suite").arg("--config").arg(&cfg_path).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS"));
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("tables/suites.csv").exists());
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, serde_json::to_string(&small_tataru(3)).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let st = ldp().arg("tataru-suite").arg("--config").arg(&cfg_path).args(["--seed", "99"]).arg("--out").arg(&out_dir).status().unwrap();
    assert!(st.success());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 99);
    assert_eq!(summary["config_sha256"], small_tataru(99).hash().as_str());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();

    let missing = ldp().arg("simulate").arg("--config").arg(dir.path().join("absent.json")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let mismatch = dir.path().join("tataru.json");
    fs::write(&mismatch, serde_json::to_string(&small_tataru(0)).unwrap()).unwrap();
    let out = ldp().arg("simulate").arg("--config").arg(&mismatch).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment:"));

    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "{ not json").unwrap();
    let out = ldp().arg("tataru-suite").arg("--config").arg(&garbage).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_run_exits_with_one() {
    let mut cfg = ExperimentConfig::default_for("ldp-slope").unwrap();
    if let Experiment::LdpSlope(p) = &mut cfg.experiment {
        p.target = vec![6.0];
        p.radius = 0.1;
        p.noise_scales = vec![64.0];
        p.ensembles = vec![100];
        p.net_points = 1;
        p.action_slices = 20;
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let out = ldp().arg("ldp-slope").arg("--config").arg(&cfg_path).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
    // a failed run still leaves its evidence behind
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], false);
    assert_eq!(summary["result"]["inconclusive"], true);
}
