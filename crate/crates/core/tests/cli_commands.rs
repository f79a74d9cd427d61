//! End-to-end runs of the `lgf-lab` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lgf_lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgf-lab")).args(args).arg("--out").arg(out).env_remove("LGFLAB_SEED").output().expect("binary runs")
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).skip(1).map(str::to_string).collect()
}

#[test]
fn unknown_command_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = lgf_lab(&["teleport"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage: lgf-lab"));
}

#[test]
fn invalid_parameters_give_error_json_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // β ≥ Q is outside the subcritical range
    let out = lgf_lab(&["specdim", "--seed", "1", "--set", "beta=10"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).expect("error JSON on stdout");
    assert!(v["error"]["kind"].is_string());
    assert!(v["error"]["message"].as_str().unwrap().len() > 3);
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lgf_lab(&["sphavg", "--set", "warp=9"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"]["kind"], "config");
}

#[test]
fn sphavg_writes_one_row_per_grid_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = lgf_lab(&["sphavg", "--seed", "3", "--set", "t_max=1", "--set", "h=0.1", "--set", "reps=10"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    for name in ["sphavg_repr.csv", "sphavg_sde.csv"] {
        assert_eq!(data_rows(&dir.path().join(name)).len(), 11, "{name}");
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sphavg_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "sphavg");
    assert_eq!(summary["config"]["seed"], "3");
    assert!(dir.path().join("sphavg.meta.json").exists());
}

#[test]
fn method_flag_limits_simulators() {
    let dir = tempfile::tempdir().unwrap();
    let out = lgf_lab(&["sphavg", "--seed", "3", "--method", "sde", "--set", "t_max=1", "--set", "reps=5"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("sphavg_sde.csv").exists());
    assert!(!dir.path().join("sphavg_repr.csv").exists());
}

#[test]
fn seed_flag_beats_environment() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["mixing", "--seed", "9", "--set", "reps=3"];
    assert!(lgf_lab(&args, a.path()).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_lgf-lab")).args(args).arg("--out").arg(b.path()).env("LGFLAB_SEED", "12345").output().unwrap();
    assert!(out.status.success());
    let read = |d: &Path| std::fs::read(d.join("mixing_tv.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn saved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert!(lgf_lab(
        &["gmc", "--seed", "5", "--set", "reps=2", "--set", "lattice_n=32", "--set", "epsilon=0.25", "--set", "radii=0.25,0.5,1"],
        &first
    )
    .status
    .success());
    let mut cfg = lgf_lab::cli::RunConfig::defaults("gmc").unwrap();
    for (k, v) in [("seed", "5"), ("reps", "2"), ("lattice_n", "32"), ("epsilon", "0.25"), ("radii", "0.25,0.5,1")] {
        cfg.set(k, v).unwrap();
    }
    let path = dir.path().join("run.cfg");
    lgf_lab::cli::save_config(&cfg, &path).unwrap();
    let second = dir.path().join("second");
    let out = lgf_lab(&["--config", path.to_str().unwrap()], &second);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    for name in ["gmc_ball_masses.csv", "gmc_scaling.json"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
    }
}
