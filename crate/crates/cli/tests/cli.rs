use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const QUICK: [&str; 6] = [
    "--set",
    "schedule.samples=6",
    "--set",
    "schedule.horizons=[2,4]",
    "--set",
    "schedule.velocities=[[-0.5],[0],[0.5]]",
];

fn hjlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjlab")).args(args).env_remove("HJLAB_OUT").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn sidecar(dir: &Path, cmd: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{cmd}.json"))).unwrap()).unwrap()
}

#[test]
fn usage_exit_codes() {
    assert_eq!(code(&hjlab(&["--help"])), 0);
    assert_eq!(code(&hjlab(&["--version"])), 0);
    assert_eq!(code(&hjlab(&[])), 64);
    let out = hjlab(&["frobnicate"]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&hjlab(&["oracle-psi", "--out", out, "--set", "hamiltonian.q=1"])), 2);
    assert_eq!(code(&hjlab(&["oracle-psi", "--out", out, "--set", "no_such_key=1"])), 2);
    assert_eq!(code(&hjlab(&["oracle-psi", "--out", out, "--preset", "nope"])), 2);
    assert_eq!(code(&hjlab(&["oracle-psi", "--out", out, "--set", "version=\"0\""])), 2);

    let cfg = dir.path().join("bad.json");
    let mut tree: Value = serde_json::from_str(&hjlab::config::ExperimentConfig::lookup("zero").unwrap().to_json().unwrap())
        .unwrap();
    tree["lattice"]["typo"] = Value::from(1);
    fs::write(&cfg, tree.to_string()).unwrap();
    assert_eq!(code(&hjlab(&["oracle-psi", "--out", out, "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn oracle_psi_mean_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjlab(&["oracle-psi", "--T", "1", "--samples", "20000", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = sidecar(dir.path(), "oracle-psi");
    let s = &rep["summary"];
    let (mean, se) = (s["mean"].as_f64().unwrap(), s["se"].as_f64().unwrap());
    assert!((mean + 1.0 / 12.0).abs() <= 3.0 * se + 1e-3, "mean {mean} se {se}");
    assert_eq!(rep["config"]["psi"]["samples"], 20000);
    assert_eq!(rep["seeds"]["master_seed"], 7);
    assert!(rep.get("warnings").is_none());
    let rows = fs::read_to_string(dir.path().join("psi.csv")).unwrap();
    assert_eq!(rows.lines().count(), 20001);
    assert_eq!(rows.lines().next().unwrap(), "realization,psi_over_t");
}

#[test]
fn overrides_beat_config_file_and_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let mut cfg = hjlab::config::ExperimentConfig::lookup("constant").unwrap();
    cfg.psi.as_mut().unwrap().samples = 300;
    cfg.seed = 99;
    fs::write(&cfg_path, cfg.to_json().unwrap()).unwrap();
    let out_dir = dir.path().join("o");
    let out = hjlab(&[
        "oracle-psi",
        "--config",
        cfg_path.to_str().unwrap(),
        "--set",
        "psi.samples=200",
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = sidecar(&out_dir, "oracle-psi");
    assert_eq!(rep["config"]["psi"]["samples"], 200);
    assert_eq!(rep["config"]["seed"], 5);
    // The echo parses back into the effective config.
    let echoed = hjlab::config::ExperimentConfig::from_json(&rep["config"].to_string()).unwrap();
    assert_eq!(echoed.field, cfg.field);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_hjlab"))
        .args(["oracle-psi", "--samples", "50"])
        .env("HJLAB_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(target.join("psi.csv").exists());
    assert!(target.join("oracle-psi.json").exists());
}

fn run_in(dir: &Path, args: &[&str]) {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", dir.to_str().unwrap()]);
    let out = hjlab(&all);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut effective = vec!["effective"];
    effective.extend(QUICK);
    let runs: Vec<Vec<&str>> = vec![
        effective,
        vec!["sample-env", "--index", "3", "--horizon", "2"],
        vec!["lagrangian", "--y", "0.5", "--descent", "20", "--index", "1"],
        vec!["solve-hj", "--eps", "0.25", "--times", "0.5,1"],
        vec!["scaling", "--samples", "3", "--set", "eps_list=[0.25,0.125]"],
    ];
    for args in &runs {
        let mut one = args.clone();
        one.extend(["--workers", "1"]);
        run_in(a.path(), &one);
        let mut many = args.clone();
        many.extend(["--workers", "3"]);
        run_in(b.path(), &many);
    }
    let mut compared = 0;
    for entry in fs::read_dir(a.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let other = b.path().join(path.file_name().unwrap());
            assert_eq!(fs::read(&path).unwrap(), fs::read(&other).unwrap(), "{path:?}");
            compared += 1;
        }
    }
    assert!(compared >= 7);
}

#[test]
fn effective_then_enhancement_from_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["effective"];
    args.extend(QUICK);
    run_in(dir.path(), &args);
    let table = dir.path().join("effective.csv");
    let parsed = hjlab::homog::EffectiveTable::read_csv(fs::File::open(&table).unwrap()).unwrap();
    assert_eq!(parsed.v.len(), 3);
    assert_eq!(parsed.p.len(), 5);
    let enh = dir.path().join("enh");
    let mut args = vec!["enhancement", "--table", table.to_str().unwrap(), "--set", "tent.samples=4"];
    args.extend(QUICK);
    run_in(&enh, &args);
    let gap = fs::read_to_string(enh.join("gap.csv")).unwrap();
    assert_eq!(gap.lines().count(), 6);
    assert!(enh.join("tent.csv").exists());
    assert!(sidecar(&enh, "enhancement")["summary"]["tent_certified"].is_boolean());
}

#[test]
fn fd_and_hopf_lax_write_solutions() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["solve-hj", "--method", "fd", "--eps", "0.25", "--set", "fd.grid.h=0.0078125", "--set", "eps_list=[0.25]"]);
    let fd = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert_eq!(fd.lines().next().unwrap(), "x1,t,u");
    assert_eq!(sidecar(dir.path(), "solve-hj")["summary"]["method"], "lax-friedrichs");
    let out = hjlab(&["solve-hj", "--method", "fd", "--out", dir.path().to_str().unwrap(), "--set", "fd=null"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn tails_requires_enough_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjlab(&["tails", "--samples", "10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn check_invariants_on_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjlab(&["check-invariants", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = sidecar(dir.path(), "check-invariants");
    assert_eq!(rep["summary"]["violations"], Value::Array(vec![]));
    let csv = fs::read_to_string(dir.path().join("invariants.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("1")));
}
