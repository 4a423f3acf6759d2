use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use rpme_cli::config::{parse_json, parse_key_values, RunConfig};

const BIN: &str = env!("CARGO_BIN_EXE_rpme");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const NOISY: &str = "\
T=0.25
cells=15
coeff.f=logistic_f
coeff.a=linear_a
coeff.a.sigma=0.3
coeff.b=coupling_b
init.c=sine
init.c.amplitude=0.5
init.y=cosine
init.y.offset=1
init.y.amplitude=0.5
n_paths=6
seed=11
";

#[test]
fn missing_config_exits_2() {
    let out = run(&["simulate", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_exits_3_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mm=3\n");
    let out = run(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mm"));
}

#[test]
fn bad_value_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "theta=1.5\n");
    assert_eq!(run(&["simulate", "--config", &cfg]).status.code(), Some(3));
}

#[test]
fn config_round_trips() {
    let pairs = parse_key_values(NOISY).unwrap();
    let cfg = RunConfig::from_pairs(&pairs).unwrap();
    let again = RunConfig::from_pairs(&cfg.to_pairs()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.to_pairs(), again.to_pairs());
}

#[test]
fn json_and_key_value_agree() {
    let json = r#"{"cells": 15, "T": 0.25, "lags": [0.01, 0.02, 0.04], "init.c": "sine"}"#;
    let kv = "cells=15\nT=0.25\nlags=0.01,0.02,0.04\ninit.c=sine\n";
    let a = RunConfig::from_pairs(&parse_json(json).unwrap()).unwrap();
    let b = RunConfig::from_pairs(&parse_key_values(kv).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn duplicate_keys_are_rejected() {
    assert!(parse_key_values("dim=1\ndim=2\n").is_err());
    let mut pairs = BTreeMap::new();
    pairs.insert("init.c.amplitude".to_string(), "oops".to_string());
    assert!(RunConfig::from_pairs(&pairs).is_err());
}

#[test]
fn verify_on_zero_preset_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), "T=0.1\ncells=7\n");
    let out = run(&[
        "verify",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["all_passed"], true);
    assert_eq!(manifest["subcommand"], "verify");
    assert!(out_dir.join("reports/verify.csv").exists());
}

#[test]
fn non_nested_levels_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "levels=15,30\n");
    let out_dir = dir.path().join("out");
    let out = run(&[
        "converge",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.join("manifest.json").exists());
}

fn digests(dir: &Path) -> serde_json::Value {
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["files"].clone()
}

#[test]
fn simulate_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NOISY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, w) in [(&a, "1"), (&b, "4")] {
        let o = run(&[
            "simulate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--workers",
            w,
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(digests(&a), digests(&b));
    let files = digests(&a);
    let files = files.as_object().unwrap();
    assert_eq!(files.len(), 7);
    for rel in files.keys() {
        assert_eq!(
            std::fs::read(a.join(rel)).unwrap(),
            std::fs::read(b.join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn malliavin_writes_derivative_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &NOISY.replace("n_paths=6", "n_paths=2"));
    let out_dir = dir.path().join("out");
    let o = run(&[
        "malliavin",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let bytes = std::fs::read(out_dir.join("paths/path_00001.rpme1")).unwrap();
    let decoded = rpme::simulate::read_rpme1(&mut bytes.as_slice()).unwrap();
    let records = decoded.malliavin.expect("records present");
    assert!(!records.is_empty());
    let rs: std::collections::BTreeSet<u64> = records.iter().map(|r| r.r.to_bits()).collect();
    assert_eq!(rs.len(), 2);
}

#[test]
fn transform_demo_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "T=0.1\ncells=7\ninit.c=sine\ninit.c.amplitude=0.5\ntransform.k_points=17\ntransform.d_points=9\n",
    );
    let out_dir = dir.path().join("out");
    let o = run(&[
        "transform-demo",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let table = std::fs::read_to_string(out_dir.join("transforms/table.csv")).unwrap();
    assert!(table.starts_with("k,d,phi,big_phi,psi"));
    assert_eq!(table.lines().count(), 1 + 17 * 9);
}
