//! End-to-end runs of the `dicke-sim` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dicke-sim"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn params_writes_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("params");
    let o = run(&["params", "--config", path(&config("reference.cfg")), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "summary.json", "resolved.cfg", "params.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!((summary["asymmetry"].as_f64().unwrap() - 0.028).abs() < 0.002);
    assert!(String::from_utf8_lossy(&o.stdout).contains("lambda_c"));
}

#[test]
fn bad_unit_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "kappa = 0.07 MHz\nDelta_c = -127 parsecs\n").unwrap();
    let o = run(&["params", "--config", path(&cfg), "--out", path(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("Delta_c"), "{err}");
    assert!(!dir.path().join("x").exists());
}

#[test]
fn unknown_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["params", "--set", "kapa=1 MHz", "--out", path(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    assert_eq!(run(&["params", "--out", path(&out)]).status.code(), Some(0));
    assert_eq!(run(&["params", "--out", path(&out)]).status.code(), Some(1));
    assert_eq!(run(&["params", "--out", path(&out), "--force"]).status.code(), Some(0));
}

#[test]
fn runtime_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "transmission",
        "--config",
        path(&config("quick.cfg")),
        "--set",
        "splitting.eta_p=5 MHz",
        "--out",
        path(&dir.path().join("t")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corrupted_fixture_fails_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("qc");
    let o = run(&[
        "quantum-check",
        "--config",
        path(&config("quick.cfg")),
        "--set",
        "quantum.fault=flip-omega0-sign",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let checks = fs::read_to_string(out.join("checks.csv")).unwrap();
    let row = checks.lines().find(|l| l.starts_with("meanfield.jacobian-vs-closed-form")).unwrap();
    assert!(row.contains(",false,"), "{row}");
}

#[test]
fn identical_configs_give_identical_data() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["ramp", "--config", path(&config("quick.cfg")), "--out", path(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["ramp.csv", "summary.json", "resolved.cfg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // the resolved listing reproduces the run
    let c = dir.path().join("c");
    let o = run(&["ramp", "--config", path(&a.join("resolved.cfg")), "--out", path(&c)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(a.join("ramp.csv")).unwrap(), fs::read(c.join("ramp.csv")).unwrap());
}

#[test]
fn every_shipped_config_runs_params() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["reference.cfg", "quick.cfg"] {
        let o = run(&["params", "--config", path(&config(name)), "--out", path(&dir.path().join(name))]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn quick_subcommands_complete() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["splitting-map", "transmission", "threshold-map", "quantum-check"] {
        let out = dir.path().join(sub);
        let o = run(&[sub, "--config", path(&config("quick.cfg")), "--out", path(&out)]);
        assert_eq!(o.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("manifest.json").exists());
    }
}
