//! Exit codes and outputs of the `pyrogrid` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pyrogrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pyrogrid"))
        .args(args)
        .output()
        .unwrap()
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_testbed_writes_a_loadable_network() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"feeders": 2}"#).unwrap();
    let out = tmp.path().join("net.json");
    let o = pyrogrid(&["build-testbed", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let net = pyrogrid::network::GridNetwork::load(&out).unwrap();
    assert_eq!(net.feeder_heads().len(), 2);
    assert_eq!(net.buses.len(), 14 + 2 * 33);
}

#[test]
fn simulate_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = pyrogrid(&[
        "simulate",
        "--scenario",
        s(&scenarios().join("null.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "curve.csv",
        "metrics.json",
        "cascade.csv",
        "repairs.csv",
        "ignitions.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let curve = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    assert!(
        curve.lines().skip(1).all(|l| l.split(',').nth(1) == Some("1")),
        "{curve}"
    );

    let o = pyrogrid(&["report", "--in", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("robustness") && text.contains("1.0000"), "{text}");
}

#[test]
fn ensemble_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ens");
    let sc = scenarios().join("high_wind.json");
    let o = pyrogrid(&["ensemble", "--scenario", s(&sc), "--runs", "3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("aggregate.json").exists() && out.join("runs.csv").exists());
    let o = pyrogrid(&["report", "--in", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("runs 3"));
}

#[test]
fn validation_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();

    // Unknown flag.
    assert_eq!(pyrogrid(&["simulate", "--bogus"]).status.code(), Some(1));

    // Ignition outside the landscape.
    let text = std::fs::read_to_string(scenarios().join("null.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["network", "landscape", "weather"] {
        let abs = scenarios().join(v[key].as_str().unwrap());
        v[key] = abs.to_str().unwrap().into();
    }
    v["ignitions"] = serde_json::json!([{ "x": -500.0, "y": 10.0 }]);
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = pyrogrid(&["simulate", "--scenario", s(&bad), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));

    // Zero feeders.
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"feeders": 0}"#).unwrap();
    let o = pyrogrid(&[
        "build-testbed",
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("n.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pyrogrid(&[
        "simulate",
        "--scenario",
        s(&tmp.path().join("missing.json")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
