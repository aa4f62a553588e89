use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qvel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvel"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn figure(delta: f64, delay: f64) -> String {
    format!(
        r#"{{"params": {{"lambda": 10, "mu": 1, "theta": 1, "n_queues": 2, "delta": {delta}, "delay": {delay}}}}}"#
    )
}

#[test]
fn simulate_below_and_above_critical_delay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let out = out.to_str().unwrap();

    let cfg = write_config(dir.path(), "low.json", &figure(0.0, 0.3));
    let o = qvel(&["simulate", "--config", &cfg, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["measurement"]["decayed"], true);
    let csv = fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("t,q1,q2"));
    assert_eq!(
        csv.lines().count() as u64,
        s["samples"].as_u64().unwrap() + 1
    );

    let cfg = write_config(dir.path(), "high.json", &figure(0.0, 0.55));
    let o = qvel(&["simulate", "--config", &cfg, "--out", out]);
    assert!(o.status.success());
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["measurement"]["decayed"], false);
    assert!(s["measurement"]["amplitude"].as_f64().unwrap() > 0.05);
}

#[test]
fn malformed_config_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.csv");
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"params": {"lambda": 10, "mu": -1, "theta": 1, "n_queues": 2}}"#,
    );
    let o = qvel(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    let cfg = write_config(dir.path(), "junk.json", r#"{"params": {"lambda": 10"#);
    let o = qvel(&["analyze", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn unknown_flag_and_help() {
    assert_eq!(qvel(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(qvel(&["--help"]).status.code(), Some(0));
    assert_eq!(qvel(&["simulate"]).status.code(), Some(1));
}

#[test]
fn analyze_regions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.json",
        r#"{"params": {"lambda": 1, "mu": 1, "theta": 1, "n_queues": 2}}"#,
    );
    let o = qvel(&["analyze", "--config", &cfg]);
    assert!(o.status.success());
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["region"], "RegionB");
    assert!(r.get("hopf_points").is_none() && r.get("design").is_none());

    let cfg = write_config(dir.path(), "d.json", &figure(0.0, 0.5));
    let r: Value = serde_json::from_slice(&qvel(&["analyze", "--config", &cfg]).stdout).unwrap();
    let d0 = r["hopf_points"][0]["delta_cr"].as_f64().unwrap();
    assert!((d0 - 0.3617).abs() < 1e-4);
    let dmax = r["design"]["delta_max"].as_f64().unwrap();
    assert!(dmax > 0.0609 && dmax < 0.0840);

    let cfg = write_config(dir.path(), "c.json", &figure(0.3, 0.5));
    let r: Value = serde_json::from_slice(&qvel(&["analyze", "--config", &cfg]).stdout).unwrap();
    assert_eq!(r["region"], "RegionC");
    assert!(r.get("hopf_points").is_none());
}

#[test]
fn empty_sweep_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"params": {"lambda": 10, "mu": 1, "theta": 1, "n_queues": 2},
            "sweep": {"axes": [{"param": "delta", "values": []}]}}"#,
    );
    assert_eq!(qvel(&["sweep", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"params": {"lambda": 10, "mu": 1, "theta": 1, "n_queues": 2},
            "sweep": {"axes": [{"param": "delta", "values": [0, 0.05, 0.1, 0.15]},
                               {"param": "delay_offset", "values": [0.05, 0.1]}],
                      "simulate": true, "horizon": 150, "steps_per_delay": 32}}"#,
    );
    let a = qvel(&["sweep", "--config", &cfg, "--threads", "1"]);
    let b = qvel(&["sweep", "--config", &cfg, "--threads", "4"]);
    let c = qvel(&["sweep", "--config", &cfg]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 9);
}

#[test]
fn validate_subset_passes() {
    let o = qvel(&["validate", "--format", "csv"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 13);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.json",
        r#"{"params": {"lambda": 10, "mu": 1, "theta": 1, "n_queues": 2}, "validate": {"criteria": [1, 2, 7]}}"#,
    );
    let o = qvel(&["validate", "--config", &cfg]);
    assert!(o.status.success());
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(r["criteria"].as_array().unwrap().len(), 3);
}

#[test]
fn shipped_example_configs_load() {
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/configs");
    let mut n = 0;
    for entry in fs::read_dir(docs).unwrap() {
        let path = entry.unwrap().path();
        qvel_cli::config::RunConfig::load(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 2);
}
