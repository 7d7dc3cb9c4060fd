use std::path::Path;
use std::process::{Command, Output};

fn sdopt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdopt")).args(args).current_dir(cwd).output().unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn power_row_b_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sdopt(&["ssd-ppra", "--config", "power-b", "--out", "run"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&tmp.path().join("run"));
    assert!((s["lambda"].as_f64().unwrap() - 0.9471).abs() < 5e-3);
    assert_eq!(s["status"], "sub-optimal");
    let csv = std::fs::read_to_string(tmp.path().join("run/quantile.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10_001);
    assert_eq!(csv.lines().next().unwrap(), "rank,solution,classic,benchmark");
    let export: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run/nn_export.json")).unwrap()).unwrap();
    for key in ["lambda", "breakpoints", "segments", "market", "utility", "benchmark"] {
        assert!(export.get(key).is_some(), "missing {key}");
    }
    assert!(std::fs::read_to_string(tmp.path().join("run/plot.svg")).unwrap().contains("<polyline"));
}

#[test]
fn outputs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for dir in ["one", "two"] {
        let out = sdopt(&["ssd-ppra", "--config", "mixed-d", "--out", dir], tmp.path());
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["summary.json", "quantile.csv", "plot.svg", "nn_export.json"] {
        let a = std::fs::read(tmp.path().join("one").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("two").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn validate_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let ranks: Vec<String> = (0..100).map(|i| format!("{},{}", (i as f64 + 0.5) / 100.0, i as f64 * 0.1)).collect();
    std::fs::write(tmp.path().join("q.csv"), format!("rank,value\n{}\n", ranks.join("\n"))).unwrap();
    let out = sdopt(&["validate", "--candidate", "q.csv", "--benchmark", "q.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["feasible"], true);
    assert_eq!(report["worst_violation"], 0.0);
}

#[test]
fn validate_reports_shortfall() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("hi.csv"), "rank,value\n0.1,1.0\n0.9,2.0\n").unwrap();
    std::fs::write(tmp.path().join("lo.csv"), "rank,value\n0.1,0.0\n0.9,1.0\n").unwrap();
    let out = sdopt(&["validate", "--candidate", "lo.csv", "--benchmark", "hi.csv", "--order", "first"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["feasible"], false);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(sdopt(&["ssd-ppra", "--config", "missing.toml"], tmp.path()).status.code(), Some(4));
    std::fs::write(tmp.path().join("bad.toml"), "name = 3\n").unwrap();
    assert_eq!(sdopt(&["ssd-ppra", "--config", "bad.toml"], tmp.path()).status.code(), Some(4));
    assert_eq!(sdopt(&["no-such-command"], tmp.path()).status.code(), Some(4));

    let poor = include_str!("../configs/power-a.toml").replace("x_bar = 10.0", "x_bar = 5.0");
    std::fs::write(tmp.path().join("poor.toml"), poor).unwrap();
    assert_eq!(sdopt(&["ssd-ppra", "--config", "poor.toml", "--out", "p"], tmp.path()).status.code(), Some(2));
    assert_eq!(sdopt(&["fsd", "--config", "poor.toml", "--out", "p"], tmp.path()).status.code(), Some(2));
}

#[test]
fn fsd_and_classic_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sdopt(&["fsd", "--config", "fsd-s-shaped", "--out", "f", "--grid-points", "500"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("f/quantile.csv")).unwrap();
    assert_eq!(csv.lines().count(), 501);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",classic") || l.ends_with(",floor")));
    // the floor binds only below s = 5.1e-4, under the first of 500 midpoints
    assert!(csv.lines().nth(1).unwrap().ends_with(",classic"));
    let out = sdopt(&["classic", "--config", "classic-power", "--out", "c"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!((summary(&tmp.path().join("c"))["lambda"].as_f64().unwrap() - 0.9003).abs() < 1e-3);
}

#[test]
fn export_only() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sdopt(&["export-nn", "--config", "power-a", "--out", "e"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("e/nn_export.json").exists());
    assert!(!tmp.path().join("e/summary.json").exists());
}
