//! End-to-end contract of the `lab` binary: exit codes, report
//! determinism, and thread-count independence.

use std::process::Command;

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lab"))
}

fn write_config(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const PASSING_SCAN: &str = r#"{
  "version": 1,
  "experiment": "cat0-scan",
  "seed": 11,
  "space": {"kind": "flat-disc", "radius": 1.0, "spacing": 0.1},
  "triangles": 800,
  "side_points": 2
}"#;

const FAILING_SCAN: &str = r#"{
  "version": 1,
  "experiment": "cat0-scan",
  "seed": 12,
  "space": {"kind": "cone", "radius": 1.0, "spacing": 0.1, "cone-total-angle": 3.141592653589793},
  "triangles": 1500,
  "side_points": 2
}"#;

#[test]
fn passing_config_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pass.json", PASSING_SCAN);
    let out = lab().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let envelope: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(envelope["verdict"], "PASS");
}

#[test]
fn failing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fail.json", FAILING_SCAN);
    let out = lab().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let envelope: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(envelope["verdict"], "FAIL");
}

#[test]
fn missing_seed_exits_two_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"version": 1, "experiment": "cat0-scan",
            "space": {"kind": "flat-disc", "radius": 1.0, "spacing": 0.1}}"#,
    );
    let out = lab().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("seed"), "stderr should name the missing field: {stderr}");
}

#[test]
fn unknown_field_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "extra.json",
        r#"{"version": 1, "experiment": "cat0-scan", "seed": 3, "wibble": true,
            "space": {"kind": "flat-disc", "radius": 1.0, "spacing": 0.1}}"#,
    );
    let out = lab().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("wibble"));
}

/// Strip the one intentionally varying field before comparing reports.
fn without_timestamp(text: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

fn scan_config_reporting_to(report: &std::path::Path) -> String {
    let mut cfg: serde_json::Value = serde_json::from_str(PASSING_SCAN).unwrap();
    cfg["report"] = serde_json::Value::String(report.display().to_string());
    cfg.to_string()
}

#[test]
fn reports_are_identical_modulo_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for i in 0..2 {
        let report = dir.path().join(format!("report{i}.json"));
        let cfg = write_config(
            dir.path(),
            &format!("scan{i}.json"),
            &scan_config_reporting_to(&report),
        );
        let status = lab().arg("run").arg(&cfg).status().unwrap();
        assert_eq!(status.code(), Some(0));
        runs.push(std::fs::read_to_string(&report).unwrap());
    }
    assert_eq!(without_timestamp(&runs[0]), without_timestamp(&runs[1]));
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let report = dir.path().join(format!("report{threads}.json"));
        let cfg = write_config(
            dir.path(),
            &format!("scan{threads}.json"),
            &scan_config_reporting_to(&report),
        );
        let status = lab()
            .arg("run")
            .arg(&cfg)
            .env("CAT0LAB_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        runs.push(std::fs::read_to_string(&report).unwrap());
    }
    assert_eq!(without_timestamp(&runs[0]), without_timestamp(&runs[1]));
}

#[test]
fn suite_rejects_unknown_name() {
    let out = lab().args(["suite", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
