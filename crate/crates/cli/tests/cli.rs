use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn ploop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ploop")).args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.scn"))
        .to_string_lossy()
        .into_owned()
}

#[test]
fn validate_accepts_fixture() {
    let out = ploop(&["validate", "--scenario", &fixture("closed_loop")]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: closed_loop"));
}

#[test]
fn validate_rejects_dangling_reference_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("minimal"))
        .unwrap()
        .replace("\"home\": \"factory\"", "\"home\": \"nowhere\"");
    let path = dir.path().join("bad.scn");
    fs::write(&path, text).unwrap();
    let out = ploop(&["validate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn malformed_scenario_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.scn");
    fs::write(&path, "{\n  \"format\": 1,\n  \"name\": \n}").unwrap();
    let out = ploop(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn run_writes_outputs_and_report_recomputes_from_log() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = ploop(&[
        "run",
        "--scenario",
        &fixture("closed_loop"),
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "events.jsonl",
        "report.json",
        "report.txt",
        "insights.json",
        "knowledge-factory.jsonl",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let saved = fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), saved);
    let again = ploop(&[
        "report",
        "--log",
        out_dir.join("events.jsonl").to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(again.status.success());
    assert_eq!(String::from_utf8_lossy(&again.stdout), saved);
}

#[test]
fn compare_paired_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["closed_loop", "closed_loop_baseline"] {
        let out = ploop(&["run", "--scenario", &fixture(name), "--format", "json"]);
        assert!(out.status.success());
        let path = dir.path().join(format!("{name}.json"));
        fs::write(&path, &out.stdout).unwrap();
        reports.push(path.to_string_lossy().into_owned());
    }
    let out = ploop(&["compare", "--a", &reports[0], "--b", &reports[1]]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["delta"], 14);
    assert_eq!(summary["improvement"], true);
}

#[test]
fn compare_without_launch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ploop(&["run", "--scenario", &fixture("minimal"), "--format", "json"]);
    let path = dir.path().join("idle.json");
    fs::write(&path, &out.stdout).unwrap();
    let p = path.to_str().unwrap();
    let out = ploop(&["compare", "--a", p, "--b", p]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_override_is_reported() {
    let out = ploop(&[
        "run",
        "--scenario",
        &fixture("partition"),
        "--seed",
        "99",
        "--format",
        "json",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["seed"], 99);
}
