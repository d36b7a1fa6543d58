// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn edgefed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgefed")).args(args).env_remove("EDGEFED_OUT").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn run_writes_traces_and_prints_summary() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("baseline.json");
    let o = edgefed(&["run", "--config", s(&cfg), "--out", s(out.path()), "--runs", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        files(out.path()),
        [
            "baseline_clique_2.csv",
            "baseline_clique_2.jsonl",
            "baseline_clique_2_chain.json",
            "baseline_clique_2_events.jsonl"
        ]
    );
    let csv = fs::read_to_string(out.path().join("baseline_clique_2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("scenario_id,consensus,n_systems,run,ann_id,bidding_s"));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("20.500"), "{stdout}");
}

#[test]
fn consensus_override_switches_variant() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("baseline.json");
    let o = edgefed(&["run", "--config", s(&cfg), "--out", s(out.path()), "--runs", "2", "--consensus", "soa"]);
    assert!(o.status.success());
    assert_eq!(files(out.path()), ["baseline_soa_2.csv", "baseline_soa_2.jsonl"]);
}

#[test]
fn sweep_restricted_to_one_variant() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("sweep.json");
    let o = edgefed(&["sweep", "--config", s(&cfg), "--out", s(out.path()), "--runs", "2", "--consensus", "clique"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names = files(out.path());
    assert_eq!(names.iter().filter(|n| n.starts_with("sweep_clique_")).count(), 5);
    let summary = fs::read_to_string(out.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
}

#[test]
fn compare_reports_overhead_and_rejects_mismatch() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("sweep.json");
    let o = edgefed(&["sweep", "--config", s(&cfg), "--out", s(out.path()), "--runs", "2"]);
    assert!(o.status.success());
    let p = |name: &str| out.path().join(name);

    let cmp = tempfile::tempdir().unwrap();
    let o = edgefed(&["compare", s(&p("sweep_clique_2.csv")), s(&p("sweep_soa_2.csv")), "--out", s(cmp.path())]);
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp.path().join("compare.json")).unwrap()).unwrap();
    let overhead = report[0]["overhead_s"].as_f64().unwrap();
    assert!((overhead - 17.85).abs() < 1e-9, "{overhead}");

    let o = edgefed(&["compare", s(&p("sweep_soa_2.csv")), s(&p("sweep_soa_2.csv")), "--out", s(cmp.path())]);
    assert!(o.status.success());
    let o = edgefed(&["compare", s(&p("sweep_clique_2.csv")), s(&p("sweep_soa_10.csv")), "--out", s(cmp.path())]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(edgefed(&["run", "--config", s(&missing), "--out", s(dir.path())]).status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"topology": {"n_systems": 2, "colour": "red"}}"#).unwrap();
    assert_eq!(edgefed(&["validate-config", "--config", s(&bad)]).status.code(), Some(1));

    let blocker = dir.path().join("not-a-dir");
    fs::write(&blocker, "x").unwrap();
    let cfg = configs().join("baseline.json");
    let o = edgefed(&["run", "--config", s(&cfg), "--out", s(&blocker.join("sub")), "--runs", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_config_accepts_shipped_configs() {
    for name in ["baseline.json", "sweep.json"] {
        let o = edgefed(&["validate-config", "--config", s(&configs().join(name))]);
        assert!(o.status.success(), "{name}");
    }
}

#[test]
fn out_dir_from_environment() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("baseline.json");
    let o = Command::new(env!("CARGO_BIN_EXE_edgefed"))
        .args(["run", "--config", s(&cfg), "--runs", "1"])
        .env("EDGEFED_OUT", out.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.path().join("baseline_clique_2.csv").exists());
}
