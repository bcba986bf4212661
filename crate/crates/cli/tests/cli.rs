//! Drives the `cpig` binary: exit codes, outputs and run directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn cpig(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpig"))
        .args(args)
        .current_dir(dir)
        .env_remove("CPIG_LOG")
        .output()
        .unwrap()
}

fn cpig_stdin(dir: &Path, args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cpig"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn wordlists_generate_writes_fifty_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cpig(
        tmp.path(),
        &["wordlists", "generate", "--batches", "5", "--per-batch", "10", "--backend", "mock", "--seed", "7", "--out", "wl.jsonl"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let raw = fs::read_to_string(tmp.path().join("wl.jsonl")).unwrap();
    assert_eq!(raw.lines().count(), 50);
    let o = cpig(tmp.path(), &["wordlists", "validate", "wl.jsonl", "--json"]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["valid"], 50);
}

#[test]
fn wordlists_generate_without_output_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cpig(tmp.path(), &["wordlists", "generate", "--backend", "mock"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_backend_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cpig(tmp.path(), &["wordlists", "generate", "--backend", "nope", "--out", "x.jsonl"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn wordlists_validate_reports_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let good = r#"{"id":"w1","names":["Ana","Bo","Cy"],"place":"park","action":"rowing","source":"file"}"#;
    fs::write(tmp.path().join("bad.jsonl"), format!("{good}\n{{\"id\": 3}}\n{good}\n")).unwrap();
    let o = cpig(tmp.path(), &["wordlists", "validate", "bad.jsonl"]);
    assert_ne!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("bad.jsonl:2:"), "{out}");
    assert!(out.contains("bad.jsonl:3:") && out.contains("duplicate"), "{out}");
}

#[test]
fn validate_item_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let pass = fixture("item_pass.txt");
    let o = cpig(tmp.path(), &["validate-item", pass.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["token_count"], 140);

    let priming = fs::read_to_string(fixture("item_priming.txt")).unwrap();
    let o = cpig_stdin(tmp.path(), &["validate-item"], &priming);
    assert_eq!(code(&o), 3);
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["verdict"], "fail_priming");
    assert_eq!(report["priming_hits"][0], "must decide");
}

#[test]
fn validate_item_on_empty_stdin_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cpig_stdin(tmp.path(), &["validate-item", "-"], "");
    assert_eq!(code(&o), 1);
}

#[test]
fn run_resume_and_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "name": "t1",
        "iterations": 2,
        "wordlist_batches": 2,
        "wordlist_per_batch": 6,
        "responses_per_item": 10,
        "selection_strategy": "constraint",
    });
    fs::write(tmp.path().join("trial.json"), cfg.to_string()).unwrap();

    let o = cpig(tmp.path(), &["run", "--config", "trial.json", "--seed", "1", "--backend-all", "mock", "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["status"], "complete");
    let run_dir = tmp.path().join("runs/t1-s1");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seeds"], serde_json::json!([1]));
    assert_eq!(manifest["config"]["selection_strategy"], "constraint");

    let o = cpig(tmp.path(), &["run", "--resume", "runs/t1-s1"]);
    assert_eq!(code(&o), 0);

    let o = cpig(tmp.path(), &["run", "--config", "trial.json", "--seeds", "1,2,3", "--out", "sweep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for s in 1..=3 {
        assert!(tmp.path().join(format!("sweep/t1-s{s}/iterations/02/exemplars.json")).is_file());
    }

    let ratings = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ratings_noise.csv");
    let o = cpig(
        tmp.path(),
        &["analyze", "sweep", "--ratings", ratings.to_str().unwrap(), "--joint-hist", "--drop-threshold", "0.95", "--json"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["icc"].as_array().unwrap().len(), 2);
    assert_eq!(report["joint_histograms"].as_object().unwrap().len(), 3);
    assert!(tmp.path().join("reports/joint_histogram_t1-s2.csv").is_file());
    assert!(tmp.path().join("reports/icc.csv").is_file());
}

#[test]
fn analyze_single_iteration_reports_insufficient_data() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cpig(tmp.path(), &["run", "--seed", "2", "--iterations", "1", "--name", "short"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = cpig(tmp.path(), &["analyze", "runs/short-s2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("insufficient data"), "{}", stdout(&o));
}

#[test]
fn run_with_unreachable_backend_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let cfg = serde_json::json!({
        "name": "down",
        "iterations": 1,
        "generator_backend": "remote",
        "response_backend": "remote",
        "http_backends": {"remote": {
            "chat_url": format!("http://{dead}/v1/chat/completions"),
            "model": "m",
            "retry": {"attempts": 1, "base_delay_ms": 1}
        }}
    });
    fs::write(tmp.path().join("trial.json"), cfg.to_string()).unwrap();
    let o = cpig(tmp.path(), &["run", "--config", "trial.json", "--seed", "1"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn every_subcommand_has_help() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["--help"],
        vec!["wordlists", "generate", "--help"],
        vec!["wordlists", "validate", "--help"],
        vec!["run", "--help"],
        vec!["validate-item", "--help"],
        vec!["analyze", "--help"],
    ] {
        let o = cpig(tmp.path(), &args);
        assert_eq!(code(&o), 0, "{args:?}");
        assert!(stdout(&o).contains("Usage:"));
    }
}

#[test]
fn reference_page_is_current() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cpig(tmp.path(), &["reference"]);
    assert_eq!(code(&o), 0);
    let committed = fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/cli.md")).unwrap();
    assert_eq!(stdout(&o), committed, "regenerate with `cpig reference > docs/cli.md`");
}
