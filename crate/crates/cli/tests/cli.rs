#![cfg(unix)]

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::{Command, Output};

use common::{calc_fixture, write_completion_fixtures};

fn docprobe(args: &[&str], cwd: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docprobe"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn run_evaluate_report() {
    let fx = calc_fixture();
    write_completion_fixtures(&fx);
    let cwd = fx.path();

    let out = docprobe(
        &["run", "--config", "docprobe.json", "--comments", "comments.json", "--run-id", "r1", "--trace-llm"],
        cwd,
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("score: 4 done, 0 reused, 0 failed"));
    assert!(cwd.join("runs/r1/llm_trace.jsonl").is_file());

    let again = docprobe(&["run", "--config", "docprobe.json", "--comments", "comments.json", "--run-id", "r1"], cwd);
    assert_eq!(again.status.code(), Some(0));
    assert!(text(&again.stderr).contains("score: 0 done, 4 reused, 0 failed"));

    let out = docprobe(&["evaluate", "--run", "r1", "--labels", "comments.json", "--w", "1"], cwd);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["w"], 1.0);
    assert_eq!(metrics["metrics"]["roc_auc"], 1.0);

    let out = docprobe(&["report", "--run", "r1", "--format", "csv", "--out", "-"], cwd);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).starts_with("comment_id,n_pass,n_fail,n_nocompile,n_excluded,score,normalized,label,category\n"));

    let out = docprobe(&["report", "--run", "r1", "--format", "md"], cwd);
    assert_eq!(out.status.code(), Some(0));
    let md = std::fs::read_to_string(cwd.join("runs/r1/report.md")).unwrap();
    assert!(md.contains("## Flagged comments"));
}

#[test]
fn two_runs_evaluate_together() {
    let fx = calc_fixture();
    write_completion_fixtures(&fx);
    let cwd = fx.path();
    for id in ["a", "b"] {
        let out = docprobe(&["run", "--config", "docprobe.json", "--comments", "comments.json", "--run-id", id], cwd);
        assert_eq!(out.status.code(), Some(0));
    }
    let out = docprobe(&["evaluate", "--run", "a", "--run", "runs/b", "--labels", "comments.json"], cwd);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(metrics["runs"], serde_json::json!(["a", "b"]));
    assert_eq!(metrics["per_run"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_2() {
    let fx = calc_fixture();
    let cwd = fx.path();
    let out = docprobe(
        &["run", "--config", "docprobe.json", "--comments", "comments.json", "--stages", "extract,compile"],
        cwd,
    );
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("unknown stage \"compile\""), "{err}");
    assert!(err.contains("Usage:"), "{err}");

    let out = docprobe(&["report", "--run", "nope", "--format", "csv"], cwd);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("unknown run"));

    let out = docprobe(&["run", "--config", "missing.json", "--comments", "comments.json"], cwd);
    assert_eq!(out.status.code(), Some(2));

    let out = docprobe(&["run", "--config", "docprobe.json", "--comments", "comments.json", "--backend", "http"], cwd);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("endpoint"));
}

#[test]
fn partial_failure_exits_1() {
    let fx = calc_fixture();
    // No completion fixtures: every property extraction fails.
    let out = docprobe(&["run", "--config", "docprobe.json", "--comments", "comments.json"], fx.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("properties: 0 done, 0 reused, 4 failed"));
}

#[test]
fn evaluate_needs_both_classes() {
    let fx = calc_fixture();
    write_completion_fixtures(&fx);
    let cwd = fx.path();
    let out = docprobe(&["run", "--config", "docprobe.json", "--comments", "comments.json", "--run-id", "r"], cwd);
    assert_eq!(out.status.code(), Some(0));
    std::fs::write(
        cwd.join("labels.json"),
        r#"[{"comment_id": "add-sum", "category": "Accurate"}, {"comment_id": "negate", "category": "Accurate"}]"#,
    )
    .unwrap();
    let out = docprobe(&["evaluate", "--run", "r", "--labels", "labels.json"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("need at least 2 accurate and 2 inaccurate"));
}
