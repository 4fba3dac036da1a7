//! The installed binary: exit codes, help text and the gradient-check sweep.

use std::path::Path;
use std::process::{Command, Output};

fn weakloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakloc")).args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn invalid_positive_fraction_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = weakloc(&["synth", "--positive-fraction", "1.5", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("positive_fraction"));
    assert!(!out.exists());
}

#[test]
fn unknown_choice_exits_2() {
    let o = weakloc(&["train", "--manifest", "m.jsonl", "--out", "m.mmck", "--pooling", "median"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn missing_manifest_exits_3() {
    let o = weakloc(&["train", "--manifest", "/nonexistent/m.jsonl", "--out", "/tmp/never.mmck"]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
}

#[test]
fn empty_annotation_file_reports_no_events() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("a.csv");
    std::fs::write(&csv, "").unwrap();
    let o = weakloc(&["stats", p(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("no events"));
}

#[test]
fn help_lists_defaults() {
    let o = weakloc(&["train", "--help"]);
    let t = text(&o);
    for flag in ["--pooling", "--fusion", "--modalities", "--hidden", "--lr", "--seed", "--threads", "--config"] {
        assert!(t.contains(flag), "{flag} missing from help");
    }
    assert!(t.contains("[default: 1e-4]") && t.contains("[default: 1024"));
}

#[test]
fn gradcheck_sweep_and_negative_control() {
    let o = weakloc(&["gradcheck", "--all"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(text(&o).lines().filter(|l| l.starts_with("PASS")).count(), 9);

    let o = weakloc(&["gradcheck", "--corrupt", "visual.gate.weight"]);
    assert_eq!(o.status.code(), Some(3));
    let t = text(&o);
    assert!(t.contains("FAIL") && t.contains("visual.gate.weight"), "{t}");
}
