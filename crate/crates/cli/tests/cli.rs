//! Command-line behavior: exit codes, JSON output, usage errors.

use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("corpus")
}

fn dlcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlcheck"))
        .current_dir(corpus_root().parent().unwrap())
        .args(args)
        .output()
        .expect("spawn dlcheck")
}

fn path(rel: &str) -> String {
    corpus_root().join(rel).to_string_lossy().to_string()
}

#[test]
fn check_proved_exits_zero() {
    let out = dlcheck(&[
        "check",
        &path("conserve/model.dlm"),
        "--cert",
        &path("conserve/cert.cert"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("verdict: proved"));
}

#[test]
fn check_refuted_exits_one() {
    let out = dlcheck(&[
        "check",
        &path("rev_basic/mutants/flipped_cofactor/model.dlm"),
        "--cert",
        &path("rev_basic/mutants/flipped_cofactor/cert.cert"),
    ]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn check_missing_cert_flag_exits_three() {
    let out = dlcheck(&["check", &path("conserve/model.dlm")]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn unknown_flag_exits_three_with_usage() {
    let out = dlcheck(&["check", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage") || err.contains("unexpected"));
}

#[test]
fn parse_error_exits_three() {
    let dir = std::env::temp_dir().join(format!("dlcheck-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.dlm");
    std::fs::write(&bad, "model broken\ntheorem A' = ").unwrap();
    let out = dlcheck(&[
        "check",
        bad.to_str().unwrap(),
        "--cert",
        &path("conserve/cert.cert"),
    ]);
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn json_report_parses_and_round_trips_verdicts() {
    let out = dlcheck(&[
        "check",
        &path("rev_avoid/model.dlm"),
        "--cert",
        &path("rev_avoid/cert.cert"),
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).expect("valid JSON");
    assert_eq!(value["verdict"], "proved");
    let obligations = value["obligations"].as_array().unwrap();
    assert!(!obligations.is_empty());
    for ob in obligations {
        assert!(ob["origin"].is_string());
        let v = ob["verdict"].as_str().unwrap();
        assert!(matches!(v, "proved" | "refuted" | "unknown" | "skipped"));
    }
}

#[test]
fn json_witness_is_structured() {
    let out = dlcheck(&[
        "check",
        &path("rev_basic/mutants/flipped_cofactor/model.dlm"),
        "--cert",
        &path("rev_basic/mutants/flipped_cofactor/cert.cert"),
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let has_witness = value["obligations"]
        .as_array()
        .unwrap()
        .iter()
        .any(|ob| ob["witness"].is_object());
    assert!(has_witness, "refutation should carry a witness point");
}

#[test]
fn lie_of_mass_is_zero() {
    let out = dlcheck(&["lie", &path("rev_basic/model.dlm"), "--term", "A+B"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0");
}

#[test]
fn lie_of_energy_reports_both_branches() {
    let out = dlcheck(&["lie", &path("conserve/model.dlm"), "--term", "E"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let zero_branches = text
        .lines()
        .filter(|l| l.starts_with("case") && l.trim_end().ends_with(": 0"))
        .count();
    assert_eq!(zero_branches, 2, "{text}");
}

#[test]
fn simulate_writes_csv() {
    let dir = std::env::temp_dir().join(format!("dlcheck-sim-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out_file = dir.join("trace.csv");
    let out = dlcheck(&[
        "simulate",
        &path("rev_basic/model.dlm"),
        "--params",
        "kf=1,kr=1,A0=1",
        "--horizon",
        "1",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = std::fs::read_to_string(&out_file).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "time,iteration,A,B");
    assert_eq!(lines.count(), 1001);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn falsify_clean_model_exits_zero_and_violation_exits_one() {
    let out = dlcheck(&[
        "falsify",
        &path("rev_basic/model.dlm"),
        "--trials",
        "25",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let out = dlcheck(&[
        "falsify",
        &path("rev_basic/model.dlm"),
        "--property",
        "A <= 0",
        "--trials",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    let line = String::from_utf8_lossy(&out.stdout);
    let first = line.lines().next().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(first).expect("JSON violation line");
    assert!(parsed["residual"].as_f64().unwrap() > 0.0);
}

#[test]
fn corpus_command_is_idempotent() {
    let a = dlcheck(&["corpus", "--root", corpus_root().to_str().unwrap()]);
    let b = dlcheck(&["corpus", "--root", corpus_root().to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    // Identical apart from timing figures.
    let strip = |s: &[u8]| -> Vec<String> {
        String::from_utf8_lossy(s)
            .lines()
            .map(|l|

                l.split_whitespace()
                    .filter(|w| !w.ends_with("ms") && !w.ends_with("µs") && !w.ends_with('s'))
                    .collect::<Vec<_>>()
                    .join(" ")
            )
            .collect()
    };
    assert_eq!(strip(&a.stdout), strip(&b.stdout));
}
