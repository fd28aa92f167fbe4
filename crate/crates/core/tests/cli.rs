mod common;

use std::process::Command;

use fnstream::cli::run_command;
use fnstream::executor::{EventKind, ExecutionTrace};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fnstream"))
}

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fnstream").chain(args.iter().copied());
    let code = run_command(argv, &mut std::io::empty(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(rel: &str) -> String {
    common::fixture(rel).to_string_lossy().into_owned()
}

fn run_case(case: &str, out: &std::path::Path) -> (i32, String, String) {
    call(&[
        "run",
        "--stream",
        &path(&format!("{case}/stream.jsonl")),
        "--registry",
        &path(&format!("{case}/registry.json")),
        "--scenario",
        &path(&format!("{case}/scenario.json")),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn binary_exit_codes() {
    let status = |args: &[&str]| bin().args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&[]), 2);
    assert_eq!(status(&["frobnicate"]), 2);
    assert_eq!(status(&["score"]), 2);
    assert_eq!(status(&["--help"]), 0);
    assert_eq!(status(&["score", "--results", &path("results/synthetic.json")]), 0);
    assert_eq!(status(&["score", "--results", "/nonexistent/results.json"]), 1);
    assert_eq!(status(&["prompt", "--registry", &path("robot/registry.json")]), 0);
}

#[test]
fn every_subcommand_is_listed() {
    let help = String::from_utf8(bin().arg("--help").output().unwrap().stdout).unwrap();
    for cmd in ["parse", "run", "replay", "score", "check", "prompt", "repl"] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn fixtures_run_and_check_clean() {
    let dir = tempfile::tempdir().unwrap();
    for case in ["patterns/sequential", "patterns/parallel", "patterns/condition", "patterns/event"] {
        let trace = dir.path().join("trace.jsonl");
        let (code, out, err) = run_case(case, &trace);
        assert_eq!(code, 0, "{case}: {err}");
        let report: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(report["status"], "ok");
        let (code, out, err) = call(&[
            "check",
            "--trace",
            trace.to_str().unwrap(),
            "--pattern",
            &path(&format!("{case}/pattern.json")),
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("correctness: 1.0"), "{case}: {out}");
        assert!(!out.contains("violation"), "{case}: {out}");
    }
}

#[test]
fn check_flags_a_mismatching_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    assert_eq!(run_case("patterns/condition", &trace).0, 0);
    let check = |pattern: &str| {
        call(&["check", "--trace", trace.to_str().unwrap(), "--pattern", &path(pattern)])
    };
    let (code, out, _) = check("patterns/parallel/pattern.json");
    assert_eq!(code, 0);
    assert!(!out.contains("correctness: 1.0"), "{out}");
    assert!(out.contains("violation:"));

    let (code, _, err) = check("patterns/sequential/pattern.json");
    assert_eq!(code, 1);
    assert!(err.contains("C2"), "{err}");
}

#[test]
fn runs_are_byte_for_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for case in common::CASES {
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        assert_eq!(run_case(case, &a).0, 0);
        assert_eq!(run_case(case, &b).0, 0);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{case}");
    }
}

#[test]
fn run_without_out_streams_the_trace_to_stdout() {
    let (code, out, err) = call(&[
        "run",
        "--stream",
        &path("robot/stream.jsonl"),
        "--registry",
        &path("robot/registry.json"),
        "--scenario",
        &path("robot/scenario.json"),
    ]);
    assert_eq!(code, 0, "{err}");
    let trace = ExecutionTrace::read_jsonl(out.as_bytes()).unwrap();
    assert_eq!(trace.count(EventKind::TextSpoken), 2);
    assert!(err.contains("\"status\": \"ok\""));
}

#[test]
fn replay_scales_delivery_times() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let case = "patterns/condition";
    let (code, _, err) = call(&[
        "replay",
        "--trace",
        &path(&format!("{case}/stream.jsonl")),
        "--speed",
        "2",
        "--registry",
        &path(&format!("{case}/registry.json")),
        "--scenario",
        &path(&format!("{case}/scenario.json")),
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let trace = ExecutionTrace::load(&trace).unwrap();
    let f1 = trace.intervals().into_iter().find(|i| i.function == "F1").unwrap();
    assert_eq!((f1.start, f1.end), (1000, 7000));
}

#[test]
fn raw_text_stream_runs_at_time_zero() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.txt");
    std::fs::write(&stream, "<F1/><F2/><F3/>").unwrap();
    let (code, out, err) = call(&[
        "run",
        "--stream",
        stream.to_str().unwrap(),
        "--registry",
        &path("patterns/sequential/registry.json"),
        "--scenario",
        &path("patterns/sequential/scenario.json"),
    ]);
    assert_eq!(code, 0, "{err}");
    let trace = ExecutionTrace::read_jsonl(out.as_bytes()).unwrap();
    let spans: Vec<_> = trace.intervals_on("C1").iter().map(|i| (i.start, i.end)).collect();
    assert_eq!(spans, [(0, 2000), (2000, 3500), (3500, 5000)]);
}

#[test]
fn failing_run_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.txt");
    std::fs::write(&stream, "<F1/><nope/>").unwrap();
    let (code, _, err) = call(&[
        "run",
        "--stream",
        stream.to_str().unwrap(),
        "--registry",
        &path("patterns/sequential/registry.json"),
        "--scenario",
        &path("patterns/sequential/scenario.json"),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("nope"), "{err}");
}

#[test]
fn parse_prints_tokens_and_is_chunk_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "Hi &amp; bye<wave hand=\"left\"/><hold>ok</hold>").unwrap();
    let (code, whole, err) = call(&["parse", "--input", input.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let (_, split, _) = call(&["parse", "--input", input.to_str().unwrap(), "--chunk-size", "1"]);
    assert_eq!(whole, split);
    assert_eq!(whole.lines().count(), 5);
    let (_, refs, _) = call(&["parse", "--input", input.to_str().unwrap(), "--split-references"]);
    assert_eq!(refs.lines().count(), 7);
}

#[test]
fn score_matches_the_hand_computed_table() {
    let (code, out, _) = call(&["score", "--results", &path("results/synthetic.json")]);
    assert_eq!(code, 0);
    assert!(out.contains("chat\t4\t0.5\tMedium\t2.5\t0.5"), "{out}");
    assert!(out.ends_with("mean\t0.6875\n"), "{out}");
    let (_, json, _) = call(&["score", "--results", &path("results/synthetic.json"), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["mean_normalized"], 0.6875);
}

#[test]
fn prompt_lists_every_function() {
    let (code, out, _) = call(&["prompt", "--registry", &path("robot/registry.json")]);
    assert_eq!(code, 0);
    for f in ["speak", "wait", "nod", "look", "wave", "hold", "walk", "sit"] {
        assert!(out.contains(f), "{f} missing");
    }
}
