use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn battopf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_battopf"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn solve_case9(dir: &Path) -> PathBuf {
    let results = dir.join("results.json");
    let out = battopf(&[
        "solve",
        s(&fixture("case9_reduced.m")),
        s(&fixture("case9_scenario.json")),
        "--out",
        s(&results),
        "--log",
        s(&dir.join("iters.csv")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    results
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_results_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let results = read_json(&solve_case9(dir.path()));
    for key in ["status", "objective", "Pg_mw", "lambda", "iterations", "cuts", "time_s"] {
        assert!(results.get(key).is_some(), "missing {key}");
    }
    for key in ["line", "speed", "charge", "disjunctive"] {
        assert!(results["cuts"][key].is_u64(), "missing cut count {key}");
    }
    assert_eq!(results["status"], "optimal");
    let lambda = &results["lambda"][0];
    assert_eq!(lambda["t"], 0);
    let l4 = lambda["entries"][0][0].as_f64().unwrap();
    let l9 = lambda["entries"][1][0].as_f64().unwrap();
    assert!((l4 - 0.36).abs() < 0.02 && (l9 - 0.64).abs() < 0.02, "{l4} {l9}");

    let log = std::fs::read_to_string(dir.path().join("iters.csv")).unwrap();
    let rows: Vec<&str> = log.lines().collect();
    assert!(rows[0].starts_with("iteration,n,m,objective"));
    assert_eq!(rows.len() - 1, results["iterations"].as_u64().unwrap() as usize);
}

#[test]
fn validate_passes_on_solver_output() {
    let dir = tempfile::tempdir().unwrap();
    let results = solve_case9(dir.path());
    let report = dir.path().join("validation.json");
    let out = battopf(&[
        "validate",
        s(&fixture("case9_reduced.m")),
        s(&fixture("case9_scenario.json")),
        s(&results),
        "--samples",
        "10000",
        "--seed",
        "42",
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&report);
    assert_eq!(report["pass"], true);
    assert_eq!(report["violation_count"], 0);
}

#[test]
fn validate_fails_when_gains_overload_a_battery() {
    let dir = tempfile::tempdir().unwrap();
    let path = solve_case9(dir.path());
    let mut results = read_json(&path);
    results["lambda"][0]["entries"] = serde_json::json!([[0.1, 0.1], [0.9, 0.9]]);
    std::fs::write(&path, results.to_string()).unwrap();
    let out = battopf(&[
        "validate",
        s(&fixture("case9_reduced.m")),
        s(&fixture("case9_scenario.json")),
        s(&path),
        "--samples",
        "2000",
    ]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], false);
    assert!(report["violation_count"].as_u64().unwrap() > 0);
}

#[test]
fn empty_batteries_make_the_solve_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = read_json(&fixture("case9_scenario.json"));
    for b in scenario["batteries"].as_array_mut().unwrap() {
        b["initial_mwh"] = serde_json::json!(0.0);
    }
    let path = dir.path().join("drained.json");
    std::fs::write(&path, scenario.to_string()).unwrap();
    let results = dir.path().join("results.json");
    let out = battopf(&[
        "solve",
        s(&fixture("case9_reduced.m")),
        s(&path),
        "--out",
        s(&results),
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(read_json(&results)["status"], "infeasible");
}

#[test]
fn iteration_limit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.json");
    let out = battopf(&[
        "solve",
        s(&fixture("case9_reduced.m")),
        s(&fixture("case9_scenario.json")),
        "--out",
        s(&results),
        "--max-iter",
        "1",
    ]);
    assert_eq!(code(&out), 3);
    assert_eq!(read_json(&results)["status"], "iteration_limit");
}

#[test]
fn report_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let results = solve_case9(dir.path());
    let csv = battopf(&["report", s(&results), s(&results), "--format", "csv"]);
    assert_eq!(code(&csv), 0);
    let text = String::from_utf8(csv.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "T,n,m,Cost,Iterations,Time");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));

    let md = battopf(&["report", s(&results)]);
    assert_eq!(code(&md), 0);
    assert!(String::from_utf8(md.stdout)
        .unwrap()
        .starts_with("| T | n | m | Cost | Iterations | Time |"));
}

#[test]
fn missing_case_is_a_data_error() {
    let out = battopf(&["solve", "missing.m", s(&fixture("case9_scenario.json"))]);
    assert_eq!(code(&out), 65);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.m"));
}

#[test]
fn malformed_scenario_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"T\": 1").unwrap();
    let out = battopf(&["solve", s(&fixture("case9_reduced.m")), s(&path)]);
    assert_eq!(code(&out), 65);
}

#[test]
fn usage_errors_exit_sixty_four() {
    assert_eq!(code(&battopf(&[])), 64);
    assert_eq!(code(&battopf(&["solve"])), 64);
    assert_eq!(code(&battopf(&["report", "x.json", "--format", "xml"])), 64);
    let out = battopf(&[
        "validate",
        s(&fixture("case9_reduced.m")),
        s(&fixture("case9_scenario.json")),
        "r.json",
        "--samples",
        "0",
    ]);
    assert_eq!(code(&out), 64);
    assert_eq!(code(&battopf(&["--help"])), 0);
}

#[test]
fn thread_count_does_not_change_the_answer() {
    let dir = tempfile::tempdir().unwrap();
    let mut objectives = Vec::new();
    for threads in ["1", "3"] {
        let results = dir.path().join(format!("r{threads}.json"));
        let out = battopf(&[
            "--threads",
            threads,
            "solve",
            s(&fixture("case9_reduced.m")),
            s(&fixture("case9_scenario.json")),
            "--out",
            s(&results),
        ]);
        assert_eq!(code(&out), 0);
        let r = read_json(&results);
        objectives.push((r["objective"].clone(), r["Pg_mw"].clone(), r["lambda"].clone()));
    }
    assert_eq!(objectives[0], objectives[1]);
}
