//! Shell-level contract of the binary: exit codes, artifact content and
//! report determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qfde() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qfde"))
}

fn spec_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    qfde().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_spec(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path
}

fn trivial_text() -> String {
    fs::read_to_string(spec_path("trivial.spec")).unwrap()
}

#[test]
fn check_passes_on_the_trivial_spec() {
    let out = run(&["check", spec_path("trivial.spec").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("overall: PASS"), "{text}");
    assert!(text.contains("H6"), "{text}");
}

#[test]
fn check_fails_audit_with_unit_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let text = trivial_text().replace("k = 0.0", "k = 1.0");
    let path = write_spec(dir.path(), "k1.spec", &text);
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout_of(&out);
    assert!(text.contains("H4"), "{text}");
    assert!(text.contains("FAIL"), "{text}");
}

#[test]
fn check_rejects_missing_constants_section() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = trivial_text()
        .lines()
        .take_while(|l| !l.starts_with("[constants]"))
        .map(|l| format!("{l}\n"))
        .collect();
    let path = write_spec(dir.path(), "broken.spec", &text);
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("constants"), "{}", stderr_of(&out));
}

#[test]
fn solve_emits_the_exponential_solution() {
    let out = run(&["solve", spec_path("trivial.spec").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let csv = stdout_of(&out);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema_version=1"));
    assert_eq!(lines.next(), Some("t,x_star,y_star"));
    let mut checked = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let t: f64 = cols[0].parse().unwrap();
        let x: f64 = cols[1].parse().unwrap();
        let y: f64 = cols[2].parse().unwrap();
        assert!((x - (-t).exp()).abs() <= 1e-6, "t = {t}");
        assert!((y - 1.0).abs() <= 1e-12);
        checked += 1;
    }
    assert_eq!(checked, 1001);
}

#[test]
fn solve_respects_the_gate_and_the_override() {
    let dir = tempfile::tempdir().unwrap();
    let text = trivial_text().replace("x0 = 1.0", "x0 = 1.5");
    let path = write_spec(dir.path(), "gate.spec", &text);
    let out = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("gate refused"), "{}", stderr_of(&out));
    // No iteration happened: no solution CSV on stdout.
    assert!(stdout_of(&out).is_empty());

    let out = run(&["solve", path.to_str().unwrap(), "--override-gate"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
}

#[test]
fn solve_reports_singularities_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = trivial_text().replace("b = 0", "b = 0.9") + "\n[lower]\nu = 1.5\nv = 1\n";
    let path = write_spec(dir.path(), "singular.spec", &text);
    let out = run(&["solve", path.to_str().unwrap(), "--override-gate"]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("t = "), "{}", stderr_of(&out));
}

#[test]
fn solve_reports_nonconvergence_with_exit_3_and_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(spec_path("curved.spec"))
        .unwrap()
        .replace("max_outer = 200", "max_outer = 3");
    let path = write_spec(dir.path(), "stalled.spec", &text);
    let trace_path = dir.path().join("trace.csv");
    let out = run(&[
        "solve",
        path.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
    let trace = fs::read_to_string(&trace_path).unwrap();
    assert!(trace.lines().count() >= 3, "{trace}");
}

#[test]
fn recorded_trace_has_a_nondecreasing_min_column() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.csv");
    let out = run(&[
        "solve",
        spec_path("curved.spec").to_str().unwrap(),
        "--record-iterates",
        "--trace",
        trace_path.to_str().unwrap(),
        "--solution",
        dir.path().join("solution.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let trace = fs::read_to_string(&trace_path).unwrap();
    let mut lines = trace.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap();
    let min_idx = header.split(',').position(|c| c == "min").unwrap();
    let mut prev = f64::NEG_INFINITY;
    let mut rows = 0;
    for line in lines {
        let min: f64 = line.split(',').nth(min_idx).unwrap().parse().unwrap();
        assert!(min >= prev - 1e-9, "min column decreased: {min} < {prev}");
        prev = min;
        rows += 1;
    }
    assert!(rows >= 2);
}

#[test]
fn study_prints_a_table_and_rejects_single_grids() {
    let out = run(&[
        "study",
        spec_path("trivial.spec").to_str().unwrap(),
        "--grids",
        "101,201",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let table = stdout_of(&out);
    assert!(table.contains("n_points"), "{table}");
    assert!(table.contains("101"), "{table}");

    let out = run(&[
        "study",
        spec_path("trivial.spec").to_str().unwrap(),
        "--grids",
        "101",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn study_marks_failed_rows_and_continues() {
    // A tabulated lower solution pins the instance to its own grid; study
    // rows on other grids fail individually while the matching one succeeds.
    let dir = tempfile::tempdir().unwrap();
    let text = trivial_text().replace("n_points = 1001", "n_points = 101")
        + &format!("\n[lower]\nu = 0.25\nv = tab({})\n", vec!["1"; 101].join(","));
    let path = write_spec(dir.path(), "pinned.spec", &text);
    let out = run(&["study", path.to_str().unwrap(), "--grids", "101,201"]);
    let table = stdout_of(&out);
    assert!(table.contains("FAILED"), "{table}");
    assert!(table.contains("101"), "{table}");
    // Fewer than two usable rows: the study reports non-convergence.
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
}

#[test]
fn study_marks_roundoff_level_gaps_as_exact() {
    let out = run(&[
        "study",
        spec_path("pure_integration.spec").to_str().unwrap(),
        "--grids",
        "101,201",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let table = stdout_of(&out);
    assert!(table.contains("exact"), "{table}");
}

#[test]
fn json_reports_are_deterministic_up_to_the_meta_block() {
    let dir = tempfile::tempdir().unwrap();
    let json_a = dir.path().join("a.json");
    let json_b = dir.path().join("b.json");
    for (path, _) in [(&json_a, 0), (&json_b, 1)] {
        let out = run(&[
            "check",
            spec_path("curved.spec").to_str().unwrap(),
            "--json",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    }
    let mut a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_a).unwrap()).unwrap();
    let mut b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_b).unwrap()).unwrap();
    assert!(a.get("meta").is_some());
    a.as_object_mut().unwrap().remove("meta");
    b.as_object_mut().unwrap().remove("meta");
    assert_eq!(a, b);
    assert_eq!(a.get("schema_version").unwrap(), "1");
}

#[test]
fn solve_json_report_carries_the_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("run.json");
    let out = run(&[
        "solve",
        spec_path("trivial.spec").to_str().unwrap(),
        "--json",
        json_path.to_str().unwrap(),
        "--solution",
        dir.path().join("solution.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["converged"], serde_json::Value::Bool(true));
    assert_eq!(report["gate_overall"], serde_json::Value::Bool(true));
    assert!(report["oracle_gap"].as_f64().unwrap() <= 1e-6);
    assert!(report["ode_residual"].as_f64().unwrap() <= 2e-6);
}
