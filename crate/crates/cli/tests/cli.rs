//! End-to-end tests against the compiled binary: exit codes, file
//! emission, flag overrides, and byte-level determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn matsym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matsym"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_body(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn isotropic_body() -> &'static str {
    r#"{
        "grid": {"box": [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], "dims": [5, 5, 5]},
        "model": {"id": "neo_hookean", "params": {"mu": 1.0, "lambda": 1.3}},
        "analysis": {"seed": 7}
    }"#
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn report_json(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn report_runs_and_writes_the_selected_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(tmp.path(), "body.json", isotropic_body());
    let out = tmp.path().join("out");

    let run = matsym(&[
        "report", "--input", &input, "--out", out.to_str().unwrap(),
        "--format", "json", "--format", "txt", "--format", "csv",
    ]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
    let text = stdout(&run);
    assert!(text.contains("homogeneous = true"), "{text}");
    assert!(text.contains("wrote"), "{text}");

    assert!(out.join("report.txt").is_file());
    assert!(out.join("fields/curvature.csv").is_file());
    let report = report_json(&out);
    assert_eq!(report["schema_version"], "1");
    assert_eq!(report["provenance"]["tool"], "matsym");
    assert_eq!(report["provenance"]["seed"], 7);
    assert_eq!(report["homogeneity"]["status"], "ran");
    assert_eq!(report["homogeneity"]["homogeneous"], true);
}

#[test]
fn same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(tmp.path(), "body.json", isotropic_body());
    let mut reports = Vec::new();
    for sub in ["a", "b"] {
        let out = tmp.path().join(sub);
        let run = matsym(&[
            "report", "--input", &input, "--out", out.to_str().unwrap(), "--format", "json",
        ]);
        assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn seed_flag_overrides_the_description() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(tmp.path(), "body.json", isotropic_body());
    let out = tmp.path().join("out");
    let run = matsym(&[
        "classify", "--input", &input, "--seed", "11", "--out", out.to_str().unwrap(),
        "--format", "json",
    ]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
    assert_eq!(report_json(&out)["provenance"]["seed"], 11);
}

#[test]
fn classify_verb_skips_downstream_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(tmp.path(), "body.json", isotropic_body());
    let out = tmp.path().join("out");
    let run = matsym(&[
        "classify", "--input", &input, "--out", out.to_str().unwrap(), "--format", "json",
    ]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));

    let report = report_json(&out);
    assert_eq!(report["classification"]["status"], "ran");
    assert_eq!(report["uniformity"]["status"], "skipped");
    assert_eq!(report["uniformity"]["reason"], "not requested");
    assert_eq!(report["homogeneity"]["status"], "skipped");
}

#[test]
fn format_flags_override_the_description() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(tmp.path(), "body.json", isotropic_body());
    let out = tmp.path().join("out");
    let run = matsym(&[
        "classify", "--input", &input, "--out", out.to_str().unwrap(), "--format", "json",
    ]);
    assert_eq!(run.status.code(), Some(0));
    assert!(out.join("report.json").is_file());
    // Default formats would have included report.txt.
    assert!(!out.join("report.txt").exists());
}

#[test]
fn empty_format_list_warns_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(
        tmp.path(),
        "body.json",
        r#"{
            "grid": {"box": [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], "dims": [5, 5, 5]},
            "model": {"id": "fluid", "params": {"kappa": 2.0}},
            "analysis": {"stages": ["classify"], "seed": 1},
            "output": {"formats": []}
        }"#,
    );
    let out = tmp.path().join("out");
    let run = matsym(&["report", "--input", &input, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
    assert!(stderr(&run).contains("no output formats selected"));
    assert!(!out.exists());
}

#[test]
fn missing_input_exits_two() {
    let run = matsym(&["report", "--input", "/nonexistent/body.json"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("error:"));
}

#[test]
fn syntax_error_reports_the_position() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(tmp.path(), "body.json", "{\n  \"model\": {,}\n}");
    let run = matsym(&["report", "--input", &input]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("line 2"), "{}", stderr(&run));
}

#[test]
fn undersized_grid_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(
        tmp.path(),
        "body.json",
        r#"{
            "grid": {"box": [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]], "dims": [3, 3, 3]},
            "model": {"id": "fluid", "params": {"kappa": 2.0}}
        }"#,
    );
    let run = matsym(&["report", "--input", &input]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("grid.dims"), "{}", stderr(&run));
}

#[test]
fn negative_tolerance_flag_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_body(tmp.path(), "body.json", isotropic_body());
    let run = matsym(&["report", "--input", &input, "--tol-sym", "-0.5"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("--tol-sym"), "{}", stderr(&run));
}
