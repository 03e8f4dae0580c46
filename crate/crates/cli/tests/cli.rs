use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_watatani"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON report")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_scenario(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn index_of_s3_over_a_transposition_is_three() {
    let r = report(&["index", path_str(&scenario("s3_index.json"))]);
    let res = &r["result"];
    assert!((res["index_scalar"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert_eq!(res["basis_size"], 3);
    assert_eq!(res["oracle"]["match"], true);
    assert_eq!(r["command"], "index");
}

#[test]
fn d4_angle_has_cosine_one_third() {
    let r = report(&["angle", path_str(&scenario("d4_angle.json"))]);
    let res = &r["result"];
    assert!((res["cos"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-8);
    assert!(res["path_disagreement"].as_f64().unwrap() < 1e-8);
    assert_eq!(res["oracle_match"], true);
    assert_eq!(res["commuting_square"], false);
}

#[test]
fn verify_passes_on_a_fixture() {
    let out = run(&["verify", path_str(&scenario("s3_index.json"))]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["result"]["passed"], true);
    let checks = r["result"]["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn validate_accepts_a_fixture() {
    let r = report(&["validate", path_str(&scenario("s3_index.json"))]);
    assert_eq!(r["result"]["valid"], true);
    assert_eq!(r["result"]["group_order"], 6);
    assert_eq!(r["result"]["h_order"], 2);
}

#[test]
fn validate_reports_broken_containment() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        &dir,
        "bad.json",
        r#"{"kind": "group", "group": {"preset": "s3"}, "h": ["(1 2)"], "k": ["(2 3)"], "l": ["(1 2 3)"]}"#,
    );
    let out = run(&["validate", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["result"]["valid"], false);
    assert!(r["result"]["error"].as_str().unwrap().contains("k does not contain h"));
}

#[test]
fn validate_reports_cycle_parse_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        &dir,
        "bad.json",
        r#"{"kind": "group", "group": {"preset": "s3"}, "h": ["(1 2"]}"#,
    );
    let out = run(&["validate", path_str(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("position 4"), "{stderr}");
}

#[test]
fn unreadable_scenario_exits_with_two() {
    for cmd in ["validate", "index", "angle"] {
        let out = run(&[cmd, "/nonexistent/scenario.json"]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
    }
}

#[test]
fn d4_lattice_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("lattice.json");
    let out = run(&[
        "lattice",
        path_str(&scenario("d4_lattice.json")),
        "--out",
        path_str(&out_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let res = &r["result"];
    assert_eq!(res["intermediate_count"], 8);
    assert_eq!(res["pair_count"], 28);
    assert_eq!(res["all_within_tol"], true);
    let csv = std::fs::read_to_string(dir.path().join("lattice.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 9);
    assert_eq!(lines[0].split(',').count(), 9);
}

#[test]
fn s3_lattice_is_all_right_angles() {
    let r = report(&["lattice", path_str(&scenario("s3_lattice.json"))]);
    let pairs = r["result"]["pairs"].as_array().unwrap();
    assert!(!pairs.is_empty());
    for p in pairs {
        assert!((p["angle"].as_f64().unwrap() - FRAC_PI_2).abs() < 1e-8, "{p}");
        assert_eq!(p["commuting_square"], true);
    }
}

#[test]
fn lattice_over_the_whole_group_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        &dir,
        "top.json",
        r#"{"kind": "group", "group": {"preset": "s3"}, "h": ["(1 2)", "(1 2 3)"]}"#,
    );
    let r = report(&["lattice", path_str(&path)]);
    assert_eq!(r["result"]["intermediate_count"], 0);
    assert_eq!(r["result"]["pair_count"], 0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let file = scenario("custom_state.json");
    let a = run(&["index", path_str(&file), "--seed", "5"]);
    let b = run(&["index", path_str(&file), "--seed", "5"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn table_format_lists_flattened_keys() {
    let out = run(&["index", path_str(&scenario("s3_index.json")), "--format", "table"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("command") && l.ends_with("index")));
    assert!(text.lines().any(|l| l.starts_with("result.index_scalar")));
    assert!(!text.contains("scenario.kind"));
}
