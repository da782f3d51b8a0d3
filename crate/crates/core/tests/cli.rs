use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_recourse-sim"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn four_points(dir: &Path) -> PathBuf {
    write(dir, "four.csv", "id,f0,f1\n0,2,0\n1,1,0.5\n2,0,1\n3,-1,0\n")
}

#[test]
fn select_exhaustive_four_points() {
    let dir = tempfile::tempdir().unwrap();
    let pop = four_points(dir.path());
    let out = bin()
        .args([
            "select",
            "--rho",
            "0.5",
            "--lambda",
            "1",
            "--exhaustive",
            "--population",
        ])
        .arg(&pop)
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["w"], serde_json::json!([1.5, 0.25]));
    assert_eq!(v["eta"], 1.625);
    assert_eq!(v["selected_ids"], serde_json::json!([0, 1]));
    assert_eq!(v["alpha_support"], 2);
}

#[test]
fn select_full_tail_is_mean_over_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let pop = four_points(dir.path());
    let out = bin()
        .args(["select", "--rho", "1", "--lambda", "2", "--population"])
        .arg(&pop)
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["w"], serde_json::json!([0.25, 0.1875]));
    assert_eq!(v["rejected_ids"], serde_json::json!([]));
}

#[test]
fn select_missing_file_exits_2() {
    let out = bin()
        .args([
            "select",
            "--rho",
            "0.5",
            "--lambda",
            "1",
            "--population",
            "/nonexistent/pop.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recourse_plans() {
    let dir = tempfile::tempdir().unwrap();
    let pop = write(dir.path(), "pair.csv", "id,f0,f1\n10,1,2\n11,0,2\n");
    let query = |id: &str| {
        bin()
            .args([
                "recourse",
                "--rho",
                "0.5",
                "--lambda",
                "1",
                "--actionable",
                "1",
                "--id",
                id,
                "--population",
            ])
            .arg(&pop)
            .output()
            .unwrap()
    };
    // w = (1, 2), eta = 5; candidate 11 scores 4, margin 1.
    let rejected = json(&query("11"));
    assert_eq!(rejected["candidate_id"], 11);
    assert_eq!(rejected["action"], serde_json::json!([0.0, 0.5]));
    assert_eq!(rejected["cost"], 0.125);
    assert_eq!(rejected["margin"], 1.0);
    assert_eq!(rejected["feasible"], true);

    let selected = json(&query("10"));
    assert_eq!(selected["action"], serde_json::json!([0.0, 0.0]));
    assert_eq!(selected["cost"], 0.0);

    assert_eq!(query("99").status.code(), Some(2));
}

#[test]
fn recourse_infeasible_when_weight_is_immutable() {
    let dir = tempfile::tempdir().unwrap();
    let pop = write(dir.path(), "flat.csv", "id,f0,f1\n0,3,0\n1,1,0\n");
    let out = bin()
        .args([
            "recourse",
            "--rho",
            "0.5",
            "--lambda",
            "1",
            "--actionable",
            "1",
            "--id",
            "1",
            "--population",
        ])
        .arg(&pop)
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["feasible"], false);
    assert!(v["cost"].is_null());
}

#[test]
fn run_gre_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = bin()
            .args(["run", "--config"])
            .arg(scenario("gre_case_study.json"))
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let line = String::from_utf8(out.stdout).unwrap();
        assert!(line.starts_with("steps="), "{line}");
    }
    let trace = fs::read(a.path().join("gre_trace.csv")).unwrap();
    assert_eq!(trace, fs::read(b.path().join("gre_trace.csv")).unwrap());
    assert_eq!(
        fs::read(a.path().join("gre_snapshots.jsonl")).unwrap(),
        fs::read(b.path().join("gre_snapshots.jsonl")).unwrap()
    );
    let rows = String::from_utf8(trace).unwrap().lines().count() - 1;
    assert!((1..=60).contains(&rows));
}

#[test]
fn run_structural_stops_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(scenario("structural_equilibrium.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(
        line.contains("steps=1") && line.contains("equilibrium=structural"),
        "{line}"
    );
}

#[test]
fn run_rejects_non_integral_tail() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("gre_case_study.json"))
        .unwrap()
        .replace("\"rho\": 0.2", "\"rho\": 0.123");
    let cfg = write(dir.path(), "bad.json", &text);
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho"));
}

#[test]
fn run_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("gre_case_study.json"))
        .unwrap()
        .replace("\"horizon\"", "\"horizn\"");
    let cfg = write(dir.path(), "typo.json", &text);
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_round_trips_through_select() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "spec.json",
        r#"{"n": 20,
            "partition": {"dim": 2, "actionable": [1], "ceiling_index": 1, "ceiling_value": 340},
            "features": [{"kind": "uniform", "min": 2, "max": 4},
                         {"kind": "gaussian", "mean": 300, "std_dev": 20, "min": 260, "max": 335}],
            "effort": {"beta": 1, "k": {"min": 0.5, "max": 2}, "theta": 1}}"#,
    );
    let gen = |name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["generate", "--seed", "3", "--spec"])
            .arg(&spec)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(out).unwrap()
    };
    let first = gen("a.csv");
    assert_eq!(first, gen("b.csv"));
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("id,f0,f1,beta,k,theta\n"));
    assert_eq!(text.lines().count(), 21);

    let out = bin()
        .args([
            "select",
            "--rho",
            "0.25",
            "--lambda",
            "0.5",
            "--actionable",
            "1",
            "--population",
        ])
        .arg(dir.path().join("a.csv"))
        .output()
        .unwrap();
    assert_eq!(json(&out)["selected_ids"].as_array().unwrap().len(), 5);
}

#[test]
fn verify_fast_exits_zero() {
    let out = bin().args(["verify", "--fast"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);
}
