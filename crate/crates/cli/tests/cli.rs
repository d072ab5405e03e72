use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_routesignal"))
        .args(args)
        .env_remove("ROUTESIGNAL_TOL")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(name: &str) -> String {
    scenario(name).to_str().unwrap().to_string()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn optimum_of_two_links() {
    let v = json(&["optimum", &path("ex1.json")]);
    assert!((num(&v["cost"]) - 2.375).abs() < 1e-12);
    assert_eq!(v["full_support"], true);
    assert_eq!(v["method"], "closed_form");
}

#[test]
fn five_node_optimum_has_full_support() {
    let v = json(&["optimum", &path("ex3.json")]);
    assert_eq!(v["full_support"], true);
    let c = json(&["check", &path("ex3.json")]);
    for b in c["certificate"]["mean_b"].as_array().unwrap() {
        assert!((num(b) - 5.0).abs() < 1e-12);
    }
}

#[test]
fn public_rules_cost_the_same() {
    for rule in ["noinfo", "fullinfo"] {
        let v = json(&["bwe", &path("ex1.json"), "--rule", rule]);
        assert!((num(&v["cost"]) - 2.4).abs() < 1e-9, "{rule}");
        assert_eq!(v["equilibrium"], true);
    }
}

#[test]
fn parameter_override() {
    let v = json(&["optimum", &path("ex1.json"), "--set", "x=0.8"]);
    assert!((num(&v["cost"]) - (479.0 / 200.0 - 0.08)).abs() < 1e-12);
}

#[test]
fn check_verdicts() {
    let v = json(&["check", &path("ex2.json")]);
    let verdict = &v["certificate"]["verdict"];
    assert_eq!(verdict["status"], "not_achievable");
    assert_eq!((verdict["i"].as_u64(), verdict["j"].as_u64()), (Some(0), Some(1)));

    let v = json(&["check", &path("ex3.json")]);
    assert!(num(&v["certificate"]["v"][0][2]) < 0.0);
    assert_eq!(v["certificate"]["verdict"]["status"], "not_achievable");
    assert_eq!(v["certificate"]["flags"]["v_metzler"], false);

    let v = json(&["check", &path("fig4.json")]);
    assert_eq!(v["certificate"]["verdict"]["status"], "inapplicable");
    assert_eq!(v["achievability"]["verdict"]["status"], "inapplicable");
}

const SYMMETRIC: &str = r#"{
    "schema_version": 1,
    "parameters": {"rate": 1},
    "network": {
        "nodes": ["o", "d"],
        "links": [
            {"id": "a", "tail": "o", "head": "d", "alpha": 2},
            {"id": "b", "tail": "o", "head": "d", "alpha": 2},
            {"id": "c", "tail": "o", "head": "d", "alpha": 2}
        ],
        "throughput": [{"origin": "o", "destination": "d", "rate": "rate"}]
    },
    "distribution": {"atoms": [{"theta": [1, 1, 1], "prob": 1}]}
}"#;

#[test]
fn symmetric_deterministic_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sym.json");
    std::fs::write(&file, SYMMETRIC).unwrap();
    let f = file.to_str().unwrap();
    let v = json(&["check", f]);
    assert_eq!(v["certificate"]["verdict"]["status"], "achievable");

    let ni = json(&["bwe", f, "--rule", "noinfo"]);
    let fi = json(&["bwe", f, "--rule", "fullinfo"]);
    assert_eq!(ni["link_flow"], fi["link_flow"]);

    let zero = json(&["optimum", f, "--set", "rate=0"]);
    assert_eq!(num(&zero["cost"]), 0.0);
    assert!(zero["atoms"][0]["link_flow"].as_array().unwrap().iter().all(|x| num(x) == 0.0));
}

#[test]
fn rule_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("rule.json");
    // fully informative with different message names
    std::fs::write(
        &file,
        r#"{"messages": ["high", "low"], "entries": [
            {"state": 0, "od": ["o", "d"], "probs": [1, 0]},
            {"state": 1, "od": ["o", "d"], "probs": [0, 1]}]}"#,
    )
    .unwrap();
    let v = json(&["bwe", &path("ex1.json"), "--rule", file.to_str().unwrap()]);
    assert!((num(&v["cost"]) - 2.4).abs() < 1e-9);

    std::fs::write(&file, r#"{"messages": ["m"], "entries": []}"#).unwrap();
    let out = run(&["bwe", &path("ex1.json"), "--rule", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn design_reaches_optimum_when_achievable() {
    let v = json(&["design", &path("ex1.json"), "--set", "x=0.7"]);
    assert!((num(&v["design"]["cost"]) - num(&v["cost_optimum"])).abs() < 1e-6);
    assert_eq!(v["design"]["slacks"]["pass"], true);
}

fn sweep_rows(csv: &str) -> Vec<Vec<String>> {
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("param,cost_optimum,cost_noinfo,cost_fullinfo,cost_bestrule,achievable")
    );
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn sweep_reproduces_two_link_curves() {
    let out = run(&["sweep", &path("ex1.json"), "--param", "x", "--range", "0:0.8", "--steps", "81"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows = sweep_rows(&csv);
    assert_eq!(rows.len(), 81);
    for r in &rows {
        let x: f64 = r[0].parse().unwrap();
        let opt: f64 = r[1].parse().unwrap();
        assert!((opt - (479.0 / 200.0 - x * x / 8.0)).abs() < 1e-9, "x = {x}");
        assert_eq!(r[2], "2.4");
        let expected = if x >= 0.6 - 1e-9 { "true" } else { "false" };
        assert_eq!(r[5], expected, "x = {x}");
    }

    // byte-identical on repeat, and through --out
    let again = run(&["sweep", &path("ex1.json"), "--param", "x", "--range", "0:0.8", "--steps", "81"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sweep.csv");
    let out = run(&[
        "sweep",
        &path("ex1.json"),
        "--param",
        "x",
        "--range",
        "0:0.8",
        "--steps",
        "81",
        "--out",
        file.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(file).unwrap(), csv);
}

#[test]
fn sweep_defaults_from_scenario() {
    let out = run(&["sweep", &path("ex3.json"), "--steps", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = sweep_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 4);
    // no uncertainty at sigma = 0: deterministic Wardrop vs optimum
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[3][0], "0.15");
    assert_eq!(rows[3][5], "false");
}

#[test]
fn validation_errors_exit_with_two() {
    assert_eq!(run(&["optimum", "/nonexistent.json"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    std::fs::write(&file, "{\"schema_version\": 1}").unwrap();
    assert_eq!(run(&["check", file.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["optimum", &path("ex1.json"), "--set", "x=9"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", &path("fig4.json")]).status.code(), Some(2));
    assert_eq!(run(&["sweep", &path("ex1.json"), "--range", "1:0"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_routesignal"))
        .args(["optimum", &path("ex1.json")])
        .env("ROUTESIGNAL_TOL", "-1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tolerance_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_routesignal"))
        .args(["bwe", &path("ex1.json"), "--rule", "fullinfo"])
        .env("ROUTESIGNAL_TOL", "1e-4")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(num(&v["gap"]) <= 1e-4);
}
