mod common;

use common::surface_path;
use std::process::{Command, Output};

fn flatflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatflow")).args(args).output().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn validate_prints_schema_and_invariants() {
    let oct = surface_path("octagon");
    let o = flatflow(&["validate", &oct]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "validate");
    assert!(v["config"]["tol_geom"].is_number());
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(flatflow(&[]).status.code(), Some(64));
    assert_eq!(flatflow(&["frobnicate"]).status.code(), Some(64));
    let oct = surface_path("octagon");
    assert_eq!(flatflow(&["saddles", &oct, "--max-len", "many"]).status.code(), Some(64));
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let torus = dir.path().join("torus.surf");
    std::fs::write(
        &torus,
        r#"{"name": "torus",
            "polygons": [{"id": 0, "vertices": [[0,0],[1,0],[1,1],[0,1]]}],
            "gluings": [{"from": [0,0], "to": [0,2]}, {"from": [0,1], "to": [0,3]}]}"#,
    )
    .unwrap();
    let o = flatflow(&["validate", torus.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let missing = dir.path().join("missing.surf");
    assert_eq!(flatflow(&["validate", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn budget_exhaustion_exits_3() {
    let oct = surface_path("octagon");
    let o = flatflow(&["--max-charts", "3", "saddles", &oct, "--max-len", "10"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn empty_csv_keeps_its_header() {
    let oct = surface_path("octagon");
    let o = flatflow(&["saddles", &oct, "--max-len", "0.1", "--out", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.iter().any(|l| l.starts_with("# schema")));
    let data: Vec<&&str> = lines.iter().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 1, "expected only the column row: {text}");
}

#[test]
fn saddles_match_between_csv_and_json() {
    let oct = surface_path("octagon");
    let j = json(&flatflow(&["saddles", &oct, "--max-len", "2", "--out", "json"]));
    let rows = j["result"]["connections"].as_array().map(|a| a.len());
    let csv = String::from_utf8(flatflow(&["saddles", &oct, "--max-len", "2", "--out", "csv"]).stdout).unwrap();
    let n = csv.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, Some(24));
    assert_eq!(n, 24);
}
