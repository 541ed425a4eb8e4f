use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ommap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ommap")).args(args).current_dir(dir).env_remove("OMMAP_THREADS").output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

const MAP: &str = r#"{
  "kind": "map_solve",
  "problem": {
    "prior": {"type": "gaussian", "mean": [0.0], "eigenvalues": [1.0]},
    "observation": {"matrix": [[1.0]], "noise_cov": [1.0], "data": [2.0]}
  }
}"#;

const BALL: &str = r#"{
  "kind": "ball_ratio",
  "measure": {"type": "besov1", "s": 1.0, "d": 1, "eta": 1.0, "dim": 3},
  "x1": [0.2, 0.0, 0.0],
  "x2": [0.0, 0.0, 0.0],
  "radii": {"r0": 0.05, "levels": 3},
  "options": {"mc_samples": 20000}
}"#;

#[test]
fn map_solve_in_one_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "map.json", MAP);
    let out = ommap(&["run", &cfg, "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("res/results.json")).unwrap()).unwrap();
    assert_eq!(doc["kind"], "map_solve");
    let map = doc["report"]["map"][0].as_f64().unwrap();
    assert!((map - 1.0).abs() < 1e-12, "{map}");
    let csv = fs::read_to_string(dir.path().join("res/map.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("coordinate,map_value"));
}

#[test]
fn liminf_only_epsilon_ratios_are_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"kind": "counterexample", "example": {"name": "liminf_only", "n_max": 10}}"#);
    let out = ommap(&["run", &cfg, "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("res/liminf_only_ratios.csv")).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == "epsilon_ratio").unwrap();
    let mut rows = 0;
    for rec in r.records() {
        let v: f64 = rec.unwrap()[col].parse().unwrap();
        assert!((v - 2.0).abs() < 1e-12, "{v}");
        rows += 1;
    }
    assert_eq!(rows, 10);
}

#[test]
fn schema_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write(dir.path(), "a.json", r#"{"problem": {}}"#);
    let out = ommap(&["run", &missing], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind"));

    let unknown = write(dir.path(), "b.json", &MAP.replace("\"problem\"", "\"bogus\": 1,\n  \"problem\""));
    let out = ommap(&["validate", &unknown], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("line 3"), "{err}");

    let syntax = write(dir.path(), "c.json", "{\"kind\": ");
    assert_eq!(ommap(&["validate", &syntax], dir.path()).status.code(), Some(2));

    let bad_value = write(dir.path(), "d.json", &MAP.replace("[1.0]}", "[-1.0]}"));
    assert_eq!(ommap(&["run", &bad_value], dir.path()).status.code(), Some(2));
}

#[test]
fn validate_accepts_a_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "map.json", MAP);
    let out = ommap(&["validate", &cfg], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("map_solve"));
    assert!(!dir.path().join("results").exists());
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ball.json", BALL);
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["run", cfg.as_str(), "--out", out];
        args.extend_from_slice(extra);
        let o = ommap(&args, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(dir.path().join(out).join("results.json")).unwrap()
    };
    let a = run("a", &["--seed", "11", "--threads", "1"]);
    let b = run("b", &["--seed", "11", "--threads", "4"]);
    let c = run("c", &["--seed", "12"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn reproduce_writes_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = ommap(&["reproduce", "fig1b", "--out", "figs"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("figs/fig1b.csv")).unwrap();
    assert_eq!(r.headers().unwrap().len(), 6);
    assert!(r.records().count() > 100);
    assert!(dir.path().join("figs/fig1b_markers.csv").exists());
    assert_eq!(ommap(&["reproduce", "fig9"], dir.path()).status.code(), Some(2));
}

#[test]
fn shipped_examples_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let out = ommap(&["validate", path.to_str().unwrap()], &dir);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        seen += 1;
    }
    assert!(seen >= 8);
}
