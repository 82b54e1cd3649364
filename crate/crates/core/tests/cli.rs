use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn popcoupling(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popcoupling")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn renewal(d: Value) -> Value {
    json!({"name": "renewal", "g": {"kind": "constant", "value": 1.0}, "d": d,
        "birth": {"kind": "atoms", "values": [0.0], "weights": [1.0]}})
}

fn validate(model: Value, a: f64) -> Output {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({"model": model, "a": a, "grid": {"lower": [0.0], "upper": [10.0], "points": [401]}});
    let path = write(tmp.path(), "cfg.json", &cfg.to_string());
    popcoupling(&["validate-a", "--config", &path])
}

#[test]
fn validate_a_exit_codes() {
    let constant = json!({"kind": "constant", "value": 1.0});
    let identity = json!({"kind": "power", "alpha": 0.0, "beta": 1.0, "p": 1.0});
    let affine = json!({"kind": "power", "alpha": 1.0, "beta": 1.0, "p": 1.0});
    for a in [0.01, 1.0, 7.0] {
        assert_eq!(validate(renewal(constant.clone()), a).status.code(), Some(0));
        assert_eq!(validate(renewal(identity.clone()), a).status.code(), Some(2));
    }
    assert_eq!(validate(renewal(affine), 1.0).status.code(), Some(0));
}

#[test]
fn violation_reports_a_witness_near_the_origin() {
    let tmp = tempfile::tempdir().unwrap();
    let model = renewal(json!({"kind": "power", "alpha": 0.0, "beta": 1.0, "p": 1.0}));
    let path = write(tmp.path(), "cfg.json", &json!({"model": model, "a": 0.5}).to_string());
    let dir = tmp.path().join("out");
    let out = popcoupling(&["validate-a", "--config", &path, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violated"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let w = &summary["report"]["admissibility"];
    assert_eq!(w["status"], "violated");
    let x = w["first"]["Age"].as_f64().unwrap();
    let y = w["second"]["Age"].as_f64().unwrap();
    assert!(x.max(y) < 0.1, "{w}");
    assert!(w["bound"].as_f64().unwrap() < w["candidate"].as_f64().unwrap());
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({"model": renewal(json!({"kind": "constant", "value": 1.0})), "a": 1.0, "colour": "red"});
    let path = write(tmp.path(), "cfg.json", &cfg.to_string());
    let out = popcoupling(&["validate-a", "--config", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    assert_eq!(popcoupling(&["contract"]).status.code(), Some(1));
    assert_eq!(popcoupling(&["validate-a", "--config", "/nonexistent.json"]).status.code(), Some(1));
}

fn ot(mu: &str, nu: &str, extra: &[&str]) -> (f64, tempfile::TempDir) {
    let tmp = tempfile::tempdir().unwrap();
    let m = write(tmp.path(), "mu.csv", mu);
    let n = write(tmp.path(), "nu.csv", nu);
    let mut args = vec!["ot", m.as_str(), n.as_str()];
    args.extend_from_slice(extra);
    let out = popcoupling(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    (String::from_utf8(out.stdout).unwrap().trim().parse().unwrap(), tmp)
}

#[test]
fn ot_reproduces_small_instances() {
    assert_eq!(ot("0,1\n", "3,1\n", &["--a", "1"]).0, 1.0);
    let (c, _) = ot("age,weight\n0,0.5\n2,0.5\n", "0.5,0.5\n2.1,0.5\n", &["--a", "1"]);
    assert!((c - 0.3).abs() < 1e-12);
    let (c, _) = ot("0,0.5\n1,0.5\n", "0.9,0.5\n10,0.5\n", &["--a", "2"]);
    assert!((c - 1.05).abs() < 1e-12);
    assert_eq!(ot("0,0.25\n4,0.75\n", "0,0.25\n4,0.75\n", &["--a", "2"]).0, 0.0);
}

#[test]
fn ot_writes_the_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let plan = tmp.path().join("plan.csv");
    let (c, _) = ot("0,0.5\n1,0.5\n", "0.9,0.5\n10,0.5\n", &["--a", "2", "--plan", plan.to_str().unwrap()]);
    assert!((c - 1.05).abs() < 1e-12);
    let text = fs::read_to_string(plan).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows, ["src_index,dst_index,mass", "0,1,0.5", "1,0,0.5"]);
}

#[test]
fn identical_initial_laws_give_zero_cost_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let init = json!({"kind": "atoms", "points": [[0.0], [1.0], [2.5]], "weights": [0.2, 0.3, 0.5]});
    let cfg = json!({"model": renewal(json!({"kind": "power", "alpha": 1.0, "beta": 1.0, "p": 1.0})), "a": 1.0,
        "n_particles": 2000, "horizon": 2.0, "seed": 4, "initial": {"first": init, "second": init}});
    let path = write(tmp.path(), "cfg.json", &cfg.to_string());
    let out_dir = tmp.path().join("out");
    let out = popcoupling(&["contract", "--config", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(out_dir.join("contract.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "time");
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        for col in 1..5 {
            assert_eq!(rec[col].parse::<f64>().unwrap(), 0.0, "{rec:?}");
        }
        assert_eq!(&rec[5], "2000");
        assert_eq!(&rec[7], "0");
        rows += 1;
    }
    assert!(rows >= 2);
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["report"]["passed"], true);
    assert!(summary["outputs"]["contract.csv"].as_str().unwrap().len() == 64);
}
