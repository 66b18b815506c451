use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semiflat-collapse"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

const FAMILY: &str = r#"{ "n": 1, "base": {"intervals": [[-0.5, 0.5], [-0.5, 0.5]]},
  "period": [[{"c": [0, 1], "p": [0]}, {"c": [0.1, 0], "p": [2]}]] }"#;

#[test]
fn normal_form_reports_frobenius_data() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.json", "[[0,2,0,0],[-2,0,0,0],[0,0,0,6],[0,0,-6,0]]");
    let out = run(&["normal-form", "--q", q.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
    assert_eq!(v["frobenius"]["divisors"], serde_json::json!([2, 6]));
    assert_eq!(v["frobenius"]["det_A"].as_i64().unwrap().abs(), 1);
}

#[test]
fn normal_form_rejects_non_skew_input() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "q.json", "[[1,2],[3,4]]");
    let out = run(&["normal-form", "--q", q.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn period_outputs_expected_keys() {
    let dir = tempfile::tempdir().unwrap();
    let lat = write(dir.path(), "lat.json", r#"{"lattice": [[[1,0],[0.3,1.2]]]}"#);
    let out = run(&["period", "--lattice", lat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["R", "Z", "H", "residuals"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!((v["Z"][0][0][0].as_f64().unwrap() - 0.3).abs() < 1e-14);
    assert!((v["Z"][0][0][1].as_f64().unwrap() - 1.2).abs() < 1e-14);
    // H = (Im Z)⁻¹ / 2 for R = 1
    assert!((v["H"][0][0][0].as_f64().unwrap() - 0.5 / 1.2).abs() < 1e-14);
}

#[test]
fn period_flags_non_positive_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let lat = write(dir.path(), "lat.json", r#"[[[1,0],[0.3,-1.2]]]"#);
    let out = run(&["period", "--lattice", lat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gtz_csv_has_key_value_rows() {
    let dir = tempfile::tempdir().unwrap();
    let lat = write(dir.path(), "lat.json", r#"[[[1,0],[0.3,1.2]]]"#);
    let out = run(&["gtz", "--lattice", lat.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.lines().any(|l| l.starts_with("z0[0][0][1],1.2")));
}

#[test]
fn gm_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let fam = write(dir.path(), "fam.json", FAMILY);
    let out = run(&["gm-check", "--family", fam.to_str().unwrap(), "--grid", "5"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["constant"], Value::Bool(true));
    let out = run(&["gm-check", "--family", fam.to_str().unwrap(), "--grid", "5", "--twist", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["constant"], Value::Bool(false));
}

#[test]
fn verify_writes_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let fam = write(dir.path(), "fam.json", FAMILY);
    let report = dir.path().join("report.json");
    let out = run(&[
        "verify",
        "--family",
        fam.to_str().unwrap(),
        "--checks",
        "scaling,pluriharmonic,semipositive,deck",
        "--grid",
        "5",
        "--max-points",
        "100",
        "--seed",
        "7",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v.to_string().contains("semipositive"));
}

#[test]
fn verify_rejects_unknown_check() {
    let dir = tempfile::tempdir().unwrap();
    let fam = write(dir.path(), "fam.json", FAMILY);
    let out = run(&["verify", "--family", fam.to_str().unwrap(), "--checks", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_matches_closed_form_on_zero_section() {
    let dir = tempfile::tempdir().unwrap();
    let fam = write(dir.path(), "fam.json", FAMILY);
    let out = run(&["eval", "--family", fam.to_str().unwrap(), "--point", "(0, 0)"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["eta"].as_f64().unwrap(), 0.0);
    // fiber block ½(Im Z)⁻¹ with Z(0) = i
    assert!((v["ddbar_eta"][1][1][0].as_f64().unwrap() - 0.5).abs() < 1e-14);
    let out = run(&["eval", "--family", fam.to_str().unwrap(), "--point", "(0.1)"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_field_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "model.json", r#"{"kind": "quadratic", "alpha": 0.1}"#);
    let phi = dir.path().join("phi.bin");
    let out = run(&[
        "solve",
        "--model",
        model.to_str().unwrap(),
        "--t",
        "0.1",
        "--nb",
        "8",
        "--nf",
        "8",
        "--out",
        phi.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["solve"]["converged"], Value::Bool(true));
    let (header, data) = semiflat_core::collapse::read_field(&phi).unwrap();
    assert_eq!(header.dims, vec![9, 9, 8, 8]);
    assert_eq!(data.len(), 9 * 9 * 8 * 8);
    let sup = data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert_eq!(sup, v["sup_phi"].as_f64().unwrap());
    assert!(dir.path().join("phi.json").exists());
}

#[test]
fn solve_non_convergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"solver": {"max_newton": 1, "newton_tol": 1e-12}}"#);
    let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--t", "0.1", "--nb", "8", "--nf", "8"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn solve_rejects_invalid_settings() {
    let out = run(&["solve", "--t", "-1", "--nb", "8", "--nf", "8"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["solve", "--t", "0.1", "--nb", "2", "--nf", "8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_csv_lists_each_t() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"model": {"kind": "constant", "tau": [0, 1]}, "diagnostics": {"k_max": 1}}"#);
    let csv = dir.path().join("out.csv");
    let out = run(&[
        "experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--nb",
        "8",
        "--nf",
        "8",
        "--t-list",
        "1,0.1",
        "--no-refine",
        "--format",
        "csv",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let c_k = headers.iter().position(|h| h == "c_k").unwrap();
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!((r[c_k].parse::<f64>().unwrap() - 2.0).abs() < 1e-6);
    }
}

#[test]
fn missing_input_file_is_a_validation_error() {
    let out = run(&["normal-form", "--q", "/nonexistent/q.json"]);
    assert_eq!(out.status.code(), Some(2));
}
