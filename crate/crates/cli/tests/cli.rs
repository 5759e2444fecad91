use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_robust-rank");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ROBUST_RANK_JOBS").output().expect("binary runs")
}

fn write_csv(dir: &Path, name: &str, rows: &[(&str, &str, &str, f64)]) -> PathBuf {
    let mut text = String::from("rater,item_i,item_j,value\n");
    for (r, i, j, v) in rows {
        text.push_str(&format!("{r},{i},{j},{v}\n"));
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every pair of five items compared twice with exact score differences,
/// except row 3 which is reversed and inflated.
fn planted_flip(dir: &Path) -> PathBuf {
    let names = ["A", "B", "C", "D", "E"];
    let s = [2.0, 1.0, 0.0, -1.0, -2.0];
    let mut rows = Vec::new();
    for _ in 0..2 {
        for i in 0..5 {
            for j in i + 1..5 {
                rows.push(("u", names[i], names[j], s[i] - s[j]));
            }
        }
    }
    rows[3].3 = -6.0;
    write_csv(dir, "flip.csv", &rows)
}

#[test]
fn rank_recovers_consistent_scores() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "tri.csv", &[("u", "A", "B", 1.0), ("u", "B", "C", 1.0), ("v", "A", "C", 2.0)]);
    let report = dir.path().join("r.json");
    let matrix = dir.path().join("m.csv");
    let out = run(&[
        "rank",
        "--input",
        input.to_str().unwrap(),
        "--output",
        report.to_str().unwrap(),
        "--matrix",
        matrix.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = json(&report);
    assert_eq!(r["method"], "ls");
    for (label, want) in [("A", 1.0), ("B", 0.0), ("C", -1.0)] {
        assert!((r["items"][label].as_f64().unwrap() - want).abs() < 1e-12);
    }
    assert_eq!(r["components"].as_array().unwrap().len(), 1);
    assert!(r["outliers"].as_array().unwrap().is_empty());
    assert_eq!(fs::read_to_string(&matrix).unwrap(), ",A,B,C\nA,0,1,1\nB,0,0,1\nC,0,0,0\n");
}

#[test]
fn rank_reports_components() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "two.csv", &[("u", "A", "B", 1.0), ("u", "C", "D", -1.0)]);
    let report = dir.path().join("r.json");
    let out = run(&["rank", "--input", input.to_str().unwrap(), "--output", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = json(&report);
    let comps = r["components"].as_array().unwrap();
    assert_eq!(comps.len(), 2);
    assert!((r["items"]["C"].as_f64().unwrap() + 0.5).abs() < 1e-12);
}

#[test]
fn rank_rejects_bad_header() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "a,b,c,d\nu,A,B,1\n").unwrap();
    let out = run(&["rank", "--input", input.to_str().unwrap(), "--output", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("header"), "{}", stderr(&out));
}

#[test]
fn iht_flags_the_planted_row() {
    let dir = TempDir::new().unwrap();
    let input = planted_flip(dir.path());
    let report = dir.path().join("r.json");
    let out = run(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--method",
        "iht",
        "--k",
        "1",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = json(&report);
    let outliers = r["outliers"].as_array().unwrap();
    assert_eq!(outliers.len(), 1);
    assert_eq!(outliers[0]["row_index"], 3);
    assert_eq!(outliers[0]["item_i"], "A");
    assert_eq!(outliers[0]["item_j"], "E");
    assert!((r["items"]["A"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert_eq!(r["params"]["k"], 1);
}

#[test]
fn ilts_and_lasso_agree_on_the_planted_row() {
    let dir = TempDir::new().unwrap();
    let input = planted_flip(dir.path());
    for method in ["ilts", "lasso"] {
        let report = dir.path().join(format!("{method}.json"));
        let out = run(&[
            "detect",
            "--input",
            input.to_str().unwrap(),
            "--method",
            method,
            "--k",
            "1",
            "--output",
            report.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{method}: {}", stderr(&out));
        let rows: Vec<u64> = json(&report)["outliers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| o["row_index"].as_u64().unwrap())
            .collect();
        assert_eq!(rows, vec![3], "{method}");
    }
}

#[test]
fn lasso_with_zero_budget_flags_nothing() {
    let dir = TempDir::new().unwrap();
    let input = planted_flip(dir.path());
    let report = dir.path().join("r.json");
    let out = run(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--method",
        "lasso",
        "--k",
        "0",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(json(&report)["outliers"].as_array().unwrap().is_empty());
}

#[test]
fn alts_finds_no_outliers_in_consistent_votes() {
    let dir = TempDir::new().unwrap();
    let names = ["A", "B", "C", "D", "E"];
    let mut rows = Vec::new();
    for i in 0..5 {
        for j in i + 1..5 {
            rows.push(("u", names[i], names[j], 1.0));
        }
    }
    let input = write_csv(dir.path(), "votes.csv", &rows);
    let report = dir.path().join("r.json");
    let out = run(&["detect", "--input", input.to_str().unwrap(), "--method", "alts", "--output", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = json(&report);
    assert_eq!(r["khat"], 0);
    assert!(r["outliers"].as_array().unwrap().is_empty());
    assert_eq!(r["params"]["beta1"], 0.75);
}

#[test]
fn alts_rejects_graded_values() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "graded.csv", &[("u", "A", "B", 1.0), ("u", "B", "C", 0.5)]);
    let out = run(&[
        "detect",
        "--input",
        input.to_str().unwrap(),
        "--method",
        "alts",
        "--output",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("+1 or -1") && msg.contains("record 1"), "{msg}");
}

#[test]
fn detect_validates_flag_combinations() {
    let dir = TempDir::new().unwrap();
    let input = planted_flip(dir.path());
    let report = dir.path().join("r.json");
    let base = ["detect", "--input", input.to_str().unwrap(), "--output", report.to_str().unwrap()];
    for extra in [
        &["--method", "iht"][..],
        &["--method", "alts", "--k", "1"],
        &["--method", "lasso"],
        &["--method", "lasso", "--k", "1", "--lambda", "0.5"],
        &["--method", "ilts", "--k", "1", "--lambda", "0.5"],
    ] {
        let args: Vec<&str> = base.iter().chain(extra).copied().collect();
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{extra:?}");
    }
    assert!(!report.exists());
}

#[test]
fn unknown_flags_are_rejected() {
    let out = run(&["rank", "--input", "x.csv", "--output", "y.json", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--frobnicate"));
}

#[test]
fn check_reports_constants_for_complete_graph() {
    let out = run(&["check", "--complete-graph", "6", "--k", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["theta"].as_f64().unwrap() - 4.0 / 6.0).abs() < 1e-10);
    assert_eq!(r["n_items"], 6);
    assert_eq!(r["n_rows"], 15);
    assert_eq!(r["feasible_theorem2"], false);
}

#[test]
fn check_with_zero_budget_outliers_is_trivial() {
    let out = run(&["check", "--complete-graph", "5", "--k", "0"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["theta", "mu", "eta", "phi"] {
        assert_eq!(r[key].as_f64().unwrap(), 0.0, "{key}");
    }
}

#[test]
fn check_refuses_over_budget() {
    let out = run(&["check", "--complete-graph", "12", "--k", "3", "--budget", "100"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("budget"), "{}", stderr(&out));
}

#[test]
fn check_runs_equivalence_on_input() {
    let dir = TempDir::new().unwrap();
    let input = write_csv(dir.path(), "tri.csv", &[("u", "A", "B", 1.0), ("u", "B", "C", 1.0), ("v", "A", "C", -1.0)]);
    let report = dir.path().join("c.json");
    let out = run(&[
        "check",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "1",
        "--equivalence",
        "--output",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(json(&report)["equivalence"]["equivalent"], true);
}

#[test]
fn simulate_writes_consistent_tables() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("sim");
    let out = run(&[
        "simulate",
        "--n",
        "8",
        "--sn",
        "200",
        "--op",
        "10%",
        "--trials",
        "1",
        "--methods",
        "iht,ilts",
        "--seed",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for file in ["config.json", "metrics.csv", "timing.csv", "trials.csv", "metrics_iht.csv", "timing_ilts.csv"] {
        assert!(out_dir.join(file).exists(), "{file}");
    }
    let metrics = csv::Reader::from_path(out_dir.join("metrics.csv")).unwrap().into_records().map(|r| r.unwrap()).collect::<Vec<_>>();
    let trials = csv::Reader::from_path(out_dir.join("trials.csv")).unwrap().into_records().map(|r| r.unwrap()).collect::<Vec<_>>();
    assert_eq!(metrics.len(), 2);
    assert_eq!(trials.len(), 2);
    for (m, t) in metrics.iter().zip(&trials) {
        assert_eq!(&m[0], &t[0]);
        for (mi, ti) in [(3, 6), (4, 7), (5, 8)] {
            let a: f64 = m[mi].parse().unwrap();
            let b: f64 = t[ti].parse().unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
    let timing = fs::read_to_string(out_dir.join("timing_iht.csv")).unwrap();
    assert!(timing.starts_with("SN,OP=10%\n200,"), "{timing}");
}

#[test]
fn bench_single_cell_spec() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"n": 8, "sn": [150], "op": [0.2], "trials": 2, "methods": ["iht", "lasso"], "seed": 1}"#).unwrap();
    let out = run(&["bench", "--spec", spec.to_str().unwrap(), "--jobs", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = String::from_utf8_lossy(&out.stdout).into_owned();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,SN,OP=20%");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("iht,150,"));
    assert!(stderr(&out).contains("SN=150 OP=20%: iht/lasso="));
}

#[test]
fn bench_rejects_missing_or_bad_spec() {
    let dir = TempDir::new().unwrap();
    let missing = run(&["bench", "--spec", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"trails": 3}"#).unwrap();
    let bad = run(&["bench", "--spec", spec.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("trails"), "{}", stderr(&bad));
}
