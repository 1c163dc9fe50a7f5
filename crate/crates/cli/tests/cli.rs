// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dpcate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpcate"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dpcate(args);
    assert!(
        out.status.success(),
        "dpcate {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tradeoff_of_equal_budgets_certifies_the_budget() {
    let out = ok(&[
        "tradeoff",
        "--eps-delta",
        "1,1e-5",
        "--eps-delta",
        "1,1e-5",
        "--delta",
        "1e-5",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("alpha,beta"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(pts.first().unwrap().0, 0.0);
    assert_eq!(pts.last().unwrap().0, 1.0);
    let report = String::from_utf8(out.stderr).unwrap();
    let eps: f64 = report
        .trim()
        .strip_prefix("certified: (")
        .and_then(|r| r.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((eps - 1.0).abs() <= 1e-9, "{report}");
}

#[test]
fn tradeoff_to_gdp_and_bad_input() {
    let out = ok(&["tradeoff", "--to-gdp", "--eps-delta", "1,1e-5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mu: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!((mu - 0.268_051).abs() <= 1e-6);
    assert!(!dpcate(&["tradeoff"]).status.success());
    assert!(!dpcate(&["tradeoff", "--eps-delta", "1"]).status.success());
    assert!(ok(&["tradeoff", "--gdp", "1.0", "--grid", "32"])
        .stdout
        .starts_with(b"alpha,beta\n"));
}

#[test]
fn simulate_writes_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.csv");
    ok(&[
        "simulate",
        "--setup",
        "C",
        "--n",
        "50",
        "--seed",
        "3",
        "--out",
        path(&file),
    ]);
    let text = fs::read_to_string(&file).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y,t,x1,x2,x3,x4,x5,x6,tau_true"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().all(|r| r.ends_with(",1")));
    let again = dir.path().join("c2.csv");
    ok(&[
        "simulate",
        "--setup",
        "c",
        "--n",
        "50",
        "--seed",
        "3",
        "--out",
        path(&again),
    ]);
    assert_eq!(fs::read(&file).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn fit_writes_modules_privacy_report_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    ok(&[
        "simulate",
        "--setup",
        "B",
        "--n",
        "2000",
        "--seed",
        "1",
        "--out",
        path(&train),
    ]);
    ok(&[
        "simulate",
        "--setup",
        "B",
        "--n",
        "100",
        "--seed",
        "2",
        "--out",
        path(&test),
    ]);
    let out = dir.path().join("dr");
    ok(&[
        "fit",
        "--learner",
        "dr",
        "--train",
        path(&train),
        "--test",
        path(&test),
        "--out-dir",
        path(&out),
        "--epsilon",
        "4",
    ]);
    for f in [
        "propensity.json",
        "response.json",
        "second_stage.json",
        "privacy.json",
        "predictions.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("privacy.json")).unwrap()).unwrap();
    let eps = report["certified_epsilon"].as_f64().unwrap();
    assert!((eps - 4.0).abs() <= 1e-9);
    assert_eq!(report["modules"].as_array().unwrap().len(), 3);
    let rows: usize = report["modules"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["rows"].as_u64().unwrap() as usize)
        .sum();
    assert_eq!(rows, 2000);
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 101);
    let shape: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("second_stage.json")).unwrap()).unwrap();
    assert_eq!(shape["shapes"].as_array().unwrap().len(), 6);

    let s = dir.path().join("s");
    ok(&[
        "fit",
        "--learner",
        "S",
        "--train",
        path(&train),
        "--test",
        path(&test),
        "--out-dir",
        path(&s),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.join("privacy.json")).unwrap()).unwrap();
    assert!(report["certified_epsilon"].is_null());
    let preds = fs::read_to_string(s.join("predictions.csv")).unwrap();
    let distinct: std::collections::BTreeSet<&str> = preds.lines().skip(1).collect();
    assert_eq!(distinct.len(), 1);
}

#[test]
fn fit_rejects_parts_too_small_for_the_bins() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    ok(&[
        "simulate",
        "--setup",
        "A",
        "--n",
        "40",
        "--out",
        path(&train),
    ]);
    let out = dpcate(&[
        "fit",
        "--learner",
        "dr",
        "--train",
        path(&train),
        "--out-dir",
        path(dir.path()),
        "--bins",
        "32",
        "--bounds",
        "0,1",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fewer bins"));
}

#[test]
fn experiment_writes_outputs_and_handles_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    fs::write(
        &cfg,
        "setups = [\"C\"]\nlearners = [\"S\", \"DR\"]\nsample_sizes = [600]\nepsilons = [4.0, inf]\nreps = 2\ntest_size = 2000\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    ok(&[
        "experiment",
        "--config",
        path(&cfg),
        "--out-dir",
        path(&out),
        "--workers",
        "2",
    ]);
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2);
    for f in ["summary.csv", "plot_data.csv", "failures.txt"] {
        assert!(out.join(f).exists());
    }
    let serial = dir.path().join("serial");
    let run = Command::new(env!("CARGO_BIN_EXE_dpcate"))
        .args([
            "experiment",
            "--config",
            path(&cfg),
            "--out-dir",
            path(&serial),
        ])
        .env("DPCATE_WORKERS", "1")
        .output()
        .unwrap();
    assert!(run.status.success());
    assert_eq!(
        fs::read(out.join("results.csv")).unwrap(),
        fs::read(serial.join("results.csv")).unwrap()
    );

    fs::write(&cfg, "learners = []\n").unwrap();
    let empty = ok(&[
        "experiment",
        "--config",
        path(&cfg),
        "--out-dir",
        path(&dir.path().join("empty")),
    ]);
    assert!(String::from_utf8_lossy(&empty.stderr).contains("warning"));
}
