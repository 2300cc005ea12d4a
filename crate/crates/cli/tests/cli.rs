use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const FOUR_ITEMS: &str = "item_id,c1,c2\nI1,0,3\nI2,2,1\nI3,1,2\nI4,1,2\n";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowd-mle"))
        .args(args)
        .env_remove("CROWD_MLE_CAP")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn estimate(dir: &TempDir, input: &str, extra: &[&str], name: &str) -> (Output, Value) {
    let out_path = dir.path().join(name);
    let mut args = vec![
        "estimate",
        "--input",
        input,
        "--output",
        out_path.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    let value = if out.status.success() {
        json(&out_path)
    } else {
        Value::Null
    };
    (out, value)
}

#[test]
fn four_items_filter_opt() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "four.csv", FOUR_ITEMS);
    let (out, result) = estimate(&dir, &input, &[], "r.json");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let values: Vec<u64> = result["mapping"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["value"].as_u64().unwrap())
        .collect();
    assert_eq!(values, [1, 0, 1, 1]);
    let e0 = result["error_rates"]["e0"].as_f64().unwrap();
    let e1 = result["error_rates"]["e1"].as_f64().unwrap();
    let mut rates = [e0, e1];
    rates.sort_by(f64::total_cmp);
    assert!((rates[0] - 2.0 / 9.0).abs() < 1e-12 && (rates[1] - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(result["R"], 2);
    assert_eq!(result["schema_version"], 1);
    assert_eq!(result["candidates_evaluated"], 5);
}

#[test]
fn em_star_never_beats_opt_in_filter_mode() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "d.csv",
        "item_id,c1,c2\na,0,3\nb,1,2\nc,3,0\nd,2,1\ne,1,2\nf,0,3\n",
    );
    let (_, opt) = estimate(&dir, &input, &[], "opt.json");
    let (_, star) = estimate(&dir, &input, &["--algorithm", "em-star"], "star.json");
    let o = opt["log_likelihood"].as_f64().unwrap();
    let s = star["log_likelihood"].as_f64().unwrap();
    assert!(s <= o + 1e-9, "em-star {s} above opt {o}");
    assert!(star["iterations"].as_u64().is_some());
}

#[test]
fn malformed_input_exits_2_and_names_the_line() {
    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "empty.csv", "item_id,c1,c2\n");
    let (out, _) = estimate(&dir, &empty, &[], "r.json");
    assert_eq!(out.status.code(), Some(2));
    let bad = write(&dir, "bad.csv", "item_id,c1,c2\nI1,0,3\nI2,two,1\n");
    let (out, _) = estimate(&dir, &bad, &[], "r.json");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let uneven = write(&dir, "uneven.csv", "item_id,c1,c2\nI1,0,3\nI2,1,1\n");
    let (out, _) = estimate(&dir, &uneven, &[], "r.json");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_and_cap_errors() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "four.csv", FOUR_ITEMS);
    let (out, _) = estimate(
        &dir,
        &input,
        &["--mode", "two-class", "--algorithm", "em1"],
        "r.json",
    );
    assert_eq!(out.status.code(), Some(4));
    let (out, _) = estimate(&dir, &input, &["--R", "3"], "r.json");
    assert_eq!(out.status.code(), Some(4));
    let (out, _) = estimate(&dir, &input, &["--mode", "rating", "--cap", "2"], "r.json");
    assert_eq!(out.status.code(), Some(3));
    let capped = Command::new(env!("CARGO_BIN_EXE_crowd-mle"))
        .args(["estimate", "--input", &input, "--mode", "rating"])
        .env("CROWD_MLE_CAP", "2")
        .output()
        .unwrap();
    assert_eq!(capped.status.code(), Some(3));
    // The flag wins over the environment.
    let flag = Command::new(env!("CARGO_BIN_EXE_crowd-mle"))
        .args([
            "estimate", "--input", &input, "--mode", "rating", "--cap", "100",
        ])
        .env("CROWD_MLE_CAP", "2")
        .output()
        .unwrap();
    assert!(flag.status.success());
}

#[test]
fn enumerate_counts() {
    assert_eq!(
        stdout(&run(&["enumerate", "--R", "3", "--m", "3"])),
        "126\n"
    );
    assert_eq!(
        stdout(&run(&["enumerate", "--mode", "filter", "--m", "5"])),
        "7\n"
    );
    assert_eq!(
        stdout(&run(&["enumerate", "--R", "3", "--m", "5"])),
        "1716\n"
    );
    assert_eq!(
        stdout(&run(&["enumerate", "--mode", "variable", "--m", "1"])),
        "formula 5\nexact 4\n"
    );
}

#[test]
fn enumerate_listing() {
    let dir = TempDir::new().unwrap();
    let list = dir.path().join("list.csv");
    let out = run(&[
        "enumerate",
        "--mode",
        "filter",
        "--m",
        "2",
        "--list",
        list.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&list).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 4);
    assert_eq!(lines[0].split(',').count(), 3);
    let out = run(&[
        "enumerate",
        "--R",
        "3",
        "--m",
        "3",
        "--list",
        list.to_str().unwrap(),
        "--cap",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_is_deterministic_and_validated() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = run(&[
            "simulate",
            "--n",
            "200",
            "--m",
            "5",
            "--selectivity",
            "0.5",
            "--seed",
            "9",
            "--output",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    for f in ["responses.csv", "truth.csv", "matrix.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let out = run(&[
        "simulate",
        "--n",
        "10",
        "--m",
        "0",
        "--output",
        a.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(&[
        "simulate",
        "--mode",
        "rating",
        "--R",
        "3",
        "--n",
        "10",
        "--m",
        "2",
        "--selectivity",
        "0.5,0.6,0.2",
        "--output",
        a.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_rating_selectivity_shapes_the_truth() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "simulate",
        "--mode",
        "rating",
        "--R",
        "3",
        "--n",
        "5000",
        "--m",
        "3",
        "--selectivity",
        "0.2,0.6,0.2",
        "--seed",
        "4",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let truth = fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    let ones = truth.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    let share = ones as f64 / 5000.0;
    assert!((share - 0.2).abs() < 0.03, "share of rating 1 is {share}");
}

#[test]
fn sample_then_estimate_with_truth() {
    let dir = TempDir::new().unwrap();
    let sim = dir.path().join("sim");
    let out = run(&[
        "simulate",
        "--n",
        "50",
        "--m",
        "4",
        "--seed",
        "2",
        "--raw",
        "--output",
        sim.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let sub = dir.path().join("sub.csv");
    let responses = sim.join("responses.csv");
    let out = run(&[
        "sample",
        "--input",
        responses.to_str().unwrap(),
        "--m",
        "2",
        "--seed",
        "1",
        "--output",
        sub.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = fs::read_to_string(&sub).unwrap().lines().count();
    assert_eq!(rows, 1 + 100);
    let truth = sim.join("truth.csv");
    let (out, result) = estimate(
        &dir,
        sub.to_str().unwrap(),
        &["--truth", truth.to_str().unwrap()],
        "r.json",
    );
    assert!(out.status.success());
    let fi = result["metrics"]["fraction_incorrect"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&fi));
    let out = run(&[
        "sample",
        "--input",
        responses.to_str().unwrap(),
        "--m",
        "5",
        "--output",
        sub.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn check_reproduces_every_algorithm() {
    let dir = TempDir::new().unwrap();
    let sim = dir.path().join("sim");
    let out = run(&[
        "simulate",
        "--mode",
        "rating",
        "--R",
        "3",
        "--n",
        "40",
        "--m",
        "3",
        "--seed",
        "5",
        "--output",
        sim.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rating = sim.join("responses.csv");
    let binary = write(&dir, "four.csv", FOUR_ITEMS);
    let two_class = write(
        &dir,
        "two.csv",
        "item_id,worker_id,rating,class\na,e,2,expert\na,r,2,regular\nb,e,1,expert\nb,r,2,regular\nc,e,1,expert\nc,r,1,regular\nd,e,2,expert\nd,r,1,regular\n",
    );
    let mut cases: Vec<(String, Vec<&str>)> = Vec::new();
    for alg in ["opt", "em1", "em2", "em3", "em-star", "majority", "oracle"] {
        cases.push((binary.clone(), vec!["--algorithm", alg]));
        cases.push((
            binary.clone(),
            vec!["--mode", "variable", "--algorithm", alg],
        ));
    }
    for alg in ["opt", "em-star", "majority"] {
        cases.push((
            rating.to_str().unwrap().to_owned(),
            vec!["--mode", "rating", "--algorithm", alg],
        ));
    }
    for alg in ["opt", "oracle"] {
        cases.push((
            two_class.clone(),
            vec!["--mode", "two-class", "--algorithm", alg],
        ));
    }
    for (k, (input, extra)) in cases.iter().enumerate() {
        let name = format!("r{k}.json");
        let (out, _) = estimate(&dir, input, extra, &name);
        assert!(
            out.status.success(),
            "{extra:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let result = dir.path().join(&name);
        let check = run(&[
            "check",
            "--input",
            input,
            "--result",
            result.to_str().unwrap(),
        ]);
        assert!(
            check.status.success(),
            "{extra:?}: {}",
            String::from_utf8_lossy(&check.stderr)
        );
        assert!(stdout(&check).ends_with("ok\n"));
    }
}

#[test]
fn check_rejects_a_tampered_likelihood() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "four.csv", FOUR_ITEMS);
    let (_, mut result) = estimate(&dir, &input, &[], "r.json");
    result["log_likelihood"] = serde_json::json!(-1.0);
    let tampered = write(&dir, "t.json", &result.to_string());
    let out = run(&["check", "--input", &input, "--result", &tampered]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn benchmark_csv_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let out = run(&[
            "benchmark",
            "--n",
            "50",
            "--m",
            "1,3",
            "--trials",
            "3",
            "--seed",
            "7",
            "--algorithms",
            "opt,em-star",
            "--output",
            path.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(fs::read_to_string(path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let lines: Vec<&str> = outputs[0].lines().collect();
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[0].starts_with("m,algorithm,mean_log_likelihood"));
    assert!(lines[1].starts_with("1,opt,"));
    assert!(lines[4].starts_with("3,em-star,"));
}

#[test]
fn benchmark_marks_capped_trials() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("b.csv");
    let out = run(&[
        "benchmark",
        "--mode",
        "rating",
        "--R",
        "3",
        "--n",
        "30",
        "--m",
        "3",
        "--trials",
        "2",
        "--algorithms",
        "opt,majority",
        "--cap",
        "5",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let text = fs::read_to_string(path).unwrap();
    let opt_row = text.lines().find(|l| l.starts_with("3,opt,")).unwrap();
    let fields: Vec<&str> = opt_row.split(',').collect();
    assert_eq!(fields[8], "2");
}
