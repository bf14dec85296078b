use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn arena(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_threshold-arena"))
        .args(args)
        .current_dir(dir)
        .env_remove("THRESHOLD_ARENA_SEED")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn meanest_run_meets_mse_bound() {
    let dir = TempDir::new().unwrap();
    let out = arena(
        &["run", "--algo", "meanest", "--adv", "uniform", "--n", "16", "--T", "1024", "--runs", "500", "--seed", "1", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("o/summary.json"));
    let mse = floats(&summary["mse"]);
    let se = floats(&summary["mse_se"]);
    assert_eq!(mse.len(), 1024);
    assert!(mse[1023] <= 1.0 / 4096.0 + 3.0 * se[1023], "{}", mse[1023]);
    let csv = fs::read_to_string(dir.path().join("o/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 500 * 1024);
}

#[test]
fn single_round_point_mass() {
    let dir = TempDir::new().unwrap();
    let out = arena(
        &["run", "--algo", "cdfest", "--adv", "point-mass:1", "--n", "2", "--T", "1", "--runs", "1", "--reveal-samples", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("o/trajectory.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("feedback"), "1");
    assert_eq!(col("sample"), "1");
    assert_eq!(fs::read_to_string(dir.path().join("o/sequence.txt")).unwrap().trim(), "1");
}

#[test]
fn invalid_family_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let out = arena(&["run", "--algo", "cdfest", "--adv", "cdf-lb:0.3", "--n", "4", "--T", "10", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1/(2(n+1))"), "{err}");
    assert!(!dir.path().join("o").exists());

    let out = arena(&["run", "--algo", "nope", "--adv", "uniform", "--n", "4", "--T", "10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn breaker_defeats_baselines_and_rejects_randomness() {
    let dir = TempDir::new().unwrap();
    for baseline in ["midpoint", "halving-tracker", "round-robin-cdf"] {
        let out = arena(&["breaker", "--baseline", baseline, "--n", "16", "--T", "160", "--out", baseline], dir.path());
        assert!(out.status.success(), "{baseline}: {}", String::from_utf8_lossy(&out.stderr));
        let doc = json(&dir.path().join(baseline).join("breaker.json"));
        assert_eq!(doc["report"]["feedback_identical"], Value::Bool(true));
        assert_eq!(doc["pair"]["left"].as_array().unwrap().len(), 160);
    }
    let out = arena(&["breaker", "--baseline", "cdfest-median", "--n", "16", "--T", "160"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let base = ["run", "--algo", "stochastic-cdf", "--adv", "mirror", "--n", "8", "--T", "200", "--runs", "150", "--seed", "42"];
    let mut a = base.to_vec();
    a.extend(["--out", "a"]);
    let mut b = base.to_vec();
    b.extend(["--out", "b", "--workers", "3"]);
    assert!(arena(&a, dir.path()).status.success());
    assert!(arena(&b, dir.path()).status.success());
    for f in ["trajectory.csv", "summary.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }

    // the seed may also come from the environment
    let env_out = Command::new(env!("CARGO_BIN_EXE_threshold-arena"))
        .args(&base[..base.len() - 2])
        .args(["--out", "c"])
        .env("THRESHOLD_ARENA_SEED", "42")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(env_out.status.success());
    assert_eq!(fs::read(dir.path().join("a/summary.json")).unwrap(), fs::read(dir.path().join("c/summary.json")).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("exp.json"),
        r#"{"algorithm": "cdfest", "adversary": "uniform", "n": 8, "T": 40, "runs": 3, "seed": 7}"#,
    )
    .unwrap();
    let out = arena(&["run", "--config", "exp.json", "--T", "25", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("o/summary.json"));
    assert_eq!(summary["config"]["T"], 25);
    assert_eq!(summary["config"]["n"], 8);
    assert_eq!(summary["runs"], 3);

    fs::write(dir.path().join("bad.json"), r#"{"algorithm": "cdfest", "bogus": 1}"#).unwrap();
    assert_eq!(arena(&["run", "--config", "bad.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn replay_reproduces_revealed_sequence() {
    let dir = TempDir::new().unwrap();
    let run = ["run", "--algo", "cdfest", "--adv", "mirror", "--n", "8", "--T", "64", "--runs", "1", "--seed", "3", "--reveal-samples", "--out", "a"];
    assert!(arena(&run, dir.path()).status.success());
    let out = arena(
        &["replay", "--sequence", "a/sequence.txt", "--algo", "cdfest", "--n", "8", "--T", "64", "--runs", "1", "--seed", "3", "--reveal-samples", "--out", "b"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(dir.path().join("a/sequence.txt")).unwrap(),
        fs::read_to_string(dir.path().join("b/sequence.txt")).unwrap()
    );

    let short = arena(&["replay", "--sequence", "a/sequence.txt", "--algo", "cdfest", "--n", "8", "--T", "65"], dir.path());
    assert_eq!(short.status.code(), Some(2));
}

fn t_hats(doc: &Value) -> Vec<(u64, f64, u64)> {
    doc["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["n"].as_u64().unwrap(), r["epsilon"].as_f64().unwrap(), r["t_hat"].as_u64().unwrap()))
        .collect()
}

#[test]
fn mean_complexity_is_within_inverse_square() {
    let dir = TempDir::new().unwrap();
    let out = arena(&["complexity", "--algo", "meanest", "--adv", "uniform", "--n", "16", "--epsilon", "0.1,0.05"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (_, eps, t) in t_hats(&json(&dir.path().join("out/complexity.json"))) {
        assert!(t >= 1 && t as f64 <= (1.0 / (eps * eps)).ceil(), "eps={eps} t_hat={t}");
    }
}

#[test]
fn cdf_complexity_grows_near_linearly_in_n() {
    let dir = TempDir::new().unwrap();
    let out = arena(&["complexity", "--algo", "cdfest", "--adv", "uniform", "--n", "8,16", "--epsilon", "0.2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = t_hats(&json(&dir.path().join("out/complexity.json")));
    assert!(rows[0].2 <= 2496, "{rows:?}");
    let ratio = rows[1].2 as f64 / rows[0].2 as f64;
    assert!((1.5..=6.0).contains(&ratio), "{rows:?}");
}

#[test]
fn half_accuracy_median_needs_one_query() {
    let dir = TempDir::new().unwrap();
    let out = arena(&["complexity", "--algo", "cdfest-median", "--adv", "uniform", "--n", "8", "--epsilon", "0.5", "--runs", "50"], dir.path());
    assert!(out.status.success());
    assert_eq!(t_hats(&json(&dir.path().join("out/complexity.json")))[0].2, 1);
}

#[test]
fn stitched_cdf_queries_grow_logarithmically() {
    let dir = TempDir::new().unwrap();
    let out = arena(&["complexity", "--algo", "stochastic-cdf", "--adv", "uniform", "--n", "64,1024", "--epsilon", "0.25", "--runs", "50"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&dir.path().join("out/complexity.json"));
    let q: Vec<f64> = doc["rows"].as_array().unwrap().iter().map(|r| r["mean_queries"].as_f64().unwrap()).collect();
    assert!(q[1] / q[0] <= 2.0 * (1024f64.ln() / 64f64.ln()), "{q:?}");
}
