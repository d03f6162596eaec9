use std::path::Path;
use std::process::{Command, Output};

fn pathlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pathlab")).args(args).output().expect("spawn")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: stdout={} stderr={}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flags_round_trip_through_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "hedge", "--payoff", "geom-asian", "--paths", "3", "--sigma-model", "0.25", "--sigma-true", "0.15",
        "--level", "8", "--seed", "9", "--dump-config",
    ];
    let first = pathlab(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let file = dir.path().join("cfg.json");
    std::fs::write(&file, &first.stdout).unwrap();
    let second = pathlab(&["hedge", "--config", s(&file), "--dump-config"]);
    assert_eq!(first.stdout, second.stdout);
    let third = pathlab(&["run", "--config", s(&file), "--dump-config"]);
    assert_eq!(first.stdout, third.stdout);
}

#[test]
fn geometric_asian_batch_is_robust_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let base = [
        "hedge", "--model", "bs", "--payoff", "geom-asian", "--paths", "40", "--sigma-model", "0.25",
        "--sigma-true", "0.15", "--level", "10", "--min-robust", "0.99", "--csv",
    ];
    let out = pathlab(&[&base[..], &[s(&a)]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["data"]["robust_frequency"].as_f64().unwrap() >= 0.99);
    pathlab(&[&base[..], &[s(&b)]].concat());
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let header = String::from_utf8(bytes).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "path_id,level,direct_error,formula_error,verdict");
}

#[test]
fn flat_path_has_zero_qv() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("flat.csv");
    let mut text = String::from("time,value\n");
    for k in 0..=256 {
        text += &format!("{},{}\n", k as f64 / 256.0, 1.0);
    }
    std::fs::write(&file, text).unwrap();
    let out = pathlab(&["qv", "--input", s(&file), "--level", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["data"]["paths"][0]["limit"], 0.0);
    assert_eq!(v["data"]["paths"][0]["converged"], true);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version": 7, "experiment": "qv"}"#).unwrap();
    assert_eq!(pathlab(&["run", "--config", s(&bad)]).status.code(), Some(2));
    std::fs::write(&bad, r#"{"version": 1, "experiment": "price-mc", "model": {"family": "reference-merton"},
        "pricing": {"strikes": [1.0], "maturities": [0.25]}, "mc": {"n_paths": 100}}"#)
    .unwrap();
    assert_eq!(pathlab(&["run", "--config", s(&bad)]).status.code(), Some(2), "seed is mandatory");
    let missing = dir.path().join("nope.csv");
    assert_eq!(pathlab(&["qv", "--input", s(&missing), "--level", "4"]).status.code(), Some(4));
    let out = pathlab(&[
        "hedge", "--payoff", "up-out", "--barrier", "1.2", "--paths", "30", "--sigma-model", "0.25",
        "--sigma-true", "0.15", "--level", "8", "--min-robust", "1.0",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let threads = Command::new(env!("CARGO_BIN_EXE_pathlab"))
        .args(["price-expansion", "--strikes", "1", "--maturities", "1"])
        .env("PATHLAB_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn reproduce_table_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = pathlab(&[
        "reproduce-table", "--which", "merton", "--maturities", "0.25", "--paths", "2000", "--seed", "1", "--csv", s(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "T,K,price_ppr,price_mc_lo,price_mc_hi,iv_ppr,iv_mc_lo,iv_mc_hi");
    assert_eq!(lines.count(), 5);
}

#[test]
fn price_expansion_with_threads_cap() {
    let out = Command::new(env!("CARGO_BIN_EXE_pathlab"))
        .args(["price-expansion", "--model", "merton", "--strikes", "1", "--maturities", "0.25"])
        .env("PATHLAB_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let p = json(&out)["data"]["prices"][0]["price"].as_f64().unwrap();
    assert!((p - 0.05515).abs() < 2e-4);
}
