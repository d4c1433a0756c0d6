use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use smalldiff::io::parse_path_csv;
use smalldiff::simulate::{simulate_path, GridLayout};
use smalldiff::{ModelSpec, NoiseKey, SamplingGrid};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smalldiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn simulate_to(dir: &Path, drift: &str, eps: &str, seed: &str) -> String {
    let file = dir.join(format!("path_{seed}.csv"));
    let file = file.to_str().unwrap().to_owned();
    let out = run(&[
        "simulate", "--drift", drift, "--sigma", "1", "--eps", eps, "--seed", seed, "--out", &file,
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    file
}

#[test]
fn quantile_prints_critical_value() {
    let out = run(&["quantile", "--p", "0.95"]);
    assert_eq!(out.status.code(), Some(0));
    let q: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((q - 2.2414).abs() < 1e-3, "{q}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"p\":0.95"));
}

#[test]
fn pvalue_of_zero_is_one() {
    let out = run(&["pvalue", "--d", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let p: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert_eq!(p, 1.0);
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["test", "--data", "x.csv", "--null-drift=-x"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--eps") && err.contains("Usage"), "{err}");

    assert_eq!(run(&["quantile", "--p", "abc"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,x\n0,1\n0.5,1.2\n0.4,0.9\n").unwrap();
    let out = run(&[
        "test",
        "--data",
        bad.to_str().unwrap(),
        "--eps",
        "0.1",
        "--null-drift=-x",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    assert_eq!(run(&["quantile", "--p", "1.5"]).status.code(), Some(2));
    assert_eq!(
        run(&[
            "test",
            "--data",
            "/nonexistent/file.csv",
            "--eps",
            "0.1",
            "--null-drift",
            "0"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&["simulate", "--drift", "x +", "--sigma", "1", "--eps", "0.1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn test_exit_code_matches_reject_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_to(dir.path(), "-x", "0.05", "7");
    for null in ["-x", "-x + 1", "2"] {
        let out = run(&[
            "test",
            "--data",
            &data,
            "--eps",
            "0.05",
            "--null-drift",
            null,
        ]);
        let report = json(&out);
        let reject = report["reject"].as_bool().unwrap();
        assert_eq!(
            out.status.code(),
            Some(if reject { 3 } else { 0 }),
            "null {null}"
        );
        assert_eq!(report["config"]["null_drift"], null);
    }
    let wrong = run(&[
        "test",
        "--data",
        &data,
        "--eps",
        "0.05",
        "--null-drift",
        "2",
    ]);
    assert_eq!(wrong.status.code(), Some(3));
}

#[test]
fn test_report_has_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_to(dir.path(), "-x", "0.1", "1");
    let curve = dir.path().join("curve.csv");
    let out = run(&[
        "test",
        "--data",
        &data,
        "--eps",
        "0.1",
        "--null-drift=-x",
        "--curve-out",
        curve.to_str().unwrap(),
    ]);
    let report = json(&out);
    for key in [
        "statistic",
        "p_value",
        "alpha",
        "reject",
        "sigma_hat",
        "sup_u",
        "n_obs",
        "eps",
    ] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let text = fs::read_to_string(curve).unwrap();
    assert!(text.starts_with("u,value\n"));
    assert_eq!(
        text.lines().count() as u64,
        report["n_obs"].as_u64().unwrap() + 1
    );
}

#[test]
fn exported_path_matches_library_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_to(dir.path(), "-x + sin(x)", "0.1", "11");
    let parsed = parse_path_csv(fs::File::open(&data).unwrap(), 0.1)
        .unwrap()
        .path;

    let model = ModelSpec::parse("-x + sin(x)", "1", 1.0, 1.0, 0.1).unwrap();
    let grid = SamplingGrid::new(1.0, 0.1, 2.5, GridLayout::Uniform).unwrap();
    let direct = simulate_path(&model, &grid, 4, NoiseKey::new(11, 0), false).unwrap();
    assert_eq!(parsed.values, direct.values);
    assert_eq!(parsed.times(), direct.times());

    let meta: Value =
        serde_json::from_str(&fs::read_to_string(format!("{data}.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["n_obs"].as_u64().unwrap() as usize, direct.len());
}

#[test]
fn identical_invocations_give_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_to(dir.path(), "-x", "0.1", "3");
    let first = fs::read(&a).unwrap();
    let b = simulate_to(dir.path(), "-x", "0.1", "3");
    assert_eq!(first, fs::read(b).unwrap());

    let size = |threads: &str| {
        let out = run(&[
            "size",
            "--null-drift=-x",
            "--sigma",
            "1",
            "--eps",
            "0.2,0.1",
            "--reps",
            "150",
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0));
        let mut v = json(&out);
        v.as_object_mut().unwrap().remove("wall_time_secs");
        v
    };
    assert_eq!(size("1"), size("3"));
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"drift": "-x", "sigma": "1", "x0": 0.5}"#).unwrap();
    let out = run(&["validate", "--config", cfg.to_str().unwrap(), "--x0", "2"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["config"]["x0"], 2.0);
    assert_eq!(v["config"]["drift"], "-x");
}
