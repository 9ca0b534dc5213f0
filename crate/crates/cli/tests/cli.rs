use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn randcache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randcache"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("spec.json");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn optimize_writes_report_and_rows() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let config = write_config(
        tmp.path(),
        r#"{"config": {"N": 3, "M": 1}, "profile": {"explicit": [0.6, 0.3, 0.1]}}"#,
    );
    let res = randcache(&[
        "optimize",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );

    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    let mut lines = rows.lines();
    assert_eq!(lines.next(), Some("method,objective,pi"));
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert!(
        methods.contains(&"brute_force") && methods.contains(&"waterfilling"),
        "{methods:?}"
    );

    let json = report(&out);
    assert_eq!(json["metadata"]["seed"], 9);
    assert_eq!(json["summary"]["passed"], true);
    assert_eq!(json["metadata"]["spec"]["config"]["N"], 3);
}

#[test]
fn floats_use_seventeen_significant_digits() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("b");
    let res = randcache(&["bounds", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    let first = rows.lines().nth(1).unwrap();
    let lambda_u = first.split(',').next().unwrap();
    assert_eq!(lambda_u, "1.0000000000000000e-2");
    let value: f64 = lambda_u.parse().unwrap();
    assert_eq!(value, 0.01);
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), r#"{"config": {"lamda_u": 1.0}}"#);
    let res = randcache(&[
        "bounds",
        "--config",
        &config,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("lamda_u"));
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn invalid_values_and_missing_files_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let config = write_config(tmp.path(), r#"{"delta": 1.5}"#);
    assert_eq!(
        randcache(&["bounds", "--config", &config, "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        randcache(&["optimize", "--trials", "0", "--out", out])
            .status
            .code(),
        Some(2)
    );
    let missing = tmp.path().join("nope.json");
    let res = randcache(&[
        "optimize",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn failing_check_exits_with_one() {
    // Pinning the solver to a single iteration leaves it far from the grid optimum.
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let config = write_config(
        tmp.path(),
        r#"{"config": {"N": 3, "M": 2, "lambda_s": 3.0},
            "profile": {"explicit": [0.9, 0.05, 0.05]},
            "solver": {"restarts": 1, "max_iterations": 1, "step_rule": "fixed", "step_size": 1e-9}}"#,
    );
    let res = randcache(&[
        "optimize",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&res.stdout)
    );
    assert_eq!(report(&out)["summary"]["passed"], false);
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

#[test]
fn rows_are_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str, workers: &str| {
        let out = tmp.path().join(name);
        let res = randcache(&[
            "waiting-time",
            "--trials",
            "30",
            "--seed",
            "5",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(matches!(res.status.code(), Some(0 | 1)));
        fs::read(out.join("rows.csv")).unwrap()
    };
    assert_eq!(run("one", "1"), run("four", "4"));
}

#[test]
fn validate_theorem1_with_reduced_trials() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let res = randcache(&[
        "validate-theorem1",
        "--trials",
        "20000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stdout)
    );
    let json = report(&out);
    assert_eq!(json["row_count"], 3);
    assert_eq!(json["metadata"]["spec"]["trials"], 20000);
}

#[test]
fn tl_compare_needs_a_source_profile() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), r#"{"q_profile": null}"#);
    let res = randcache(&[
        "tl-compare",
        "--config",
        &config,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}
