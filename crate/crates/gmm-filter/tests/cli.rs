//! End-to-end checks of the `gmmf` binary: subcommand wiring, exit codes,
//! and artifact handling.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn gmmf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmmf"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary should run")
}

#[test]
fn run_builtin_experiment_writes_artifacts() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("artifacts");
    let result = gmmf(
        &[
            "run",
            "linear-ssm",
            "--steps",
            "15",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("linear-ssm"));
    assert!(stdout.contains("gmmf"));
    assert!(out.join("truth.csv").exists());
    assert!(out.join("trace_gmmf.csv").exists());
    assert!(out.join("trace_kalman.csv").exists());
    assert!(out.join("metrics.json").exists());
    assert!(out.join("config_resolved.json").exists());
}

#[test]
fn unknown_experiment_exits_2_and_lists_names() {
    let dir = tempdir().unwrap();
    let result = gmmf(&["run", "no-such-experiment"], dir.path());
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("linear-ssm"), "{stderr}");
    assert!(stderr.contains("gmm-switching"), "{stderr}");
}

#[test]
fn reduce_subcommand_caps_components() {
    let dir = tempdir().unwrap();
    let comps: Vec<String> = (0..50)
        .map(|i| {
            format!(
                r#"{{"weight":0.02,"mean":[{}],"cov_sqrt":[1.0]}}"#,
                i as f64 * 0.5
            )
        })
        .collect();
    let input = dir.path().join("in.json");
    std::fs::write(&input, format!(r#"{{"components":[{}]}}"#, comps.join(","))).unwrap();
    let output = dir.path().join("out.json");
    let result = gmmf(
        &[
            "reduce",
            input.to_str().unwrap(),
            output.to_str().unwrap(),
            "--max",
            "10",
            "--threshold",
            "1e-9",
        ],
        dir.path(),
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("reduced 50 ->"), "{stdout}");
    assert!(stdout.contains("final min bound"), "{stdout}");
    let text = std::fs::read_to_string(&output).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(parsed["components"].as_array().unwrap().len() <= 10);
}

#[test]
fn reduce_rejects_malformed_mixture_naming_the_component() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("bad.json");
    std::fs::write(
        &input,
        r#"{"components":[{"weight":1.0,"mean":[0.0],"cov_sqrt":[1.0]},{"weight":1.0,"mean":[0.0],"cov_sqrt":[1.0,0.0]}]}"#,
    )
    .unwrap();
    let result = gmmf(
        &[
            "reduce",
            input.to_str().unwrap(),
            dir.path().join("out.json").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("component 1"));
}

#[test]
fn metrics_subcommand_reports_rmse() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("artifacts");
    let run = gmmf(
        &[
            "run",
            "linear-ssm",
            "--steps",
            "10",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(run.status.success());
    let result = gmmf(
        &[
            "metrics",
            out.join("truth.csv").to_str().unwrap(),
            out.join("trace_gmmf.csv").to_str().unwrap(),
            out.join("trace_kalman.csv").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("gmmf"));
    assert!(stdout.contains("kalman"));
    assert!(stdout.contains("rmse_predicted"));
}

#[test]
fn metrics_without_truth_exits_2() {
    let dir = tempdir().unwrap();
    let result = gmmf(&["metrics", "missing.csv", "also-missing.csv"], dir.path());
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn run_from_config_file_honors_overrides() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        r#"
name = "tiny"
steps = 30
seed = 5

[model.linear]
state_dim = 1
measurement_dim = 1

[[model.linear.prior]]
weight = 1.0
mean = [0.0]
cov = [1.0]

[[model.linear.process]]
weight = 1.0
a = [0.9]
q = [0.1]

[[model.linear.measurement]]
weight = 1.0
c = [1.0]
r = [0.2]
"#,
    )
    .unwrap();
    let out = dir.path().join("tiny-out");
    let result = gmmf(
        &[
            "run",
            config.to_str().unwrap(),
            "--steps",
            "12",
            "--seed",
            "99",
            "--out",
            out.to_str().unwrap(),
            "--methods",
            "gmmf,naive",
        ],
        dir.path(),
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let rows = std::fs::read_to_string(out.join("trace_gmmf.csv")).unwrap();
    assert_eq!(rows.lines().count(), 13); // header + 12 steps
    assert!(out.join("trace_naive.csv").exists());
    assert!(!out.join("trace_kalman.csv").exists());
}
