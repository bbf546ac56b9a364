//! End-to-end runs of every subcommand on a small world.

use std::path::{Path, PathBuf};

use clap::Parser;

use ldri::cli::{execute, run, Cli, CliError, CHECKPOINT_FILE, CONFIG_FILE, LOG_FILE};
use ldri::config::{RunConfig, OUT_ENV, SIDECAR_FILE, TEST_FILE, TRAIN_FILE};
use ldri::dataio::{ingest_csv, ColumnConfig};
use ldri::evaluation::MetricReport;

const SMALL: &str = r#"{
  "data": {"kind": "synthetic", "world": {"n_users": 40, "n_videos": 120, "train_impressions": 2000, "test_impressions": 800}},
  "epochs": 2, "batch_size": 128, "learning_rate": 0.001
}"#;

fn args(dir: &Path, parts: &[&str]) -> Vec<String> {
    let mut v = vec!["ldri".to_string()];
    v.extend(parts.iter().map(|p| p.replace("{}", &dir.display().to_string())));
    v
}

fn exec(dir: &Path, parts: &[&str]) -> Result<ldri::cli::Outcome, CliError> {
    execute(Cli::try_parse_from(args(dir, parts)).unwrap().command)
}

/// Writes the small config, runs synth and train, returns the temp root.
fn synth_and_train() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    assert_eq!(run(args(dir.path(), &["synth", "--config", "{}/small.json", "--out", "{}/data"])), 0);
    assert_eq!(run(args(dir.path(), &["train", "--config", "{}/data/config.json", "--out", "{}/run"])), 0);
    dir
}

#[test]
fn synth_writes_reingestable_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    for out in ["a", "b"] {
        let code = run(args(dir.path(), &["synth", "--config", "{}/small.json", "--seed", "3", "--out", &format!("{{}}/{out}")]));
        assert_eq!(code, 0);
    }
    for name in [TRAIN_FILE, TEST_FILE, SIDECAR_FILE] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
    }
    let (train, summary) = ingest_csv(&dir.path().join("a").join(TRAIN_FILE), &ColumnConfig::synthetic()).unwrap();
    assert_eq!((train.len(), summary.dropped()), (2000, 0));
    let echoed = RunConfig::load(&dir.path().join("a").join(CONFIG_FILE)).unwrap();
    assert_eq!(echoed.seed, 3);
}

#[test]
fn invalid_world_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"data": {"kind": "synthetic", "world": {"n_videos": 0}}}"#).unwrap();
    assert_eq!(run(args(dir.path(), &["synth", "--config", "{}/bad.json", "--out", "{}/x"])), 1);
    assert!(!dir.path().join("x").join(TRAIN_FILE).exists());
    assert_eq!(run(args(dir.path(), &["train", "--alpha", "1.5", "--out", "{}/y"])), 1);
    assert_eq!(run(args(dir.path(), &["evaluate", "--checkpoint", "nowhere", "--policy", "bogus"])), 1);
}

#[test]
fn train_evaluate_report_round_trip() {
    let dir = synth_and_train();
    let d = dir.path();
    assert!(d.join("run").join(CHECKPOINT_FILE).is_file());
    let log = std::fs::read_to_string(d.join("run").join(LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 2);

    let eval = ["evaluate", "--config", "{}/data/config.json", "--checkpoint", "{}/run/model.ckpt", "--k", "5,10", "--out", "{}/eval"];
    let mut with_policy = eval.to_vec();
    with_policy.extend(["--policy", "policy1,policy2,backbone-only"]);
    assert_eq!(run(args(d, &with_policy)), 0);
    for policy in ["policy1", "policy2", "backbone-only"] {
        let text = std::fs::read_to_string(d.join("eval").join(format!("report_{policy}.json"))).unwrap();
        let report: MetricReport = serde_json::from_str(&text).unwrap();
        assert_eq!(report.policy.as_str(), policy);
        assert_eq!(report.overall.rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![5, 10]);
        assert!(d.join("eval").join(format!("per_interval_{policy}.csv")).is_file());
    }

    let outcome = exec(d, &["report", "--config", "{}/data/config.json", "--checkpoint", "{}/run/model.ckpt", "--out", "{}/report"]).unwrap();
    let csvs: Vec<&PathBuf> = outcome.files.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")).collect();
    assert_eq!(csvs.len(), 3);
    assert!(d.join("report").join("prediction_by_interval_backbone-only.csv").is_file());
    assert!(d.join("report").join("prediction_by_interval_policy1.csv").is_file());
}

#[test]
fn report_without_sidecar_names_the_file() {
    let dir = synth_and_train();
    let d = dir.path();
    std::fs::remove_file(d.join("data").join(SIDECAR_FILE)).unwrap();
    let err = exec(d, &["report", "--config", "{}/data/config.json", "--checkpoint", "{}/run/model.ckpt", "--out", "{}/r"]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains(SIDECAR_FILE), "{err}");
}

#[test]
fn schema_mismatch_and_missing_perceptron_are_refused() {
    let dir = synth_and_train();
    let d = dir.path();
    let other = SMALL.replace("\"n_users\": 40", "\"n_users\": 41");
    std::fs::write(d.join("other.json"), other).unwrap();
    let err = exec(d, &["evaluate", "--config", "{}/other.json", "--checkpoint", "{}/run/model.ckpt", "--out", "{}/e"]).unwrap_err();
    assert!(err.to_string().contains("schema mismatch"), "{err}");
    assert_eq!(err.exit_code(), 1);

    assert_eq!(run(args(d, &["train", "--config", "{}/data/config.json", "--objective", "matching-only", "--epochs", "1", "--out", "{}/base"])), 0);
    let err = exec(d, &["evaluate", "--config", "{}/data/config.json", "--checkpoint", "{}/base/model.ckpt", "--policy", "policy2", "--out", "{}/e2"]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let corrupt = d.join("corrupt.ckpt");
    std::fs::write(&corrupt, b"not a checkpoint").unwrap();
    let err = exec(d, &["evaluate", "--config", "{}/data/config.json", "--checkpoint", "{}/corrupt.ckpt", "--out", "{}/e3"]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn output_root_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json"), SMALL).unwrap();
    let root = dir.path().join("from_env");
    std::env::set_var(OUT_ENV, &root);
    let code = run(args(dir.path(), &["synth", "--config", "{}/small.json"]));
    std::env::remove_var(OUT_ENV);
    assert_eq!(code, 0);
    assert!(root.join(TRAIN_FILE).is_file());
}
