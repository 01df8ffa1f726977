//! Exit-code and flag contracts of the command-line binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gcal"))
}

fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/politifact_sample")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn eval_without_checkpoint_exits_2() {
    let output = bin().arg("eval").output().expect("binary runs");
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("checkpoint"));
}

#[test]
fn explain_without_checkpoint_exits_2() {
    let output = bin().arg("explain").output().expect("binary runs");
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("checkpoint"));
}

#[test]
fn missing_users_file_is_named() {
    let dir = tempfile::tempdir().expect("tempdir");
    for name in ["news.jsonl", "comments.jsonl"] {
        fs::copy(fixture_root().join(name), dir.path().join(name)).expect("copy");
    }
    let output = bin()
        .args(["ingest", "--root"])
        .arg(dir.path())
        .arg("--report-dir")
        .arg(dir.path().join("reports"))
        .arg("--out")
        .arg(dir.path().join("dataset.json"))
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("users.jsonl"));
}

#[test]
fn dry_run_reports_without_writing_the_cache() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cache = dir.path().join("dataset.json");
    let output = bin()
        .args(["ingest", "--dry-run", "--root"])
        .arg(fixture_root())
        .arg("--out")
        .arg(&cache)
        .arg("--report-dir")
        .arg(dir.path().join("reports"))
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(!cache.exists());
    let report = fs::read_to_string(dir.path().join("reports/ingest_report.txt")).expect("report");
    assert!(report.contains("cache = none (dry run)"));
    assert!(report.contains("true_news = 5"));
    assert!(report.contains("fake_news = 6"));
}

#[test]
fn selftest_passes_on_reduced_sizes() {
    let dir = tempfile::tempdir().expect("tempdir");
    let output = bin()
        .args(["selftest", "--passes", "5", "--instances", "3", "--report-dir"])
        .arg(dir.path())
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("[suite gradients]"));
    assert!(stdout.contains("all suites passed"));
    assert!(dir.path().join("selftest_report.txt").is_file());
}

#[test]
fn unknown_config_keys_exit_2_with_position() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("run.toml");
    fs::write(&config, "[train]\nmystery = 1\n").expect("config written");
    let output = bin()
        .arg("selftest")
        .arg("--config")
        .arg(&config)
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(2));
    let err = stderr(&output);
    assert!(err.contains("mystery"));
    assert!(err.contains("line 2"));
}

#[test]
fn env_seed_overrides_the_flag() {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();
    let config = root.join("run.toml");
    fs::write(
        &config,
        format!(
            r#"[paths]
dataset_root = "{fixture}"
dataset_cache = "{base}/dataset.json"
graph_cache = "{base}/graph.json"
checkpoint_dir = "{base}/checkpoints"
report_dir = "{base}/reports"

[train]
epochs = 1
batch_size = 4

[train.model]
d = 8
d_word = 6
encoder_layers = 1
encoder_heads = 2
d_g = 6
k_a = 4
comment_sample = 3
"#,
            fixture = fixture_root().display(),
            base = root.display(),
        ),
    )
    .expect("config written");
    for step in ["ingest", "graph"] {
        let output = bin()
            .args([step, "--config"])
            .arg(&config)
            .output()
            .expect("binary runs");
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    }
    let output = bin()
        .args(["train", "--seed", "9", "--config"])
        .arg(&config)
        .env("GCAL_SEED", "5")
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let report = fs::read_to_string(root.join("reports/train_report.txt")).expect("report");
    assert!(report.contains("train.seed = 5"));
}

#[test]
fn help_documents_train_flags() {
    let output = bin().args(["train", "--help"]).output().expect("binary runs");
    assert_eq!(output.status.code(), Some(0));
    let help = String::from_utf8_lossy(&output.stdout);
    for flag in [
        "--dataset",
        "--graph",
        "--checkpoint-dir",
        "--seed",
        "--epochs",
        "--learning-rate",
        "--batch-size",
        "--ablation",
        "--config",
        "--report-dir",
    ] {
        assert!(help.contains(flag), "help lacks {flag}");
    }
}

#[test]
fn bad_env_seed_exits_2() {
    let output = bin()
        .arg("train")
        .env("GCAL_SEED", "not-a-number")
        .output()
        .expect("binary runs");
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("GCAL_SEED"));
}
