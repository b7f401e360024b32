//! End-to-end checks of the `branchflow` binary: exit codes, artifact
//! emission, and seed determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_branchflow"))
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "potential": {"source": "sample", "seed": 3, "k": 2, "amplitude": 0.05, "sigma": 0.2},
        "model": {"hidden_layers": 2, "hidden_width": 8},
        "training": {"epochs": 3, "collocation": 8},
        "base_ics": [0.0, 0.5, 1.0],
        "transfer_ics": [0.25, 0.75],
        "dt": 1e-2
    });
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should launch")
}

#[test]
fn missing_config_file_exits_2() {
    let out = run(&["oracle", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{not json").unwrap();
    let out = run(&["oracle", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_writes_csvs_and_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "oracle",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("oracle_base_000.csv").exists());
    assert!(out_dir.join("oracle_transfer_001.csv").exists());
    assert!(out_dir.join("potential.json").exists());
}

#[test]
fn train_then_eval_then_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    for mode in ["train-base", "eval", "plot"] {
        let out = run(&[
            mode,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{mode}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(out_dir.join("checkpoint.json").exists());
    assert!(out_dir.join("report_base.json").exists());
    assert!(out_dir.join("eval.json").exists());
    assert!(out_dir.join("trajectories.svg").exists());
}

#[test]
fn eval_without_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = run(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("empty").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let mut checkpoints = Vec::new();
    for run_dir in ["a", "b"] {
        let out_dir = dir.path().join(run_dir);
        let out = run(&[
            "train-base",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "11",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        checkpoints.push(std::fs::read_to_string(out_dir.join("checkpoint.json")).unwrap());
    }
    assert_eq!(checkpoints[0], checkpoints[1]);
}

#[test]
fn epochs_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train-base",
        "--config",
        config.to_str().unwrap(),
        "--epochs",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report_base.json")).unwrap())
            .unwrap();
    assert_eq!(report["stopped_epoch"], 5);
}

#[test]
fn transfer_ic_against_trained_base() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let train = run(&[
        "train-base",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(train.status.code(), Some(0));
    let transfer = run(&[
        "transfer-ic",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--checkpoint",
        out_dir.join("checkpoint.json").to_str().unwrap(),
    ]);
    assert_eq!(
        transfer.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&transfer.stderr)
    );
    assert!(out_dir.join("trajectory_transfer_000.csv").exists());
    assert!(out_dir.join("trajectory_transfer_001.csv").exists());
}
