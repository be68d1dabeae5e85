use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adaptau(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptau")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_dir(root: &Path) -> PathBuf {
    let mut dirs: Vec<_> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn prepared(tmp: &Path) -> PathBuf {
    let data = tmp.join("data");
    let o = adaptau(&[
        "prepare", "--synthetic", "zipf", "--k-core", "5", "--seed", "2", "--out", data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("train_pairs"));
    data
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = adaptau(&["train", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--dataset"));
}

#[test]
fn nonexistent_dataset_fails() {
    let o = adaptau(&["train", "--dataset", "/no/such/file.txt", "--out", "/tmp"]);
    assert!(!o.status.success());
}

#[test]
fn train_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let data = prepared(tmp.path());
    let runs = tmp.path().join("runs");
    let config = tmp.path().join("run.cfg");
    fs::write(&config, "train.dim = 16\ntrain.negatives = 8\ntrain.epochs = 50\ntemperature.beta = 2\n").unwrap();
    let o = adaptau(&[
        "train",
        "--dataset", data.to_str().unwrap(),
        "--config", config.to_str().unwrap(),
        "--epochs", "3",
        "--lr", "0.01",
        "--out", runs.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&runs);
    for f in [
        "config.txt", "history.csv", "temperature.csv", "user_tau.csv", "metrics.csv", "group_recall.csv",
        "embeddings.bin", "summary.json",
    ] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let cfg = fs::read_to_string(dir.join("config.txt")).unwrap();
    assert!(cfg.contains("train.epochs = 3"), "flag overrides file:\n{cfg}");
    assert!(cfg.contains("train.dim = 16"));
    assert!(cfg.contains("temperature.beta = 2"));
    assert_eq!(fs::read_to_string(dir.join("history.csv")).unwrap().lines().count(), 4);
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value"));

    // The snapshot reloads as a config file for an exact re-run.
    let again = tmp.path().join("again");
    let o = adaptau(&["train", "--config", dir.join("config.txt").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let second = fs::read_to_string(run_dir(&again).join("metrics.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.cfg");
    fs::write(&config, "train.learning_rate = 0.1\n").unwrap();
    let o = adaptau(&["train", "--dataset", "x", "--config", config.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.learning_rate"));
}

#[test]
fn sweep_and_noise_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let data = prepared(tmp.path());
    let common = ["--dim", "8", "--negatives", "4", "--epochs", "2", "--lr", "0.01"];

    let runs = tmp.path().join("sweep");
    let mut args = vec!["sweep-tau", "--dataset", data.to_str().unwrap(), "--grid", "0.1,0.5", "--out", runs.to_str().unwrap()];
    args.extend(common);
    let o = adaptau(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = fs::read_to_string(run_dir(&runs).join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);

    let runs = tmp.path().join("noise");
    let mut args = vec![
        "noise", "--dataset", data.to_str().unwrap(), "--noise-mode", "grouped", "--ratios", "0.1,0.4",
        "--out", runs.to_str().unwrap(),
    ];
    args.extend(common);
    let o = adaptau(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let groups = fs::read_to_string(run_dir(&runs).join("group_tau.csv")).unwrap();
    assert_eq!(groups.lines().count(), 3);
}

#[test]
fn diagnose_runs_oracles() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("diag");
    let o = adaptau(&[
        "diagnose", "--dim", "8", "--negatives", "8", "--epochs", "3", "--lr", "0.02", "--out", runs.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&runs);
    for f in ["oracles.csv", "grad_sweep.csv", "magnitude.csv", "tau0.csv"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let oracles = fs::read_to_string(dir.join("oracles.csv")).unwrap();
    assert!(oracles.lines().skip(1).all(|l| l.ends_with("true")), "{oracles}");
}
