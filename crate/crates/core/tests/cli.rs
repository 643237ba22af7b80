//! The `evsnn` binary: exit codes, idempotency and report round trips.

use std::path::Path;
use std::process::{Command, Output};

fn evsnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evsnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth(dir: &Path) {
    let out = evsnn(
        dir,
        &[
            "synth",
            "--classes",
            "2",
            "--samples-per-class",
            "4",
            "--width",
            "16",
            "--height",
            "16",
            "--out",
            "data",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const EXPERIMENT: &str = r#"{
  "dataset": {"source": "manifest", "path": "data"},
  "network": {"preset": "sew-tiny", "time_bins": 3},
  "train": {"epochs": 3, "batch_size": 4},
  "cv": {"folds": 2}
}"#;

#[test]
fn help_works_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        "synth", "voxelize", "augment", "train", "eval", "sweep", "regress", "energy",
    ] {
        let out = evsnn(dir.path(), &[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&evsnn(d, &["frobnicate"])), 2);
    assert_eq!(code(&evsnn(d, &["synth", "--classes", "0"])), 2);
    assert_eq!(code(&evsnn(d, &["--config", "missing.json", "train"])), 4);
    assert_eq!(code(&evsnn(d, &["voxelize", "missing.evt"])), 4);
    std::fs::write(d.join("bad.json"), r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(code(&evsnn(d, &["--config", "bad.json", "train"])), 2);
    std::fs::write(d.join("junk.evt"), b"not an event file").unwrap();
    assert_eq!(code(&evsnn(d, &["voxelize", "junk.evt"])), 4);
    // printing the constants needs no configuration
    assert_eq!(code(&evsnn(d, &["energy"])), 0);
}

#[test]
fn synth_is_idempotent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path());
    synth(b.path());
    synth(b.path());
    let list = |d: &Path| {
        let mut v: Vec<_> = walk(&d.join("data"));
        v.sort();
        v
    };
    let (la, lb) = (list(a.path()), list(b.path()));
    assert_eq!(
        la.iter().map(|x| &x.0).collect::<Vec<_>>(),
        lb.iter().map(|x| &x.0).collect::<Vec<_>>()
    );
    assert_eq!(la, lb);
}

fn walk(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push((
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            ));
        }
    }
    out
}

#[test]
fn eval_reproduces_the_training_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    std::fs::write(d.join("exp.json"), EXPERIMENT).unwrap();
    let out = evsnn(d, &["--config", "exp.json", "train", "--fold", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = evsnn(
        d,
        &[
            "--config",
            "exp.json",
            "--out",
            "ev",
            "eval",
            "--checkpoint",
            "out/checkpoint.ckpt",
            "--fold",
            "1",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let read = |p: &str| -> serde_json::Value {
        serde_json::from_slice(&std::fs::read(d.join(p)).unwrap()).unwrap()
    };
    let fold = read("out/fold.json");
    let eval = read("ev/eval.json");
    assert_eq!(fold["accuracy"], eval["accuracy"]);
    // the metrics log has one line per epoch run
    let log = std::fs::read_to_string(d.join("out/metrics.jsonl")).unwrap();
    assert_eq!(
        log.lines().count() as u64,
        fold["epochs_run"].as_u64().unwrap()
    );
    let ledger = read("out/train.ledger.json");
    assert_eq!(ledger["command"], "train");
    assert_eq!(ledger["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn overrides_are_logged() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    std::fs::write(d.join("exp.json"), EXPERIMENT).unwrap();
    let out = evsnn(
        d,
        &[
            "--config", "exp.json", "--seed", "7", "train", "--epochs", "1",
        ],
    );
    assert_eq!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("override: seed = 7"), "{err}");
    assert!(err.contains("override: train.epochs = 1"), "{err}");
}
