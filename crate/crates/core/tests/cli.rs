use std::path::Path;
use std::process::{Command, Output};

fn cddrive(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cddrive")).args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) {
    let out = cddrive(args, dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn setup(dir: &Path) {
    ok(&["gen-data", "--seed-range", "0..20", "--out", "train.jsonl"], dir);
    ok(&["build-vocab", "--data", "train.jsonl", "--k", "4", "--out", "vocab.json"], dir);
}

#[test]
fn vocabulary_size_mismatch_is_a_contract_violation() {
    let d = tempfile::tempdir().unwrap();
    setup(d.path());
    let out = cddrive(&["train", "--data", "train.jsonl", "--vocab", "vocab.json", "--k", "8", "--steps", "2", "--out", "c.json"], d.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(!d.path().join("c.json").exists());
}

#[test]
fn eval_and_plot_write_their_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    setup(p);
    ok(&["train", "--data", "train.jsonl", "--vocab", "vocab.json", "--k", "4", "--steps", "3", "--refiner", "regression", "--out", "c.json"], p);
    ok(&["eval", "--checkpoint", "c.json", "--vocab", "vocab.json", "--seed-range", "900..906", "--mode", "vocab-only", "--out", "r.json"], p);
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("r.json")).unwrap()).unwrap();
    assert_eq!(r["modes"].as_array().unwrap().len(), 1);
    assert_eq!(r["refiner"], "regression");
    ok(&["plot", "--checkpoint", "c.json", "--vocab", "vocab.json", "--seed-range", "900..906", "--index", "2", "--out", "s.svg"], p);
    assert!(std::fs::read_to_string(p.join("s.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn bad_arguments_exit_nonzero() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert!(!cddrive(&["gen-data", "--seed-range", "5..5", "--out", "x.jsonl"], p).status.success());
    let out = cddrive(&["ablate", "--seed-range", "0..10", "--eval-seed-range", "5..20", "--out", "abl"], p);
    assert_eq!(out.status.code(), Some(2));
    assert!(!p.join("abl").exists());
    assert!(!cddrive(&["plot", "--seed-range", "0..3", "--index", "7", "--out", "x.svg"], p).status.success());
}
