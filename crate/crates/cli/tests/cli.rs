use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cuneo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cuneo"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(dir: &Path) {
    let o = cuneo(
        &["make-fixture", "--out", "corpus", "--per-class", "20", "--viz", "SketchB,NormalMap"],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_prints_summary_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = cuneo(&["validate", "--corpus", "corpus"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("annotations 200"), "{text}");
    assert!(text.contains("classes 10"), "{text}");
    assert!(text.contains("SketchB: 5/5 surfaces"), "{text}");
}

#[test]
fn validate_rejects_broken_corpus() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    fs::remove_file(dir.path().join("corpus/images/North-01_front_SketchB.png")).unwrap();
    let o = cuneo(&["validate", "--corpus", "corpus"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("North-01"));
}

#[test]
fn train_then_eval_writes_stamped_reports() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    fs::write(
        dir.path().join("exp.toml"),
        "corpus = \"corpus\"\nvisualization = \"SketchB\"\nout = \"out\"\n[train]\nepochs = 1\narchitecture = \"compact\"\n",
    )
    .unwrap();
    let train = cuneo(&["train", "--spec", "exp.toml"], dir.path());
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let out = dir.path().join("out");
    assert!(out.join("checkpoints/model.ckpt").is_file());
    assert!(out.join("split.json").is_file());

    let eval = cuneo(&["eval", "--spec", "exp.toml"], dir.path());
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/eval.json")).unwrap()).unwrap();
    let top1 = report["top1"].as_f64().unwrap();
    let top5 = report["top5"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&top1) && top1 <= top5 && top5 <= 1.0);
    assert_eq!(report["n"], 40);

    let hash = report["spec_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 16);
    let train_report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/train.json")).unwrap()).unwrap();
    assert_eq!(train_report["spec_hash"], hash.as_str());
    let csv = fs::read_to_string(out.join("reports/eval/per_class.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# spec_hash={hash}"));

    // A command-line override is part of the hashed spec.
    let again = cuneo(&["split", "--spec", "exp.toml", "--split-seed", "3"], dir.path());
    assert!(again.status.success());
    let split: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("split.json")).unwrap()).unwrap();
    assert_ne!(split["spec_hash"], hash.as_str());
    assert_eq!(split["seed"], 3);
}

#[test]
fn split_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let args = ["split", "--corpus", "corpus", "--out", "out", "--split-seed", "11", "--viz", "SketchB"];
    assert!(cuneo(&args, dir.path()).status.success());
    let first = fs::read(dir.path().join("out/split.json")).unwrap();
    assert!(cuneo(&args, dir.path()).status.success());
    assert_eq!(first, fs::read(dir.path().join("out/split.json")).unwrap());
}

#[test]
fn eval_without_checkpoint_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let o = cuneo(&["eval", "--corpus", "corpus", "--out", "out", "--viz", "SketchB"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no checkpoint"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cuneo(&["bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(cuneo(&["train", "--epochs", "many"], dir.path()).status.code(), Some(2));
    assert_eq!(cuneo(&["train", "--viz", "Infrared"], dir.path()).status.code(), Some(2));
}

#[test]
fn invalid_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "repeats = 0\n").unwrap();
    let o = cuneo(&["split", "--spec", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("repeats"));
}
