use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TINY: &str = r#"
folds = 2
seed = 5

[model]
layers = 2
channels = 8
heads = 2
head_dim = 4
fcn_hidden = 8
window_frames = 160
max_epochs = 1
windows_per_epoch = 16
batch_size = 8

[training]
val_participants = 0
"#;

fn bitespeed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitespeed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = bitespeed(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: Value = serde_json::from_slice(&out.stdout).expect("stdout is one JSON object");
    assert_eq!(summary["status"], "ok");
    summary
}

fn err(args: &[&str]) -> Value {
    let out = bitespeed(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let summary: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    assert_eq!(summary["status"], "error");
    summary
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three compact synthetic participants written to disk.
fn compact(tmp: &TempDir) -> PathBuf {
    let data = tmp.path().join("data");
    ok(&[
        "synth",
        "--suite",
        "compact",
        "--participants",
        "3",
        "--seed",
        "2",
        "--out",
        s(&data),
    ]);
    data
}

fn tiny_config(tmp: &TempDir) -> PathBuf {
    let path = tmp.path().join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    path
}

#[test]
fn synth_then_ingest_lists_every_recording() {
    let tmp = TempDir::new().unwrap();
    let data = compact(&tmp);
    assert!(data.join("C01/d1/meta").is_file());
    let out = tmp.path().join("ingest");
    let summary = ok(&["ingest", s(&data), "--out", s(&out)]);
    assert_eq!(summary["recordings"], 3);
    assert_eq!(summary["failures"], 0);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["participants"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["dataset_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn oracle_evaluation_is_perfect_and_plots() {
    let tmp = TempDir::new().unwrap();
    let data = compact(&tmp);
    let out = tmp.path().join("oracle");
    let summary = ok(&["evaluate", "--oracle", s(&data), "--out", s(&out)]);
    assert_eq!(summary["eating_f1_0.1"], 1.0);
    assert_eq!(summary["episode_f1"], 1.0);
    assert_eq!(summary["mape"], 0.0);
    assert_eq!(summary["failures"], 0);
    for name in [
        "speed_violin.svg",
        "speed_scatter.svg",
        "episode_bars.svg",
        "minutes_C01_d1.svg",
    ] {
        let svg = fs::read_to_string(out.join("plots").join(name)).unwrap();
        assert!(svg.starts_with("<svg"), "{name}");
    }
    assert!(out.join("C02_d1/episodes_gt.csv").is_file());
    assert!(out.join("config.toml").is_file());

    let again = ok(&["report", s(&out)]);
    assert_eq!(again["recordings"], 3);
    assert_eq!(again["eating_f1_0.1"], 1.0);
}

#[test]
fn dominant_hand_never_adds_bites() {
    let tmp = TempDir::new().unwrap();
    let data = compact(&tmp);
    let both = tmp.path().join("both");
    let dom = tmp.path().join("dom");
    ok(&["evaluate", "--oracle", s(&data), "--out", s(&both)]);
    ok(&[
        "evaluate",
        "--oracle",
        s(&data),
        "--hands",
        "dominant",
        "--out",
        s(&dom),
    ]);
    let rows = |p: PathBuf| fs::read_to_string(p).unwrap().lines().count();
    for day in ["C01_d1", "C02_d1", "C03_d1"] {
        assert!(
            rows(dom.join(day).join("bites.csv")) <= rows(both.join(day).join("bites.csv")),
            "{day}"
        );
    }
}

#[test]
fn crossval_writes_fold_reports_and_repeats_exactly() {
    let tmp = TempDir::new().unwrap();
    let data = compact(&tmp);
    let cfg = tiny_config(&tmp);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let summary = ok(&["--config", s(&cfg), "crossval", s(&data), "--out", s(&a)]);
    assert_eq!(summary["folds"].as_array().unwrap().len(), 2);
    ok(&["--config", s(&cfg), "crossval", s(&data), "--out", s(&b)]);
    for rel in [
        "report.json",
        "fold_0/report.json",
        "fold_1/report.json",
        "fold_0/model.ckpt",
    ] {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("dataset_sha256"));
    assert_eq!(fs::read_to_string(a.join("failures.json")).unwrap().trim(), "[]");
    assert!(a.join("plots/speed_scatter.svg").is_file());
}

#[test]
fn stagewise_commands_chain() {
    let tmp = TempDir::new().unwrap();
    let data = compact(&tmp);
    let cfg = tiny_config(&tmp);
    let model_dir = tmp.path().join("model");
    let trained = ok(&["--config", s(&cfg), "train", s(&data), "--out", s(&model_dir)]);
    assert_eq!(trained["epochs_run"], 1);
    let ckpt = model_dir.join("model.ckpt");
    assert!(model_dir.join("history.json").is_file());

    let rec = data.join("C01/d1");
    let pre = tmp.path().join("pre");
    let down = ok(&["preprocess", s(&rec), "--out", s(&pre)]);
    assert_eq!(down["frames"], 1800 * 16);

    let pred = tmp.path().join("pred");
    ok(&["predict", "--model", s(&ckpt), s(&rec), "--out", s(&pred)]);
    let probs = fs::read_to_string(pred.join("probs_right.csv")).unwrap();
    assert_eq!(probs.lines().next().unwrap(), "t,p_other,p_eating,p_drinking");
    assert_eq!(probs.lines().count(), 1800 * 16 + 1);

    ok(&["detect", "--model", s(&ckpt), s(&rec), "--out", s(&pred)]);
    assert!(pred.join("bites.csv").is_file());

    // The annotations file has the bites layout, so episodes and speed can
    // run on reference bites as well.
    let stage = tmp.path().join("stage");
    let found = ok(&["episodes", s(&rec.join("annotations.csv")), "--out", s(&stage)]);
    assert_eq!(found["episodes"], 1);
    let speed = ok(&[
        "speed",
        s(&rec.join("annotations.csv")),
        s(&stage.join("episodes.csv")),
        "--span-s",
        "1800",
        "--out",
        s(&stage),
    ]);
    assert_eq!(speed["minutes"], 30);
    assert!(speed["speeds_bpm"][0].as_f64().unwrap() > 0.0);
}

#[test]
fn failures_are_reported_as_json() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nothing");
    let e = err(&["evaluate", "--oracle", s(&missing), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(e["command"], "evaluate");
    assert!(e["error"].as_str().unwrap().contains("nothing"));

    let data = compact(&tmp);
    let e = err(&["--folds", "5", "crossval", s(&data), "--out", s(&tmp.path().join("cv"))]);
    assert_eq!(e["command"], "crossval");

    let e = err(&["--hands", "neither", "synth"]);
    assert!(e["command"].is_null());
}
