use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepclean_core::distortion::{read_manifest, DistortionKind};
use deepclean_core::model::{load_multitask, read_header, save_checkpoint, ModelConfig, MultiTaskModel};
use tempfile::TempDir;

fn deepclean(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepclean"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = deepclean(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exits nonzero with exactly one line on stderr.
fn fails(args: &[&str]) -> String {
    let out = deepclean(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic: {err:?}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three rendered sources and a synthesized dataset.
fn fixture(extra: &[&str]) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    let data = dir.path().join("data");
    ok(&["sources", "--out", s(&src), "--count", "3", "--size", "32"]);
    let mut args = vec!["synth", "--clean-dir", s(&src), "--out", s(&data)];
    args.extend_from_slice(extra);
    ok(&args);
    (dir, data)
}

#[test]
fn synth_reports_41_samples_per_source() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    ok(&["sources", "--out", s(&src), "--count", "3", "--size", "32"]);
    let stdout = ok(&["synth", "--clean-dir", s(&src), "--out", s(&dir.path().join("d"))]);
    assert!(stdout.starts_with("123 samples"), "{stdout}");
    let all = read_manifest(&dir.path().join("d/manifest.jsonl")).unwrap();
    let train = read_manifest(&dir.path().join("d/train.jsonl")).unwrap();
    let test = read_manifest(&dir.path().join("d/test.jsonl")).unwrap();
    assert_eq!(all.len(), 123);
    assert_eq!(train.len() + test.len(), 123);
}

#[test]
fn test_variant_uses_unseen_parameters() {
    let (_dir, data) = fixture(&["--test-variant"]);
    let manifest = read_manifest(&data.join("manifest.jsonl")).unwrap();
    for spec in manifest.iter().flat_map(|m| &m.sequence) {
        let allowed: &[f64] = if spec.kind.is_exposure() {
            &[0.3, 0.9, 2.2, 3.2]
        } else {
            &[0.06, 0.1, 0.17, 0.25]
        };
        assert!(allowed.contains(&spec.param), "{spec:?}");
    }
}

#[test]
fn synth_without_clean_dir_is_a_usage_error() {
    let out = deepclean(&["synth", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim_end().lines().count(), 1);
}

#[test]
fn malformed_parameter_list_fails() {
    let dir = tempfile::tempdir().unwrap();
    fails(&[
        "synth",
        "--clean-dir",
        s(dir.path()),
        "--out",
        "x",
        "--gammas-dark",
        "2,abc",
    ]);
    fails(&[
        "synth",
        "--clean-dir",
        s(dir.path()),
        "--out",
        "x",
        "--gammas-dark",
        "0.5",
    ]);
}

#[test]
fn zero_epochs_writes_initial_weights() {
    let (dir, data) = fixture(&[]);
    let ckpt = dir.path().join("m.dcln");
    let manifest = data.join("train.jsonl");
    ok(&[
        "--seed",
        "9",
        "train",
        "--manifest",
        s(&manifest),
        "--out",
        s(&ckpt),
        "--epochs",
        "0",
    ]);
    let loaded = load_multitask(&ckpt).unwrap();
    assert_eq!(loaded, MultiTaskModel::new(ModelConfig::default(), 9).unwrap());
}

#[test]
fn single_threaded_training_is_reproducible() {
    let (dir, data) = fixture(&[]);
    let manifest = data.join("manifest.jsonl");
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "--threads",
            "1",
            "train",
            "--manifest",
            s(&manifest),
            "--out",
            s(&out),
            "--epochs",
            "2",
            "--batch-size",
            "16",
        ]);
        (
            std::fs::read(&out).unwrap(),
            std::fs::read(out.with_extension("log.jsonl")).unwrap(),
        )
    };
    let (a, log_a) = run("a.dcln");
    let (b, log_b) = run("b.dcln");
    assert!(a == b, "checkpoints differ");
    assert_eq!(log_a, log_b);
    assert_eq!(String::from_utf8(log_a).unwrap().lines().count(), 2);
}

#[test]
fn classifier_checkpoint_is_tagged() {
    let (dir, data) = fixture(&[]);
    let ckpt = dir.path().join("h.dcln");
    let stdout = ok(&[
        "train",
        "--manifest",
        s(&data.join("manifest.jsonl")),
        "--out",
        s(&ckpt),
        "--epochs",
        "1",
        "--arch",
        "hcc",
    ]);
    assert!(stdout.contains("final train accuracy"));
    assert_eq!(read_header(&ckpt).unwrap().arch, "hcc");
    // The restoration loop needs the multi-task model.
    let img = data.join("clean").read_dir().unwrap().next().unwrap().unwrap().path();
    fails(&[
        "clean",
        "--model",
        s(&ckpt),
        "--image",
        s(&img),
        "--out",
        s(&dir.path().join("r.png")),
    ]);
}

#[test]
fn training_on_a_bad_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "not json\n").unwrap();
    fails(&["train", "--manifest", s(&bad), "--out", s(&dir.path().join("m.dcln"))]);
    fails(&["train", "--manifest", s(&dir.path().join("missing.jsonl"))]);
}

/// A network whose Clean head saturates, so every image is called clean.
fn always_clean_model(path: &Path) {
    let mut model = MultiTaskModel::new(ModelConfig::default(), 1).unwrap();
    let prefix = format!("head.{}.", DistortionKind::Clean.name());
    let idx = model
        .param_names()
        .iter()
        .rposition(|n| n.starts_with(&prefix) && n.ends_with(".bias"))
        .unwrap();
    model.params_mut()[idx].value.data_mut().fill(50.0);
    save_checkpoint(&model, path).unwrap();
}

#[test]
fn clean_image_needs_no_correction() {
    let (dir, data) = fixture(&[]);
    let ckpt = dir.path().join("clean.dcln");
    always_clean_model(&ckpt);
    let img = data.join("clean").read_dir().unwrap().next().unwrap().unwrap().path();
    let trace = dir.path().join("t.json");
    let restored = dir.path().join("r.png");
    let stdout = ok(&[
        "clean",
        "--model",
        s(&ckpt),
        "--image",
        s(&img),
        "--out",
        s(&restored),
        "--trace",
        s(&trace),
    ]);
    assert!(stdout.starts_with("0 corrections"), "{stdout}");
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(t["terminated"], "predicted_clean");
    assert!(restored.exists());
}

#[test]
fn max_iters_bounds_corrections_and_traces_carry_psnr() {
    let (dir, data) = fixture(&[]);
    let ckpt = dir.path().join("m.dcln");
    let manifest = data.join("test.jsonl");
    ok(&[
        "train",
        "--manifest",
        s(&data.join("manifest.jsonl")),
        "--out",
        s(&ckpt),
        "--epochs",
        "0",
    ]);
    let before = std::fs::read(&manifest).unwrap();
    let out = dir.path().join("restored");
    let traces = dir.path().join("traces");
    ok(&[
        "clean",
        "--model",
        s(&ckpt),
        "--manifest",
        s(&manifest),
        "--out",
        s(&out),
        "--trace",
        s(&traces),
        "--max-iters",
        "1",
    ]);
    assert_eq!(std::fs::read(&manifest).unwrap(), before, "input manifest changed");
    let samples = read_manifest(&manifest).unwrap();
    for sample in &samples {
        assert!(out.join(format!("{}.png", sample.id)).exists());
        let text = std::fs::read_to_string(traces.join(format!("{}.json", sample.id))).unwrap();
        let t: serde_json::Value = serde_json::from_str(&text).unwrap();
        let steps = t["steps"].as_array().unwrap();
        assert!(steps.iter().filter(|s| !s["chosen"].is_null()).count() <= 1);
        assert!(steps.iter().all(|s| s.get("psnr_vs_reference").is_some()));
    }
}

#[test]
fn missing_model_is_an_error() {
    let (dir, data) = fixture(&[]);
    let err = fails(&[
        "clean",
        "--model",
        s(&dir.path().join("nope.dcln")),
        "--manifest",
        s(&data.join("test.jsonl")),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert!(err.contains("nope.dcln"), "{err}");
}

#[test]
fn eval_anchors_and_rows() {
    let (dir, data) = fixture(&[]);
    let manifest = data.join("manifest.jsonl");
    let report = dir.path().join("rep");
    let stdout = ok(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--strategies",
        "oracle,fixed1",
        "--report",
        s(&report),
    ]);
    assert!(stdout.contains("1. oracle"), "{stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.with_extension("json")).unwrap()).unwrap();
    let rows = json["strategies"].as_array().unwrap();
    assert_eq!(rows[0]["normalized_score"], 1.0);
    assert_eq!(rows[1]["normalized_score"], 0.0);

    let ckpt = dir.path().join("m.dcln");
    let hcc = dir.path().join("h.dcln");
    ok(&["train", "--manifest", s(&manifest), "--out", s(&ckpt), "--epochs", "0"]);
    ok(&[
        "train",
        "--manifest",
        s(&manifest),
        "--out",
        s(&hcc),
        "--epochs",
        "0",
        "--arch",
        "hcc",
    ]);
    ok(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--model",
        s(&ckpt),
        "--hcc-model",
        s(&hcc),
        "--strategies",
        "deepclean,oracle,random,hcc,fixed1,fixed2",
        "--report",
        s(&report),
    ]);
    let csv = std::fs::read_to_string(report.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 7, "{csv}");
}

#[test]
fn eval_is_reproducible() {
    let (dir, data) = fixture(&[]);
    let manifest = data.join("manifest.jsonl");
    let ckpt = dir.path().join("m.dcln");
    ok(&["train", "--manifest", s(&manifest), "--out", s(&ckpt), "--epochs", "0"]);
    let run = |stem: &str| {
        let report = dir.path().join(stem);
        ok(&[
            "eval",
            "--manifest",
            s(&manifest),
            "--model",
            s(&ckpt),
            "--strategies",
            "deepclean,random,fixed1",
            "--report",
            s(&report),
        ]);
        std::fs::read(report.with_extension("json")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn eval_rejects_unknown_strategy_and_missing_models() {
    let (dir, data) = fixture(&[]);
    let manifest = data.join("manifest.jsonl");
    let out = deepclean(&["eval", "--manifest", s(&manifest), "--strategies", "oracle,magic"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1);
    for name in ["deepclean", "oracle", "random", "hcc", "fixed1", "fixed2"] {
        assert!(err.contains(name), "{err}");
    }
    let report = dir.path().join("r");
    fails(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--strategies",
        "deepclean",
        "--report",
        s(&report),
    ]);
}

#[test]
fn identify_reports_accuracy() {
    let (dir, data) = fixture(&[]);
    let ckpt = dir.path().join("c.dcln");
    always_clean_model(&ckpt);
    let stdout = ok(&[
        "identify",
        "--model",
        s(&ckpt),
        "--manifest",
        s(&data.join("manifest.jsonl")),
    ]);
    // Only the undistorted sample of each source is labeled clean.
    assert!(stdout.starts_with(&format!("accuracy {:.4}", 3.0 / 123.0)), "{stdout}");
    let img = data.join("clean").read_dir().unwrap().next().unwrap().unwrap().path();
    assert!(ok(&["identify", "--model", s(&ckpt), "--image", s(&img)]).starts_with("Clean"));
}
