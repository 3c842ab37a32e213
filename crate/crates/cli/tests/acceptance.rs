//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --release --test acceptance`, or pick
//! criteria by number: `cargo test --test acceptance -- 1 2 7`. The binary
//! exits 0 after reporting unless `DEEPCLEAN_ACCEPTANCE_STRICT` is set, in
//! which case any FAIL makes it exit 1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use deepclean_core::correctors::CorrectionAlgorithm;
use deepclean_core::distortion::scenes::write_scenes;
use deepclean_core::distortion::{
    apply_gamma, apply_gaussian_noise, generate_dataset, load_pair, read_manifest, write_manifest, DatasetConfig, Split,
};
use deepclean_core::imaging::{load_image, ImageU8};
use deepclean_core::model::{
    identify_accuracy, load_labeled, load_multitask, save_checkpoint, train_on, ClassifierConfig, ClassifierModel,
    FeatureModel, ForwardOutput, Identifier, LabeledImage, ModelConfig, MultiTaskLoss, MultiTaskModel, TrainHyper,
    FULL_MODEL_STEP,
};
use deepclean_core::nn::gradcheck::{
    gradient_check, gradient_check_with_step, BceFragment, ConvBlockFragment, DenseFragment, Differentiable,
};
use deepclean_core::nn::softmax_cross_entropy;
use deepclean_core::planner::{run_pipeline, select};
use deepclean_core::seeding::stream;
use deepclean_core::strategies::{brute_force_best, evaluate, EvalModels, Strategy};
use deepclean_core::{AlgorithmPool, DistortionKind, SequenceSample};

const SEED: u64 = 42;

// Pinned tolerances.
const FORMULA_MAX_BYTES: i32 = 1;
const FORMULA_MAX_SECS: f64 = 1.0;
const GRAD_TOL: f64 = 1e-3;
const GRAD_MAX_SECS: f64 = 60.0;
const MIN_HELD_OUT_ACCURACY: f64 = 0.90;
const MAX_CLASSIFIER_GAP: f64 = 0.10;
const MAX_UNSEEN_GAP: f64 = 0.05;
const MIN_GUIDED_MARGIN_DB: f64 = 0.3;
const MIN_NORMALIZED: f64 = 0.85;
const MIN_EXPOSURE_AGREEMENT: f64 = 0.70;
const MIN_DENOISER_AGREEMENT: f64 = 0.50;
const ADVERSARIAL_CONFIGS: usize = 1000;
const PROBE_IMAGES: usize = 100;

// Training recipe for the identification criteria.
const SOURCES: usize = 800;
const SAMPLES_PER_SOURCE: usize = 41;
const MIN_EVAL_SAMPLES: usize = 1200;
const RECIPE: TrainHyper = TrainHyper {
    lr: 5e-4,
    weight_decay: 5e-4,
    epochs: 32,
    batch_size: 32,
    seed: SEED,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut trained: Option<Trained> = None;
    let mut results = Vec::new();
    let criteria: [(u32, &str); 9] = [
        (1, "formula fidelity"),
        (2, "gradient correctness"),
        (3, "identification accuracy"),
        (4, "unseen-parameter generalization"),
        (5, "strategy ordering"),
        (6, "selection vs brute force"),
        (7, "termination and trace"),
        (8, "determinism"),
        (9, "persistence"),
    ];
    for (n, name) in criteria {
        if !wants(n) {
            continue;
        }
        let start = Instant::now();
        let v = match n {
            1 => formula_fidelity(),
            2 => gradient_correctness(),
            7 => termination(),
            8 => determinism(),
            _ => {
                let t = trained.get_or_insert_with(Trained::build);
                match n {
                    3 => identification(t),
                    4 => generalization(t),
                    5 => ordering(t),
                    6 => selection(t),
                    _ => persistence(t),
                }
            }
        };
        let line = format!(
            "{} {n} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        results.push(v.pass);
    }
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 && std::env::var_os("DEEPCLEAN_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn formula_fidelity() -> Verdict {
    let start = Instant::now();
    let mut rng = stream(SEED, "acceptance-formula");
    let mut worst_gamma = 0;
    for _ in 0..1000 {
        let v: u8 = rng.random();
        let gamma = rng.random_range(0.1..5.0);
        let gain = rng.random_range(0.5..1.5);
        let img = ImageU8::filled(1, 1, 1, v);
        let got = apply_gamma(&img, gamma, gain).unwrap().data()[0];
        let direct = (255.0 * gain * (f64::from(v) / 255.0).powf(gamma))
            .clamp(0.0, 255.0)
            .round() as i32;
        worst_gamma = worst_gamma.max((i32::from(got) - direct).abs());
    }

    let pixels: Vec<u8> = (0..1000).map(|_| rng.random()).collect();
    let img = ImageU8::new(1000, 1, 1, pixels.clone()).unwrap();
    let (mean, sigma) = (0.02, 0.12);
    let noise_rng = stream(SEED, "acceptance-noise");
    let got = apply_gaussian_noise(&img, mean, sigma, &mut noise_rng.clone()).unwrap();
    let mut draws = noise_rng;
    let normal = Normal::new(mean, sigma).unwrap();
    let mut worst_noise = 0;
    for (&v, &g) in pixels.iter().zip(got.data()) {
        let n: f64 = normal.sample(&mut draws);
        let direct = (255.0 * (f64::from(v) / 255.0 + n)).clamp(0.0, 255.0).round() as i32;
        worst_noise = worst_noise.max((i32::from(g) - direct).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_gamma <= FORMULA_MAX_BYTES && worst_noise <= FORMULA_MAX_BYTES && secs < FORMULA_MAX_SECS,
        format!("max deviation gamma {worst_gamma} / noise {worst_noise} bytes (limit {FORMULA_MAX_BYTES}) on 1000 pixels each, {secs:.3}s (limit {FORMULA_MAX_SECS}s)"),
    )
}

/// Softmax cross-entropy of free logits against a fixed class.
struct SoftmaxFragment(usize, usize);

impl Differentiable for SoftmaxFragment {
    fn num_vars(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64]) -> f64 {
        softmax_cross_entropy(x, self.1).0
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        softmax_cross_entropy(x, self.1).1
    }
}

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let dense = DenseFragment::new(9, 6, 1);
    worst.push((
        "dense",
        gradient_check(&dense, &dense.probe(2), 1000, 3).max_relative_error,
    ));
    let conv = ConvBlockFragment::new([3, 8, 7], 4, false, 4);
    worst.push((
        "conv+leaky",
        gradient_check(&conv, &conv.probe(5), 1000, 5).max_relative_error,
    ));
    let pooled = ConvBlockFragment::new([2, 6, 6], 5, true, 6);
    worst.push((
        "conv+leaky+pool",
        gradient_check(&pooled, &pooled.probe(7), 1000, 7).max_relative_error,
    ));
    let bce = BceFragment {
        labels: vec![true, false, false, true, false],
    };
    worst.push((
        "sigmoid-bce",
        gradient_check(&bce, &[0.4, -2.0, 3.1, -0.2, 1.5], 10, 0).max_relative_error,
    ));
    let ce = SoftmaxFragment(5, 3);
    worst.push((
        "softmax-ce",
        gradient_check(&ce, &[0.4, -2.0, 3.1, -0.2, 1.5], 10, 0).max_relative_error,
    ));
    let model = MultiTaskModel::<f64>::new(
        ModelConfig {
            input_size: 16,
            ..ModelConfig::default()
        },
        11,
    )
    .unwrap();
    let probe_img = deepclean_core::distortion::scenes::render_scene(SEED, 0, 16);
    let full = MultiTaskLoss::new(model, &probe_img, DistortionKind::NoiseHigh);
    let r = gradient_check_with_step(&full, &full.probe(), 1000, 8, FULL_MODEL_STEP);
    worst.push(("full multi-task loss 16x16", r.max_relative_error));
    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.2e}")).collect();
    verdict(
        max <= GRAD_TOL && secs < GRAD_MAX_SECS,
        format!(
            "max relative error {max:.2e} (limit {GRAD_TOL:.0e}) [{}], {secs:.1}s",
            parts.join(", ")
        ),
    )
}

/// Trained models and data shared by the identification criteria.
struct Trained {
    dir: tempfile::TempDir,
    manifest: Vec<SequenceSample>,
    held_out: Vec<SequenceSample>,
    held_out_images: Vec<LabeledImage>,
    unseen_images: Vec<LabeledImage>,
    n_train: usize,
    multitask: MultiTaskModel,
    classifier: ClassifierModel,
}

impl Trained {
    fn build() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("sources");
        write_scenes(&src, SEED, SOURCES, 64).unwrap();
        let manifest = generate_dataset(&src, &dir.path().join("seen"), &DatasetConfig::default()).unwrap();
        let unseen = generate_dataset(&src, &dir.path().join("unseen"), &DatasetConfig::test_variant()).unwrap();

        // Every training source contributes a random subset of its variants.
        let mut rng = stream(SEED, "acceptance-subsample");
        let mut train = Vec::new();
        for group in manifest.chunks(41).filter(|g| g[0].split == Split::Train) {
            let mut g = group.to_vec();
            g.shuffle(&mut rng);
            train.extend(g.into_iter().take(SAMPLES_PER_SOURCE));
        }
        let held_out: Vec<_> = manifest.iter().filter(|s| s.split == Split::Test).cloned().collect();
        let unseen_test: Vec<_> = unseen.into_iter().filter(|s| s.split == Split::Test).collect();

        let train_images = load_labeled(&train, 64).unwrap();
        let mut multitask = MultiTaskModel::new(ModelConfig::default(), SEED).unwrap();
        train_on(&mut multitask, &train_images, &RECIPE, |l| {
            eprintln!(
                "  multi-task epoch {} loss {:.4} accuracy {:.3}",
                l.epoch, l.mean_loss, l.train_accuracy
            )
        })
        .unwrap();
        let mut classifier = ClassifierModel::new(ClassifierConfig::default(), SEED).unwrap();
        train_on(&mut classifier, &train_images, &RECIPE, |l| {
            eprintln!(
                "  classifier epoch {} loss {:.4} accuracy {:.3}",
                l.epoch, l.mean_loss, l.train_accuracy
            )
        })
        .unwrap();
        Self {
            held_out_images: load_labeled(&held_out, 64).unwrap(),
            unseen_images: load_labeled(&unseen_test, 64).unwrap(),
            n_train: train.len(),
            dir,
            manifest,
            held_out,
            multitask,
            classifier,
        }
    }
}

fn identification(t: &Trained) -> Verdict {
    let mtl = identify_accuracy(&t.multitask, &t.held_out_images);
    let hcc = identify_accuracy(&t.classifier, &t.held_out_images);
    verdict(
        mtl >= MIN_HELD_OUT_ACCURACY && (mtl - hcc).abs() <= MAX_CLASSIFIER_GAP,
        format!(
            "multi-task held-out accuracy {mtl:.4} (min {MIN_HELD_OUT_ACCURACY}), classifier {hcc:.4} (gap {:.4}, max {MAX_CLASSIFIER_GAP}); {} training samples from {} sources, {} held-out",
            (mtl - hcc).abs(),
            t.n_train,
            t.n_train / SAMPLES_PER_SOURCE,
            t.held_out_images.len()
        ),
    )
}

fn generalization(t: &Trained) -> Verdict {
    let seen = identify_accuracy(&t.multitask, &t.held_out_images);
    let unseen = identify_accuracy(&t.multitask, &t.unseen_images);
    verdict(
        (seen - unseen).abs() <= MAX_UNSEEN_GAP,
        format!(
            "unseen-parameter accuracy {unseen:.4} vs held-out {seen:.4} (gap {:.4}, max {MAX_UNSEEN_GAP}) on {} samples",
            (seen - unseen).abs(),
            t.unseen_images.len()
        ),
    )
}

/// A seeded subset of whole held-out sources with at least
/// `MIN_EVAL_SAMPLES` samples.
fn eval_manifest(t: &Trained) -> Vec<SequenceSample> {
    let mut groups: Vec<&[SequenceSample]> = t.held_out.chunks(41).collect();
    groups.shuffle(&mut stream(SEED, "acceptance-eval"));
    let mut out = Vec::new();
    for g in groups {
        if out.len() >= MIN_EVAL_SAMPLES {
            break;
        }
        out.extend_from_slice(g);
    }
    out
}

fn ordering(t: &Trained) -> Verdict {
    let manifest = eval_manifest(t);
    let models = EvalModels {
        multitask: Some(&t.multitask),
        classifier: Some(&t.classifier),
    };
    let report = evaluate(
        &manifest,
        &Strategy::ALL,
        models,
        &AlgorithmPool::default_pool(),
        SEED,
        4,
    )
    .unwrap();
    let psnr = |s: Strategy| report.get(s).unwrap().mean_psnr;
    let (oracle, deep, random, fixed1, fixed2, hcc) = (
        psnr(Strategy::OracleMtl),
        psnr(Strategy::DeepClean),
        psnr(Strategy::RandomMtl),
        psnr(Strategy::Fixed1),
        psnr(Strategy::Fixed2),
        psnr(Strategy::HardCodedClassifier),
    );
    let normalized = report.get(Strategy::DeepClean).unwrap().normalized_score.unwrap();
    let checks = [
        ("oracle>=deepclean", oracle >= deep),
        ("deepclean-random>=0.3dB", deep - random >= MIN_GUIDED_MARGIN_DB),
        ("random>=fixed1", random >= fixed1),
        ("fixed2<=fixed1", fixed2 <= fixed1),
        ("normalized>=0.85", normalized >= MIN_NORMALIZED),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(
        failed.is_empty(),
        format!(
            "mean PSNR on {} samples: oracle {oracle:.3}, deepclean {deep:.3}, random {random:.3}, hcc {hcc:.3}, fixed1 {fixed1:.3}, fixed2 {fixed2:.3} dB; deepclean normalized {normalized:.4}{}",
            report.n_samples,
            if failed.is_empty() {
                String::new()
            } else {
                format!("; violated: {}", failed.join(", "))
            }
        ),
    )
}

fn selection(t: &Trained) -> Verdict {
    let pool = AlgorithmPool::default_pool();
    let singles: Vec<&SequenceSample> = t.held_out.iter().filter(|s| s.sequence.len() == 1).collect();
    let (mut exposure, mut denoise) = ((0usize, 0usize), (0usize, 0usize));
    let mut choices: BTreeMap<String, usize> = BTreeMap::new();
    for s in singles {
        let (clean, img) = load_pair(s).unwrap();
        let candidates = pool.candidates_for(s.label).unwrap();
        let best = brute_force_best(&img, &clean, &candidates).unwrap();
        let chosen = select(&t.multitask, &img, s.label, &pool).unwrap().chosen.unwrap();
        *choices.entry(chosen.clone()).or_default() += 1;
        let tally = if s.label.is_exposure() {
            &mut exposure
        } else {
            &mut denoise
        };
        tally.0 += usize::from(best == chosen);
        tally.1 += 1;
    }
    let rate = |t: (usize, usize)| t.0 as f64 / t.1.max(1) as f64;
    let (e, d) = (rate(exposure), rate(denoise));
    let picks: Vec<String> = choices.iter().map(|(k, v)| format!("{k} {v}")).collect();
    verdict(
        e >= MIN_EXPOSURE_AGREEMENT && d >= MIN_DENOISER_AGREEMENT,
        format!(
            "agreement with brute force: exposure {e:.4} on {} samples (min {MIN_EXPOSURE_AGREEMENT}, 2 candidates), denoisers {d:.4} on {} samples (min {MIN_DENOISER_AGREEMENT}, 4 candidates); picks [{}]",
            exposure.1,
            denoise.1,
            picks.join(", ")
        ),
    )
}

/// Identifier that follows a script, then repeats its last answer, with
/// random head features drawn per image.
struct Adversary {
    script: Vec<DistortionKind>,
    calls: Mutex<usize>,
    feature_len: usize,
    scale: f64,
    zero_features: bool,
}

impl Identifier for Adversary {
    fn kind_scores(&self, _: &ImageU8) -> Vec<f64> {
        let mut calls = self.calls.lock().unwrap();
        let kind = self.script[(*calls).min(self.script.len() - 1)];
        *calls += 1;
        (0..5).map(|k| f64::from(u8::from(k == kind.index()))).collect()
    }
}

impl FeatureModel for Adversary {
    fn analyze(&self, img: &ImageU8) -> ForwardOutput {
        let seed = img
            .data()
            .iter()
            .fold(0u64, |h, &v| h.wrapping_mul(31).wrapping_add(u64::from(v)));
        let mut rng = stream(seed, "adversary");
        let f: Vec<f64> = (0..self.feature_len)
            .map(|_| {
                if self.zero_features {
                    0.0
                } else {
                    rng.random_range(-1.0..1.0) * self.scale
                }
            })
            .collect();
        ForwardOutput {
            embedding: f.clone(),
            head_hidden: vec![f; 5],
            head_prob: self.kind_scores(img),
        }
    }
}

fn termination() -> Verdict {
    let mut rng = stream(SEED, "acceptance-adversary");
    let base: Vec<CorrectionAlgorithm> = AlgorithmPool::default_pool().iter().cloned().collect();
    let mut violations = Vec::new();
    let mut stops: BTreeMap<String, usize> = BTreeMap::new();
    for case in 0..ADVERSARIAL_CONFIGS {
        let script_len = rng.random_range(1..8);
        let script = (0..script_len)
            .map(|_| DistortionKind::from_index(rng.random_range(0..5)).unwrap())
            .collect();
        let model = Adversary {
            script,
            calls: Mutex::new(0),
            feature_len: rng.random_range(1..6),
            scale: 10f64.powi(rng.random_range(-6..7)),
            zero_features: rng.random_bool(0.1),
        };
        let mut pool = AlgorithmPool::new();
        let mut algs = base.clone();
        algs.shuffle(&mut rng);
        for a in algs.into_iter().take(rng.random_range(0..=base.len())) {
            pool.register(a).unwrap();
        }
        if rng.random_bool(0.2) {
            // Identical outputs force ties.
            let kind = DistortionKind::from_index(rng.random_range(1..5)).unwrap();
            for name in ["same_a", "same_b"] {
                pool.register(CorrectionAlgorithm::new(name, [kind], |img: &ImageU8| img.clone()).unwrap())
                    .unwrap();
            }
        }
        let max_iters = rng.random_range(1..7);
        let img = ImageU8::from_fn(rng.random_range(1..12), rng.random_range(1..12), 3, |_, _, _| {
            rng.random()
        });
        match run_pipeline(&model, &img, &pool, max_iters) {
            Ok((_, trace)) => {
                if let Err(e) = trace.check(max_iters) {
                    violations.push(format!("case {case}: {e}"));
                }
                *stops.entry(format!("{:?}", trace.terminated)).or_default() += 1;
            }
            Err(e) => violations.push(format!("case {case}: {e}")),
        }
    }
    let summary: Vec<String> = stops.iter().map(|(k, v)| format!("{k} {v}")).collect();
    verdict(
        violations.is_empty(),
        format!(
            "{ADVERSARIAL_CONFIGS} configurations, {} violations; terminations [{}]{}",
            violations.len(),
            summary.join(", "),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

fn deepclean(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_deepclean"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

/// Contents of every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Verdict {
    let run = || -> Result<BTreeMap<&'static str, BTreeMap<PathBuf, Vec<u8>>>, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
        deepclean(&["sources", "--out", &p("src"), "--count", "6", "--size", "48"])?;
        deepclean(&["synth", "--clean-dir", &p("src"), "--out", &p("data")])?;
        let manifest = p("data/manifest.jsonl");
        std::fs::create_dir(tmp.path().join("model")).unwrap();
        std::fs::create_dir(tmp.path().join("report")).unwrap();
        deepclean(&[
            "--threads",
            "1",
            "train",
            "--manifest",
            &manifest,
            "--out",
            &p("model/m.dcln"),
            "--epochs",
            "2",
            "--lr",
            "1e-3",
        ])?;
        deepclean(&[
            "--threads",
            "1",
            "train",
            "--manifest",
            &manifest,
            "--out",
            &p("model/h.dcln"),
            "--epochs",
            "2",
            "--arch",
            "hcc",
        ])?;
        deepclean(&[
            "eval",
            "--manifest",
            &manifest,
            "--model",
            &p("model/m.dcln"),
            "--hcc-model",
            &p("model/h.dcln"),
            "--report",
            &p("report/r"),
        ])?;
        // Artifacts are compared relative to their run directory; the
        // manifest records absolute paths, so normalize those.
        let root = tmp.path().to_str().unwrap().to_string();
        let mut data = snapshot(&tmp.path().join("data"));
        for (k, v) in data.iter_mut() {
            if k.extension().is_some_and(|e| e == "jsonl") {
                *v = String::from_utf8(v.clone())
                    .unwrap()
                    .replace(&root, "<run>")
                    .into_bytes();
            }
        }
        Ok(BTreeMap::from([
            ("synth", data),
            ("train", snapshot(&tmp.path().join("model"))),
            ("eval", snapshot(&tmp.path().join("report"))),
        ]))
    };
    let (a, b) = match (run(), run()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return verdict(false, format!("command failed: {e}")),
    };
    let parts: Vec<String> = a
        .iter()
        .map(|(k, files)| {
            let same = b.get(k) == Some(files);
            format!(
                "{k} {} ({} files)",
                if same { "identical" } else { "DIFFERS" },
                files.len()
            )
        })
        .collect();
    verdict(a == b, format!("two runs, seed {SEED}: {}", parts.join(", ")))
}

fn persistence(t: &Trained) -> Verdict {
    let ckpt = t.dir.path().join("persist.dcln");
    save_checkpoint(&t.multitask, &ckpt).unwrap();
    let loaded = load_multitask(&ckpt).unwrap();
    let probes: Vec<ImageU8> = t
        .held_out
        .iter()
        .take(PROBE_IMAGES)
        .map(|s| load_image(&s.distorted_path).unwrap())
        .collect();
    let mismatched = probes
        .iter()
        .filter(|img| loaded.forward(img) != t.multitask.forward(img))
        .count();
    let path = t.dir.path().join("persist.jsonl");
    write_manifest(&path, &t.manifest).unwrap();
    let manifest_ok = read_manifest(&path).unwrap() == t.manifest;
    verdict(
        mismatched == 0 && manifest_ok && loaded.flat_params() == t.multitask.flat_params(),
        format!(
            "{mismatched}/{} probe forward passes differ after checkpoint round trip; manifest round trip of {} records {}",
            probes.len(),
            t.manifest.len(),
            if manifest_ok { "exact" } else { "DIFFERS" }
        ),
    )
}
