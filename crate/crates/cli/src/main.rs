use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use deepclean_core::distortion::scenes::write_scenes;
use deepclean_core::distortion::{generate_dataset, read_manifest, write_manifest, DatasetConfig, Split};
use deepclean_core::imaging::{load_image, save_image};
use deepclean_core::model::{
    identify_accuracy, load_checkpoint, load_labeled, load_multitask, save_checkpoint, train_on, ClassifierConfig,
    ClassifierModel, Identifier, LoadedModel, ModelConfig, MultiTaskModel, TrainHyper, Trainable,
};
use deepclean_core::planner::run_pipeline;
use deepclean_core::strategies::{evaluate, EvalModels, Strategy};
use deepclean_core::{AlgorithmPool, DistortionKind, SequenceSample};

#[derive(Parser)]
#[command(
    name = "deepclean",
    version,
    about = "Identify image distortions and plan their correction"
)]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads; 1 gives a serial, bit-reproducible run. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render procedural clean scenes into a directory.
    Sources(SourcesArgs),
    /// Synthesize distorted samples and manifests from clean images.
    Synth(SynthArgs),
    /// Train the multi-task identifier or the multiclass baseline.
    Train(TrainArgs),
    /// Predict the distortion of images.
    Identify(IdentifyArgs),
    /// Run the iterative restoration loop.
    Clean(CleanArgs),
    /// Compare restoration strategies on a manifest.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SourcesArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    clean_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    gammas_dark: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gammas_bright: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sigmas_low: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sigmas_high: Option<Vec<f64>>,
    /// Use the held-out parameter values instead of the training ones.
    #[arg(long)]
    test_variant: bool,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Square size clean sources are resized to; 0 keeps native resolution.
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arch {
    Mtl,
    Hcc,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "model.dcln")]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, value_enum, default_value = "mtl")]
    arch: Arch,

    /// Per-epoch JSON lines; defaults to the checkpoint path with `.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
#[group(id = "input", required = true, multiple = false, args = ["image", "manifest"])]
struct InputArgs {
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args)]
struct CleanArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Clean reference for a single `--image`, used for per-step PSNR.
    #[arg(long, requires = "image")]
    reference: Option<PathBuf>,
    #[arg(long, value_parser = parse_pool, default_value = DEFAULT_POOL_ARG)]
    pool: AlgorithmPool,
    #[arg(long, default_value_t = 4)]
    max_iters: usize,
    /// Trace file (single image) or directory (manifest).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Restored image (single image) or directory (manifest).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    hcc_model: Option<PathBuf>,
    #[arg(long, value_parser = parse_pool, default_value = DEFAULT_POOL_ARG)]
    pool: AlgorithmPool,
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_strategy,
        default_value = "deepclean,oracle,random,hcc,fixed1,fixed2"
    )]
    strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 4)]
    max_iters: usize,
    /// Report path stem; writes `<stem>.json` and `<stem>.csv`.
    #[arg(long, default_value = "report")]
    report: PathBuf,
}

const DEFAULT_POOL_ARG: &str = "gamma_0.33,gamma_0.5,gamma_1.25,gamma_5.0,blur_0.8,blur_1.5,median_3,median_5";

fn parse_pool(s: &str) -> Result<AlgorithmPool, String> {
    AlgorithmPool::parse_list(s).map_err(|e| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.trim()
        .parse()
        .map_err(|e: deepclean_core::strategies::StrategyError| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("usage error"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": ").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Sources(a) => cmd_sources(a, seed),
        Command::Synth(a) => cmd_synth(a, seed),
        Command::Train(a) => cmd_train(a, seed),
        Command::Identify(a) => cmd_identify(a),
        Command::Clean(a) => cmd_clean(a),
        Command::Eval(a) => cmd_eval(a, seed),
    }
}

fn cmd_sources(a: SourcesArgs, seed: u64) -> Result<()> {
    if a.size == 0 {
        bail!("--size must be positive");
    }
    let paths = write_scenes(&a.out, seed, a.count, a.size)?;
    println!("{} scenes written to {}", paths.len(), a.out.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs, seed: u64) -> Result<()> {
    if !a.clean_dir.is_dir() {
        bail!("clean directory {} does not exist", a.clean_dir.display());
    }
    let base = if a.test_variant {
        DatasetConfig::test_variant()
    } else {
        DatasetConfig::default()
    };
    let config = DatasetConfig {
        gammas_dark: a.gammas_dark.unwrap_or(base.gammas_dark),
        gammas_bright: a.gammas_bright.unwrap_or(base.gammas_bright),
        sigmas_low: a.sigmas_low.unwrap_or(base.sigmas_low),
        sigmas_high: a.sigmas_high.unwrap_or(base.sigmas_high),
        seed,
        test_fraction: a.test_fraction,
        model_input_size: (a.size > 0).then_some(a.size),
        ..base
    };
    let samples = generate_dataset(&a.clean_dir, &a.out, &config)?;
    let (train, test): (Vec<_>, Vec<_>) = samples.iter().cloned().partition(|s| s.split == Split::Train);
    write_manifest(&a.out.join("manifest.jsonl"), &samples)?;
    write_manifest(&a.out.join("train.jsonl"), &train)?;
    write_manifest(&a.out.join("test.jsonl"), &test)?;
    println!("{} samples ({} train, {} test)", samples.len(), train.len(), test.len());
    Ok(())
}

fn read_nonempty_manifest(path: &Path) -> Result<Vec<SequenceSample>> {
    let samples = read_manifest(path)?;
    if samples.is_empty() {
        bail!("manifest {} has no samples", path.display());
    }
    Ok(samples)
}

fn cmd_train(a: TrainArgs, seed: u64) -> Result<()> {
    let manifest = read_nonempty_manifest(&a.manifest)?;
    let hyper = TrainHyper {
        lr: a.lr,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed,
    };
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("log.jsonl"));
    let accuracy = match a.arch {
        Arch::Mtl => {
            let mut model = MultiTaskModel::new(ModelConfig::default(), seed)?;
            let acc = fit(&mut model, &manifest, &hyper, &log_path)?;
            save_checkpoint(&model, &a.out)?;
            acc
        }
        Arch::Hcc => {
            let mut model = ClassifierModel::new(ClassifierConfig::default(), seed)?;
            let acc = fit(&mut model, &manifest, &hyper, &log_path)?;
            save_checkpoint(&model, &a.out)?;
            acc
        }
    };
    println!("final train accuracy: {accuracy:.4}");
    Ok(())
}

/// Trains in place, streaming epoch logs, and returns accuracy on the
/// training set afterwards.
fn fit<M: Trainable + Identifier>(
    model: &mut M,
    manifest: &[SequenceSample],
    hyper: &TrainHyper,
    log: &Path,
) -> Result<f64> {
    let data = load_labeled(manifest, model.input_size())?;
    let mut file = fs::File::create(log).with_context(|| format!("creating {}", log.display()))?;
    let mut write_err = None;
    train_on(model, &data, hyper, |l| {
        eprintln!(
            "epoch {} loss {:.5} accuracy {:.4}",
            l.epoch, l.mean_loss, l.train_accuracy
        );
        let line = serde_json::to_string(l).expect("epoch log serializes");
        if let Err(e) = writeln!(file, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", log.display()));
    }
    Ok(identify_accuracy(&*model, &data))
}

fn identifier(model: &LoadedModel) -> &dyn Identifier {
    match model {
        LoadedModel::MultiTask(m) => m,
        LoadedModel::Classifier(m) => m,
    }
}

fn cmd_identify(a: IdentifyArgs) -> Result<()> {
    let loaded = load_checkpoint(&a.model)?;
    let model = identifier(&loaded);
    if let Some(path) = a.input.image {
        let img = load_image(&path)?;
        let scores = model.kind_scores(&img);
        let detail: Vec<String> = DistortionKind::ALL
            .iter()
            .zip(&scores)
            .map(|(k, p)| format!("{k}={p:.4}"))
            .collect();
        println!("{} ({})", model.identify(&img), detail.join(" "));
        return Ok(());
    }
    let manifest = read_nonempty_manifest(a.input.manifest.as_deref().expect("input group is required"))?;
    let size = match &loaded {
        LoadedModel::MultiTask(m) => m.config().input_size,
        LoadedModel::Classifier(m) => m.config().input_size,
    };
    let data = load_labeled(&manifest, size)?;
    println!(
        "accuracy {:.4} on {} samples",
        identify_accuracy(model, &data),
        data.len()
    );
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_clean(a: CleanArgs) -> Result<()> {
    let model = load_multitask(&a.model)?;
    if let Some(path) = &a.input.image {
        let img = load_image(path)?;
        let reference = a.reference.as_ref().map(load_image).transpose()?;
        let (restored, trace) = run_pipeline(&model, &img, &a.pool, a.max_iters)?;
        save_image(&restored, &a.out)?;
        if let Some(t) = &a.trace {
            write_json(t, &trace.record(reference.as_ref())?)?;
        }
        let applied: Vec<&str> = trace.steps.iter().filter_map(|s| s.chosen.as_deref()).collect();
        println!(
            "{} corrections [{}], stopped: {:?}",
            applied.len(),
            applied.join(", "),
            trace.terminated
        );
        return Ok(());
    }
    let manifest = read_nonempty_manifest(a.input.manifest.as_deref().expect("input group is required"))?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if let Some(t) = &a.trace {
        fs::create_dir_all(t).with_context(|| format!("creating {}", t.display()))?;
    }
    let corrections: Vec<usize> = manifest
        .par_iter()
        .map(|s| -> Result<usize> {
            let img = load_image(&s.distorted_path)?;
            let clean = load_image(&s.clean_path)?;
            let (restored, trace) = run_pipeline(&model, &img, &a.pool, a.max_iters)?;
            save_image(&restored, a.out.join(format!("{}.png", s.id)))?;
            if let Some(t) = &a.trace {
                write_json(&t.join(format!("{}.json", s.id)), &trace.record(Some(&clean))?)?;
            }
            Ok(trace.steps.iter().filter(|st| st.chosen.is_some()).count())
        })
        .collect::<Result<_>>()?;
    println!(
        "restored {} images with {} corrections",
        corrections.len(),
        corrections.iter().sum::<usize>()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs, seed: u64) -> Result<()> {
    let manifest = read_nonempty_manifest(&a.manifest)?;
    let multitask = a.model.as_ref().map(load_multitask).transpose()?;
    let classifier = a
        .hcc_model
        .as_ref()
        .map(deepclean_core::model::load_classifier)
        .transpose()?;
    let models = EvalModels {
        multitask: multitask.as_ref().map(|m| m as _),
        classifier: classifier.as_ref().map(|m| m as _),
    };
    let report = evaluate(&manifest, &a.strategies, models, &a.pool, seed, a.max_iters)?;
    let json = a.report.with_extension("json");
    let csv = a.report.with_extension("csv");
    report
        .write(&json, &csv)
        .with_context(|| format!("writing {}", json.display()))?;
    println!(
        "distorted input: {:.3} dB over {} samples",
        report.distorted_mean_psnr, report.n_samples
    );
    for (rank, r) in report.ranking().iter().enumerate() {
        let norm = r
            .normalized_score
            .map(|v| format!(" normalized {v:.3}"))
            .unwrap_or_default();
        let acc = r
            .id_accuracy
            .map(|v| format!(" id-accuracy {v:.3}"))
            .unwrap_or_default();
        println!("{}. {} {:.3} dB{norm}{acc}", rank + 1, r.strategy, r.mean_psnr);
    }
    Ok(())
}
