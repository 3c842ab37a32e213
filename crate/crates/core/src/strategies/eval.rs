use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correctors::AlgorithmPool;
use crate::distortion::{load_pair, DistortionError, DistortionKind, DistortionSpec, SequenceSample};
use crate::imaging::{psnr, ImageU8};
use crate::model::{FeatureModel, Identifier};
use crate::planner::run_pipeline;
use crate::seeding::stream;

use super::{
    fixed_pipeline, hcc_strategy, normalized_score, oracle_strategy, random_mtl_strategy, FixedVariant, Outcome,
    Strategy, StrategyError,
};

/// Per-sample PSNR ceiling applied before averaging, so unchanged clean
/// inputs (infinite PSNR) contribute a finite value.
pub const PSNR_CAP: f64 = 60.0;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSample {
    pub id: String,
    pub label: DistortionKind,
    pub sequence: Vec<DistortionSpec>,
    pub distorted: ImageU8,
    pub clean: ImageU8,
}

impl EvalSample {
    pub fn load(sample: &SequenceSample) -> Result<Self, DistortionError> {
        let (clean, distorted) = load_pair(sample)?;
        Ok(Self {
            id: sample.id.clone(),
            label: sample.label,
            sequence: sample.sequence.clone(),
            distorted,
            clean,
        })
    }
}

/// Models available to an evaluation run.
#[derive(Clone, Copy, Default)]
pub struct EvalModels<'a> {
    pub multitask: Option<&'a dyn FeatureModel>,
    pub classifier: Option<&'a dyn Identifier>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub n: usize,
    pub mean_psnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub mean_psnr: f64,
    pub id_accuracy: Option<f64>,
    pub normalized_score: Option<f64>,
    pub per_label: BTreeMap<DistortionKind, LabelStats>,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub n_samples: usize,
    pub psnr_cap: f64,
    pub max_iters: usize,
    /// PSNR of the unrestored inputs.
    pub distorted_mean_psnr: f64,
    pub distorted_per_label: BTreeMap<DistortionKind, LabelStats>,
    pub strategies: Vec<StrategyReport>,
}

impl EvalReport {
    pub fn get(&self, strategy: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == strategy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,mean_psnr,id_accuracy,normalized_score,n_samples\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.strategies {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.strategy,
                r.mean_psnr,
                opt(r.id_accuracy),
                opt(r.normalized_score),
                r.n_samples
            );
        }
        out
    }

    /// Strategies sorted by mean PSNR, best first.
    pub fn ranking(&self) -> Vec<&StrategyReport> {
        let mut v: Vec<_> = self.strategies.iter().collect();
        v.sort_by(|a, b| b.mean_psnr.total_cmp(&a.mean_psnr));
        v
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(json_path, json + "\n")?;
        std::fs::write(csv_path, self.to_csv())
    }
}

fn capped(q: f64) -> f64 {
    q.min(PSNR_CAP)
}

/// Loads every manifest sample and evaluates it.
pub fn evaluate(
    manifest: &[SequenceSample],
    strategies: &[Strategy],
    models: EvalModels<'_>,
    pool: &AlgorithmPool,
    seed: u64,
    max_iters: usize,
) -> Result<EvalReport, StrategyError> {
    check_models(strategies, &models)?;
    let samples = manifest
        .par_iter()
        .map(EvalSample::load)
        .collect::<Result<Vec<_>, _>>()?;
    evaluate_samples(&samples, strategies, models, pool, seed, max_iters)
}

fn check_models(strategies: &[Strategy], models: &EvalModels<'_>) -> Result<(), StrategyError> {
    for &s in strategies {
        if (s.needs_multitask() && models.multitask.is_none()) || (s.needs_classifier() && models.classifier.is_none())
        {
            return Err(StrategyError::MissingModel(s));
        }
    }
    Ok(())
}

fn run_one(
    strategy: Strategy,
    sample: &EvalSample,
    models: &EvalModels<'_>,
    pool: &AlgorithmPool,
    seed: u64,
    max_iters: usize,
) -> Result<Outcome, StrategyError> {
    let img = &sample.distorted;
    Ok(match strategy {
        Strategy::DeepClean => {
            let model = models.multitask.ok_or(StrategyError::MissingModel(strategy))?;
            let (restored, trace) = run_pipeline(model, img, pool, max_iters)?;
            Outcome {
                restored,
                first_identified: trace.steps.first().map(|s| s.identified),
                applied: trace.steps.iter().filter_map(|s| s.chosen.clone()).collect(),
            }
        }
        Strategy::RandomMtl => {
            let model = models.multitask.ok_or(StrategyError::MissingModel(strategy))?;
            let mut rng = stream(seed, &format!("random-mtl/{}", sample.id));
            random_mtl_strategy(model, img, pool, &mut rng, max_iters)?
        }
        Strategy::HardCodedClassifier => {
            let model = models.classifier.ok_or(StrategyError::MissingModel(strategy))?;
            hcc_strategy(model, img, pool, max_iters)?
        }
        Strategy::OracleMtl => oracle_strategy(&sample.sequence, img, pool)?,
        Strategy::Fixed1 | Strategy::Fixed2 => {
            let variant = if strategy == Strategy::Fixed1 {
                FixedVariant::ExposureThenDenoise
            } else {
                FixedVariant::DenoiseThenExposure
            };
            Outcome {
                restored: fixed_pipeline(img, variant),
                first_identified: None,
                applied: vec![strategy.name().to_string()],
            }
        }
    })
}

struct Accumulator {
    sum: f64,
    hits: usize,
    identified: usize,
    per_label: BTreeMap<DistortionKind, (usize, f64)>,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            sum: 0.0,
            hits: 0,
            identified: 0,
            per_label: BTreeMap::new(),
        }
    }

    fn add(&mut self, label: DistortionKind, q: f64, correct: Option<bool>) {
        self.sum += q;
        if let Some(c) = correct {
            self.identified += 1;
            self.hits += usize::from(c);
        }
        let e = self.per_label.entry(label).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += q;
    }

    fn per_label(&self) -> BTreeMap<DistortionKind, LabelStats> {
        self.per_label
            .iter()
            .map(|(&k, &(n, s))| {
                (
                    k,
                    LabelStats {
                        n,
                        mean_psnr: s / n as f64,
                    },
                )
            })
            .collect()
    }
}

/// Runs each strategy over every sample and aggregates capped PSNR against
/// the clean references. Results are independent of the worker count.
pub fn evaluate_samples(
    samples: &[EvalSample],
    strategies: &[Strategy],
    models: EvalModels<'_>,
    pool: &AlgorithmPool,
    seed: u64,
    max_iters: usize,
) -> Result<EvalReport, StrategyError> {
    check_models(strategies, &models)?;
    type Row = (f64, Vec<(f64, Option<bool>)>);
    let rows: Vec<Row> = samples
        .par_iter()
        .map(|s| {
            let base = capped(psnr(&s.distorted, &s.clean)?);
            let per = strategies
                .iter()
                .map(|&st| {
                    let out = run_one(st, s, &models, pool, seed, max_iters)?;
                    let q = capped(psnr(&out.restored, &s.clean)?);
                    Ok((q, out.first_identified.map(|k| k == s.label)))
                })
                .collect::<Result<Vec<_>, StrategyError>>()?;
            Ok((base, per))
        })
        .collect::<Result<_, StrategyError>>()?;

    let mut base = Accumulator::new();
    let mut accs: Vec<Accumulator> = strategies.iter().map(|_| Accumulator::new()).collect();
    for (s, (b, per)) in samples.iter().zip(&rows) {
        base.add(s.label, *b, None);
        for (acc, &(q, correct)) in accs.iter_mut().zip(per) {
            acc.add(s.label, q, correct);
        }
    }
    let n = samples.len();
    let mean = |sum: f64| if n == 0 { 0.0 } else { sum / n as f64 };
    let mut reports: Vec<StrategyReport> = strategies
        .iter()
        .zip(&accs)
        .map(|(&strategy, acc)| StrategyReport {
            strategy,
            mean_psnr: mean(acc.sum),
            id_accuracy: (acc.identified > 0).then(|| acc.hits as f64 / acc.identified as f64),
            normalized_score: None,
            per_label: acc.per_label(),
            n_samples: n,
        })
        .collect();
    let anchor = |s: Strategy| reports.iter().find(|r| r.strategy == s).map(|r| r.mean_psnr);
    if let (Some(upper), Some(lower)) = (anchor(Strategy::OracleMtl), anchor(Strategy::Fixed1)) {
        if upper != lower {
            for r in &mut reports {
                r.normalized_score = Some(normalized_score(r.mean_psnr, lower, upper)?);
            }
        }
    }
    Ok(EvalReport {
        seed,
        n_samples: n,
        psnr_cap: PSNR_CAP,
        max_iters,
        distorted_mean_psnr: mean(base.sum),
        distorted_per_label: base.per_label(),
        strategies: reports,
    })
}
