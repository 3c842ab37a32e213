//! Restoration strategies compared against each other: the feature-guided
//! planner, a ground-truth oracle, random candidate choice, a multiclass
//! classifier with a fixed corrector map, and two input-independent
//! pipelines.

mod eval;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correctors::{corrector_by_name, gamma_corrector, gaussian_blur, AlgorithmPool, CorrectorError};
use crate::distortion::{apply_gamma, DistortionError, DistortionKind, DistortionSpec, SequenceSample};
use crate::imaging::{psnr, ImageError, ImageU8};
use crate::model::{ClassifierConfig, ClassifierModel, Identifier, ModelError, TrainHyper};
use crate::planner::PlannerError;

pub use eval::{evaluate, evaluate_samples, EvalModels, EvalReport, EvalSample, LabelStats, StrategyReport, PSNR_CAP};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("unknown strategy {0:?} (valid: deepclean, oracle, random, hcc, fixed1, fixed2)")]
    UnknownStrategy(String),
    #[error("strategy {0} needs a model that was not supplied")]
    MissingModel(Strategy),
    #[error("corrector {0:?} is not in the pool")]
    MissingCorrector(String),
    #[error("the pool has no candidate for {0}")]
    NoCandidate(DistortionKind),
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("normalization bounds are equal ({0})")]
    DegenerateBounds(f64),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DistortionError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Corrector(#[from] CorrectorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "deepclean")]
    DeepClean,
    #[serde(rename = "oracle")]
    OracleMtl,
    #[serde(rename = "random")]
    RandomMtl,
    #[serde(rename = "hcc")]
    HardCodedClassifier,
    #[serde(rename = "fixed1")]
    Fixed1,
    #[serde(rename = "fixed2")]
    Fixed2,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::DeepClean,
        Strategy::OracleMtl,
        Strategy::RandomMtl,
        Strategy::HardCodedClassifier,
        Strategy::Fixed1,
        Strategy::Fixed2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::DeepClean => "deepclean",
            Strategy::OracleMtl => "oracle",
            Strategy::RandomMtl => "random",
            Strategy::HardCodedClassifier => "hcc",
            Strategy::Fixed1 => "fixed1",
            Strategy::Fixed2 => "fixed2",
        }
    }

    pub fn needs_multitask(self) -> bool {
        matches!(self, Strategy::DeepClean | Strategy::RandomMtl)
    }

    pub fn needs_classifier(self) -> bool {
        self == Strategy::HardCodedClassifier
    }

    /// Parses a comma-separated list, keeping order and dropping repeats.
    pub fn parse_list(list: &str) -> Result<Vec<Strategy>, StrategyError> {
        let mut out = Vec::new();
        for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let s: Strategy = part.parse()?;
            if !out.contains(&s) {
                out.push(s);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

/// Result of restoring one image.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub restored: ImageU8,
    /// Kind identified on the first iteration, for model-driven strategies.
    pub first_identified: Option<DistortionKind>,
    pub applied: Vec<String>,
}

/// Corrector the multiclass baseline applies for each identified kind.
pub fn hcc_corrector_name(kind: DistortionKind) -> Option<&'static str> {
    match kind {
        DistortionKind::Clean => None,
        DistortionKind::Underexposed => Some("gamma_0.5"),
        DistortionKind::Overexposed => Some("gamma_1.25"),
        DistortionKind::NoiseLow => Some("blur_0.8"),
        DistortionKind::NoiseHigh => Some("blur_1.5"),
    }
}

/// Denoiser the oracle uses for a noise level.
pub fn oracle_denoiser_name(kind: DistortionKind) -> Option<&'static str> {
    match kind {
        DistortionKind::NoiseLow => Some("blur_0.8"),
        DistortionKind::NoiseHigh => Some("blur_1.5"),
        _ => None,
    }
}

/// Identify-then-correct loop shared by the model-driven baselines. `choose`
/// returns the corrector to apply for the identified kind, or `None` to stop.
fn iterate<I, F>(identifier: &I, img: &ImageU8, max_iters: usize, mut choose: F) -> Result<Outcome, StrategyError>
where
    I: Identifier + ?Sized,
    F: FnMut(DistortionKind) -> Result<Option<crate::correctors::CorrectionAlgorithm>, StrategyError>,
{
    if max_iters == 0 {
        return Err(PlannerError::ZeroIterations.into());
    }
    let mut current = img.clone();
    let mut first = None;
    let mut applied = Vec::new();
    for _ in 0..max_iters {
        let kind = identifier.identify(&current);
        first.get_or_insert(kind);
        if kind == DistortionKind::Clean {
            break;
        }
        match choose(kind)? {
            Some(alg) => {
                current = alg.apply(&current);
                applied.push(alg.name().to_string());
            }
            None => break,
        }
    }
    Ok(Outcome {
        restored: current,
        first_identified: first,
        applied,
    })
}

/// Multiclass identification with the fixed kind-to-corrector map.
pub fn hcc_strategy<I: Identifier + ?Sized>(
    model: &I,
    img: &ImageU8,
    pool: &AlgorithmPool,
    max_iters: usize,
) -> Result<Outcome, StrategyError> {
    iterate(model, img, max_iters, |kind| {
        let name = hcc_corrector_name(kind).expect("non-clean kind");
        pool.get(name)
            .cloned()
            .map(Some)
            .ok_or_else(|| StrategyError::MissingCorrector(name.to_string()))
    })
}

/// Multi-task identification with a uniformly random candidate per step.
pub fn random_mtl_strategy<I: Identifier + ?Sized, R: Rng + ?Sized>(
    model: &I,
    img: &ImageU8,
    pool: &AlgorithmPool,
    rng: &mut R,
    max_iters: usize,
) -> Result<Outcome, StrategyError> {
    iterate(model, img, max_iters, |kind| {
        let candidates = pool.candidates_for(kind)?;
        if candidates.is_empty() {
            return Ok(None);
        }
        Ok(Some(candidates[rng.random_range(0..candidates.len())].clone()))
    })
}

/// Undoes the ground-truth sequence from last to first: exposure with the
/// exact inverse exponent, noise with the denoiser designated for its level.
pub fn oracle_strategy(
    sequence: &[DistortionSpec],
    img: &ImageU8,
    pool: &AlgorithmPool,
) -> Result<Outcome, StrategyError> {
    let mut current = img.clone();
    let mut applied = Vec::new();
    for spec in sequence.iter().rev() {
        if pool.candidates_for(spec.kind)?.is_empty() {
            return Err(StrategyError::NoCandidate(spec.kind));
        }
        let alg = if spec.kind.is_exposure() {
            gamma_corrector(1.0 / spec.param)?
        } else {
            corrector_by_name(oracle_denoiser_name(spec.kind).expect("noise kind"))?
        };
        current = alg.apply(&current);
        applied.push(alg.name().to_string());
    }
    Ok(Outcome {
        restored: current,
        first_identified: None,
        applied,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedVariant {
    /// Exponent 2.0 then a 0.8 blur.
    ExposureThenDenoise,
    /// The same steps in reverse order.
    DenoiseThenExposure,
}

pub const FIXED_GAMMA: f64 = 2.0;
pub const FIXED_BLUR_SIGMA: f64 = 0.8;

/// Input-independent two-step pipeline.
pub fn fixed_pipeline(img: &ImageU8, variant: FixedVariant) -> ImageU8 {
    let expose = |i: &ImageU8| apply_gamma(i, FIXED_GAMMA, 1.0).expect("valid exponent");
    match variant {
        FixedVariant::ExposureThenDenoise => gaussian_blur(&expose(img), FIXED_BLUR_SIGMA),
        FixedVariant::DenoiseThenExposure => expose(&gaussian_blur(img, FIXED_BLUR_SIGMA)),
    }
}

/// Candidate whose output has the highest PSNR against `clean`; the first
/// listed wins ties.
pub fn brute_force_best(
    img: &ImageU8,
    clean: &ImageU8,
    candidates: &[&crate::correctors::CorrectionAlgorithm],
) -> Result<String, StrategyError> {
    let mut best: Option<(f64, &str)> = None;
    for alg in candidates {
        let q = psnr(&alg.apply(img), clean)?;
        if best.is_none_or(|(b, _)| q > b) {
            best = Some((q, alg.name()));
        }
    }
    best.map(|(_, n)| n.to_string()).ok_or(StrategyError::EmptyCandidates)
}

/// `(x − lower) / (upper − lower)`.
pub fn normalized_score(x: f64, lower: f64, upper: f64) -> Result<f64, StrategyError> {
    if upper == lower {
        return Err(StrategyError::DegenerateBounds(upper));
    }
    Ok((x - lower) / (upper - lower))
}

/// Trains the multiclass baseline on a manifest.
pub fn train_hcc(
    manifest: &[SequenceSample],
    config: ClassifierConfig,
    init_seed: u64,
    hyper: &TrainHyper,
    on_epoch: impl FnMut(&crate::model::EpochLog),
) -> Result<ClassifierModel, StrategyError> {
    if manifest.is_empty() {
        return Err(ModelError::EmptyTrainingSet.into());
    }
    let mut model = ClassifierModel::new(config, init_seed)?;
    crate::model::train(&mut model, manifest, hyper, on_epoch)?;
    Ok(model)
}
