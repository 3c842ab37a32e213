//! Iterative restoration: identify the most recent distortion, rank the
//! correctors that target it by the cosine similarity between head features
//! of their output and of the current image, apply the least similar one,
//! and repeat until the image is predicted clean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correctors::AlgorithmPool;
use crate::distortion::DistortionKind;
use crate::imaging::{psnr, psnr_serde, ImageError, ImageU8};
use crate::model::{FeatureModel, Identifier};

pub const DEFAULT_MAX_ITERS: usize = 4;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a clean image has no correction to select")]
    CleanKind,
    #[error("max_iters must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// `a·b / (‖a‖‖b‖)`, or 0 when either vector is all zeros.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, PlannerError> {
    if a.len() != b.len() {
        return Err(PlannerError::LengthMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn identify<M: Identifier + ?Sized>(model: &M, img: &ImageU8) -> DistortionKind {
    model.identify(img)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    pub cosine: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub identified: DistortionKind,
    /// One entry per candidate in registration order.
    pub candidate_scores: Vec<CandidateScore>,
    pub chosen: Option<String>,
    pub image_after: ImageU8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    PredictedClean,
    MaxIters,
    NoCandidates,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineTrace {
    pub steps: Vec<StepResult>,
    pub terminated: Termination,
    pub iterations: usize,
}

impl PipelineTrace {
    /// Checks the structural invariants of a finished run.
    pub fn check(&self, max_iters: usize) -> Result<(), String> {
        if self.iterations != self.steps.len() {
            return Err(format!("iterations {} != steps {}", self.iterations, self.steps.len()));
        }
        if self.iterations > max_iters || self.iterations == 0 {
            return Err(format!("iterations {} outside 1..={max_iters}", self.iterations));
        }
        let last = self.steps.last().unwrap();
        if (last.identified == DistortionKind::Clean) != (self.terminated == Termination::PredictedClean) {
            return Err(format!(
                "last step {:?} with termination {:?}",
                last.identified, self.terminated
            ));
        }
        for (i, step) in self.steps.iter().enumerate() {
            let stops = step.identified == DistortionKind::Clean || step.candidate_scores.is_empty();
            if stops != step.chosen.is_none() {
                return Err(format!("step {i}: chosen {:?} inconsistent", step.chosen));
            }
            if stops && i + 1 != self.steps.len() {
                return Err(format!("step {i} stops the run but is not last"));
            }
            if let Some(name) = &step.chosen {
                let best = step
                    .candidate_scores
                    .iter()
                    .map(|c| c.cosine)
                    .fold(f64::INFINITY, f64::min);
                let score = step.candidate_scores.iter().find(|c| &c.name == name).map(|c| c.cosine);
                if score != Some(best) {
                    return Err(format!("step {i}: {name} does not minimize the score"));
                }
            }
        }
        match self.terminated {
            Termination::MaxIters if self.iterations != max_iters => Err("max_iters before the cap".into()),
            Termination::NoCandidates if !last.candidate_scores.is_empty() => {
                Err("no_candidates with candidates".into())
            }
            _ => Ok(()),
        }
    }
}

fn select_with_reference<M: FeatureModel + ?Sized>(
    model: &M,
    img: &ImageU8,
    kind: DistortionKind,
    reference: &[f64],
    pool: &AlgorithmPool,
) -> Result<StepResult, PlannerError> {
    let candidates = pool.candidates_for(kind).map_err(|_| PlannerError::CleanKind)?;
    let evaluated: Vec<(f64, ImageU8)> = candidates
        .par_iter()
        .map(|alg| {
            let out = alg.apply(img);
            let features = model.analyze(&out);
            let score = cosine_similarity(features.hidden(kind), reference)?;
            Ok((score, out))
        })
        .collect::<Result<_, PlannerError>>()?;
    let mut best: Option<usize> = None;
    for (i, (score, _)) in evaluated.iter().enumerate() {
        if best.is_none_or(|b| *score < evaluated[b].0) {
            best = Some(i);
        }
    }
    let candidate_scores = candidates
        .iter()
        .zip(&evaluated)
        .map(|(alg, (score, _))| CandidateScore {
            name: alg.name().to_string(),
            cosine: *score,
        })
        .collect();
    let chosen = best.map(|i| candidates[i].name().to_string());
    let image_after = match best {
        Some(i) => evaluated.into_iter().nth(i).unwrap().1,
        None => img.clone(),
    };
    Ok(StepResult {
        identified: kind,
        candidate_scores,
        chosen,
        image_after,
    })
}

/// Applies every corrector in `pool` that targets `kind` and chooses the
/// one whose output is least similar to `img` in the `kind` head's feature
/// space. Ties go to the first registered candidate.
pub fn select<M: FeatureModel + ?Sized>(
    model: &M,
    img: &ImageU8,
    kind: DistortionKind,
    pool: &AlgorithmPool,
) -> Result<StepResult, PlannerError> {
    if kind == DistortionKind::Clean {
        return Err(PlannerError::CleanKind);
    }
    let features = model.analyze(img);
    select_with_reference(model, img, kind, features.hidden(kind), pool)
}

/// Repeats identify, select and apply until the image is predicted clean,
/// no candidate targets the identified kind, or `max_iters` corrections
/// have been applied. The reference features are recomputed from the
/// current image on every iteration.
pub fn run_pipeline<M: FeatureModel + ?Sized>(
    model: &M,
    img: &ImageU8,
    pool: &AlgorithmPool,
    max_iters: usize,
) -> Result<(ImageU8, PipelineTrace), PlannerError> {
    if max_iters == 0 {
        return Err(PlannerError::ZeroIterations);
    }
    let mut current = img.clone();
    let mut steps = Vec::new();
    let mut terminated = Termination::MaxIters;
    for _ in 0..max_iters {
        let kind = model.identify(&current);
        if kind == DistortionKind::Clean {
            steps.push(StepResult {
                identified: kind,
                candidate_scores: Vec::new(),
                chosen: None,
                image_after: current.clone(),
            });
            terminated = Termination::PredictedClean;
            break;
        }
        let features = model.analyze(&current);
        let step = select_with_reference(model, &current, kind, features.hidden(kind), pool)?;
        current = step.image_after.clone();
        let stop = step.chosen.is_none();
        steps.push(step);
        if stop {
            terminated = Termination::NoCandidates;
            break;
        }
    }
    let iterations = steps.len();
    Ok((
        current,
        PipelineTrace {
            steps,
            terminated,
            iterations,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub identified: DistortionKind,
    pub scores: Vec<CandidateScore>,
    pub chosen: Option<String>,
    #[serde(with = "psnr_serde::option", skip_serializing_if = "Option::is_none", default)]
    pub psnr_vs_reference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub steps: Vec<StepRecord>,
    pub terminated: Termination,
    pub iterations: usize,
}

impl PipelineTrace {
    /// Serializable form, with per-step PSNR against `reference` when given.
    pub fn record(&self, reference: Option<&ImageU8>) -> Result<TraceRecord, PlannerError> {
        let steps = self
            .steps
            .iter()
            .map(|s| {
                Ok(StepRecord {
                    identified: s.identified,
                    scores: s.candidate_scores.clone(),
                    chosen: s.chosen.clone(),
                    psnr_vs_reference: reference.map(|r| psnr(&s.image_after, r)).transpose()?,
                })
            })
            .collect::<Result<_, PlannerError>>()?;
        Ok(TraceRecord {
            steps,
            terminated: self.terminated,
            iterations: self.iterations,
        })
    }
}
