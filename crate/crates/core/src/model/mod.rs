//! Distortion identification networks: a multi-task model with one binary
//! head per distortion kind, a single-head multiclass baseline, their
//! training loop and checkpoint persistence.

mod checkpoint;
mod hcc;
mod mtl;
mod network;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, load_classifier, load_multitask, read_header, save_checkpoint, Checkpoint, CheckpointHeader,
    LoadedModel, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use hcc::{ClassifierConfig, ClassifierModel};
pub use mtl::{MultiTaskLoss, MultiTaskModel, FULL_MODEL_STEP};
pub use network::{input_tensor, Extractor, Mlp};
pub use train::{identify_accuracy, load_labeled, train, train_on, EpochLog, LabeledImage, TrainHyper, Trainable};

use crate::distortion::{DistortionError, DistortionKind};
use crate::imaging::ImageU8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training labels cover only {0:?}; at least two kinds are required")]
    SingleLabel(DistortionKind),
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error("{path}: not a checkpoint (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: checkpoint format version {found}, expected {expected}")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: checkpoint truncated")]
    Truncated { path: PathBuf },
    #[error("{path}: checkpoint kind ordering {found:?} does not match {expected:?}")]
    KindOrderMismatch {
        path: PathBuf,
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("{path}: checkpoint holds a {found} model, expected {expected}")]
    ArchMismatch {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("{path}: malformed checkpoint: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DistortionError),
}

/// Architecture of the multi-task identifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Square side length the input image is resized to.
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    /// Head layer widths including the embedding input and the final logit.
    pub head_dims: Vec<usize>,
    pub kinds: Vec<DistortionKind>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            conv_channels: vec![16, 32, 64, 128],
            head_dims: vec![128, 64, 64, 1],
            kinds: DistortionKind::ALL.to_vec(),
        }
    }
}

impl ModelConfig {
    pub fn embedding_dim(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(0)
    }

    /// Width of the head feature used for algorithm selection.
    pub fn hidden_dim(&self) -> usize {
        self.head_dims[self.head_dims.len() - 2]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.input_size < 2 {
            return err("input_size must be at least 2");
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return err("conv_channels must be non-empty and positive");
        }
        if self.head_dims.len() < 3 || self.head_dims.contains(&0) {
            return err("head_dims needs an input, at least one hidden layer and an output");
        }
        if self.head_dims[0] != self.embedding_dim() {
            return err("head input width must equal the embedding width");
        }
        if *self.head_dims.last().unwrap() != 1 {
            return err("each head must end in a single logit");
        }
        if self.kinds != DistortionKind::ALL {
            return err("kinds must list every distortion kind in canonical order");
        }
        Ok(())
    }
}

/// Everything one forward pass exposes. Vectors are indexed by
/// [`DistortionKind::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub embedding: Vec<f64>,
    pub head_hidden: Vec<Vec<f64>>,
    pub head_prob: Vec<f64>,
}

impl ForwardOutput {
    pub fn hidden(&self, kind: DistortionKind) -> &[f64] {
        &self.head_hidden[kind.index()]
    }

    pub fn predicted(&self) -> DistortionKind {
        argmax_kind(&self.head_prob)
    }
}

/// Index of the largest score as a kind; ties go to the lowest index.
pub fn argmax_kind(scores: &[f64]) -> DistortionKind {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    DistortionKind::from_index(best).expect("one score per kind")
}

/// Anything that scores an image against the five kinds.
pub trait Identifier: Sync {
    /// One score per kind in canonical order; higher means more likely.
    fn kind_scores(&self, img: &ImageU8) -> Vec<f64>;

    fn identify(&self, img: &ImageU8) -> DistortionKind {
        argmax_kind(&self.kind_scores(img))
    }
}

/// A model that also exposes per-head features for algorithm selection.
pub trait FeatureModel: Identifier {
    fn analyze(&self, img: &ImageU8) -> ForwardOutput;
}
