//! Synthetic corruptions, distortion sequences and labeled dataset
//! generation.

mod dataset;
mod kind;
pub mod scenes;
mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use dataset::{generate_dataset, load_pair, read_manifest, write_manifest, DatasetConfig, SequenceSample, Split};
pub use kind::{DistortionKind, DistortionSpec};
pub(crate) use synth::gamma_lut;
pub use synth::{
    add_noise_with, apply_gamma, apply_gaussian_noise, apply_sequence, apply_sequence_with_mean, apply_spec,
    classify_gamma, latest_label,
};

use crate::imaging::ImageError;

#[derive(Debug, Error)]
pub enum DistortionError {
    #[error("gamma must be positive, finite and not 1 (got {0})")]
    InvalidGamma(f64),
    #[error("noise sigma must be non-negative and finite (got {0})")]
    InvalidSigma(f64),
    #[error("invalid distortion {kind} with parameter {param}")]
    InvalidSpec { kind: DistortionKind, param: f64 },
    #[error("unknown distortion kind {0:?}")]
    UnknownKind(String),
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("no decodable images in {0}")]
    EmptySource(PathBuf),
    #[error("two clean sources share the stem {0:?}")]
    DuplicateSource(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl DistortionError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DistortionError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
