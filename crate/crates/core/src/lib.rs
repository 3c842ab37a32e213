//! Two-stage planning for image restoration: a multi-task network names the
//! most recent distortion in an image, then candidate correctors are ranked
//! by how far they move the image away from that distortion in the
//! network's head feature space. The loop repeats until the image is
//! predicted clean.

// Negated comparisons are how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correctors;
pub mod distortion;
pub mod imaging;
pub mod model;
pub mod nn;
pub mod planner;
pub mod seeding;
pub mod strategies;

pub use correctors::{AlgorithmPool, CorrectionAlgorithm};
pub use distortion::{DistortionKind, DistortionSpec, SequenceSample};
pub use imaging::{ImageF32, ImageU8};
