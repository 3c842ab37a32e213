use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::{DistortionKind, SequenceSample};
use crate::imaging::{load_image, resize_bilinear, ImageU8};
use crate::nn::{adam_step, AdamConfig, Parameter, Scalar, Tensor};
use crate::seeding::stream;

use super::network::input_tensor;
use super::{Identifier, ModelError};

/// Samples per gradient partial sum. Partials are reduced in index order,
/// so results do not depend on the worker count.
const GRAD_CHUNK: usize = 4;

/// A network that can report per-sample loss gradients.
pub trait Trainable: Sync {
    type Elem: Scalar;

    fn input_size(&self) -> usize;
    fn parameters(&self) -> Vec<&Parameter<Self::Elem>>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<Self::Elem>>;

    /// Adds the loss gradient of one sample to `grads` (aligned with
    /// `parameters`). Returns the loss and the predicted kind index.
    fn accumulate_gradients(
        &self,
        input: &Tensor<Self::Elem>,
        label: DistortionKind,
        grads: &mut [Tensor<Self::Elem>],
    ) -> (f64, usize);
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: ImageU8,
    pub label: DistortionKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 5e-4,
            epochs: 10,
            batch_size: 32,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Loads manifest images resized to the network input size.
pub fn load_labeled(samples: &[SequenceSample], size: usize) -> Result<Vec<LabeledImage>, ModelError> {
    samples
        .par_iter()
        .map(|s| {
            let img = load_image(&s.distorted_path).map_err(crate::distortion::DistortionError::from)?;
            Ok(LabeledImage {
                image: resize_bilinear(&img, size, size),
                label: s.label,
            })
        })
        .collect()
}

/// Trains on the images listed in a manifest.
pub fn train<M: Trainable>(
    model: &mut M,
    manifest: &[SequenceSample],
    hyper: &TrainHyper,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, ModelError> {
    check_labels(manifest.iter().map(|s| s.label))?;
    let data = load_labeled(manifest, model.input_size())?;
    train_on(model, &data, hyper, on_epoch)
}

fn check_labels(mut labels: impl Iterator<Item = DistortionKind>) -> Result<(), ModelError> {
    let first = labels.next().ok_or(ModelError::EmptyTrainingSet)?;
    if labels.all(|l| l == first) {
        return Err(ModelError::SingleLabel(first));
    }
    Ok(())
}

/// Minibatch Adam over a seeded shuffle of `data`, calling `on_epoch` after
/// every epoch.
/// Summed loss, hit count and gradients of one chunk of a batch.
type ChunkGrads<T> = (f64, usize, Vec<Tensor<T>>);

pub fn train_on<M: Trainable>(
    model: &mut M,
    data: &[LabeledImage],
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, ModelError> {
    check_labels(data.iter().map(|d| d.label))?;
    if hyper.batch_size == 0 {
        return Err(ModelError::Hyper("batch_size must be positive".into()));
    }
    if !(hyper.lr > 0.0 && hyper.lr.is_finite()) || !(hyper.weight_decay >= 0.0) {
        return Err(ModelError::Hyper(
            "lr must be positive and weight_decay non-negative".into(),
        ));
    }
    let adam = AdamConfig {
        lr: hyper.lr,
        weight_decay: hyper.weight_decay,
        ..AdamConfig::default()
    };
    let size = model.input_size();
    let shapes: Vec<Vec<usize>> = model.parameters().iter().map(|p| p.shape().to_vec()).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0u64;
    let mut log = Vec::with_capacity(hyper.epochs);
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut stream(hyper.seed, &format!("epoch-{epoch}")));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(hyper.batch_size) {
            let m: &M = model;
            let partials: Vec<ChunkGrads<M::Elem>> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grads: Vec<Tensor<M::Elem>> = shapes.iter().map(|s| Tensor::zeros(s.clone())).collect();
                    let (mut loss, mut hits) = (0.0, 0);
                    for &i in chunk {
                        let sample = &data[i];
                        let input = input_tensor(&sample.image, size);
                        let (l, pred) = m.accumulate_gradients(&input, sample.label, &mut grads);
                        loss += l;
                        hits += usize::from(pred == sample.label.index());
                    }
                    (loss, hits, grads)
                })
                .collect();
            let scale = M::Elem::lit(1.0 / batch.len() as f64);
            let mut params = model.parameters_mut();
            for (loss, hits, grads) in partials {
                loss_sum += loss;
                correct += hits;
                for (p, g) in params.iter_mut().zip(&grads) {
                    for (dst, &v) in p.grad.data_mut().iter_mut().zip(g.data()) {
                        *dst += v * scale;
                    }
                }
            }
            step += 1;
            adam_step(params, &adam, step);
        }
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}

/// Fraction of samples whose identified kind equals the label.
pub fn identify_accuracy<M: Identifier + ?Sized>(model: &M, data: &[LabeledImage]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits: usize = data
        .par_iter()
        .map(|d| usize::from(model.identify(&d.image) == d.label))
        .sum();
    hits as f64 / data.len() as f64
}
