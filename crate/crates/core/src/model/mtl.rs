use crate::distortion::DistortionKind;
use crate::imaging::ImageU8;
use crate::nn::gradcheck::Differentiable;
use crate::nn::{sigmoid, sigmoid_bce, Parameter, Scalar, Tensor, LEAKY_SLOPE};
use crate::seeding::stream;

use super::network::{input_tensor, Extractor, Mlp};
use super::train::Trainable;
use super::{FeatureModel, ForwardOutput, Identifier, ModelConfig, ModelError};

/// Shared convolutional extractor feeding one binary presence head per
/// distortion kind.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTaskModel<T = f32> {
    config: ModelConfig,
    pub(crate) extractor: Extractor<T>,
    pub(crate) heads: Vec<Mlp<T>>,
}

struct Pass<T> {
    logits: Vec<T>,
    output: ForwardOutput,
}

impl<T: Scalar> MultiTaskModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = stream(seed, "multitask-init");
        let extractor = Extractor::new(3, &config.conv_channels, LEAKY_SLOPE, &mut rng);
        let heads = config
            .kinds
            .iter()
            .map(|_| Mlp::new(&config.head_dims, LEAKY_SLOPE, &mut rng))
            .collect();
        Ok(Self {
            config,
            extractor,
            heads,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.extractor.param_names();
        for (kind, head) in self.config.kinds.iter().zip(&self.heads) {
            names.extend(head.param_names(&format!("head.{}", kind.name())));
        }
        names
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        self.extractor
            .params
            .iter()
            .chain(self.heads.iter().flat_map(|h| &h.params))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.extractor
            .params
            .iter_mut()
            .chain(self.heads.iter_mut().flat_map(|h| &mut h.params))
            .collect()
    }

    pub fn input(&self, img: &ImageU8) -> Tensor<T> {
        input_tensor(img, self.config.input_size)
    }

    fn pass(&self, input: &Tensor<T>) -> Pass<T> {
        let (embedding, _) = self.extractor.forward(input);
        let mut logits = Vec::with_capacity(self.heads.len());
        let mut head_hidden = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let (out, cache) = head.forward(&embedding);
            logits.push(out.data()[0]);
            head_hidden.push(cache.penultimate().to_f64());
        }
        let head_prob = logits.iter().map(|&z| sigmoid(z).to_f64().unwrap()).collect();
        Pass {
            output: ForwardOutput {
                embedding: embedding.to_f64(),
                head_hidden,
                head_prob,
            },
            logits,
        }
    }

    pub fn forward(&self, img: &ImageU8) -> ForwardOutput {
        self.pass(&self.input(img)).output
    }

    pub fn logits(&self, img: &ImageU8) -> Vec<f64> {
        self.pass(&self.input(img))
            .logits
            .iter()
            .map(|z| z.to_f64().unwrap())
            .collect()
    }

    /// Sum over heads of the binary cross-entropy against a one-hot target
    /// marking `label`.
    pub fn training_loss(&self, img: &ImageU8, label: DistortionKind) -> f64 {
        heads_loss(&self.pass(&self.input(img)).logits, label)
            .0
            .to_f64()
            .unwrap()
    }

    /// All parameters concatenated in canonical order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value.to_f64()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.value.len();
            for (dst, &v) in p.value.data_mut().iter_mut().zip(&values[offset..offset + n]) {
                *dst = T::lit(v);
            }
            offset += n;
        }
        assert_eq!(offset, values.len(), "flat parameter length");
    }

    pub fn cast<U: Scalar>(&self) -> MultiTaskModel<U> {
        let mut out = MultiTaskModel::<U>::new(self.config.clone(), 0).expect("validated config");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = Parameter::new(src.value.cast());
        }
        out
    }
}

fn heads_loss<T: Scalar>(logits: &[T], label: DistortionKind) -> (T, Vec<T>) {
    let mut total = T::zero();
    let grads = logits
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let (l, g) = sigmoid_bce(z, k == label.index());
            total += l;
            g
        })
        .collect();
    (total, grads)
}

impl<T: Scalar> Trainable for MultiTaskModel<T> {
    type Elem = T;

    fn input_size(&self) -> usize {
        self.config.input_size
    }

    fn parameters(&self) -> Vec<&Parameter<T>> {
        self.params()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.params_mut()
    }

    fn accumulate_gradients(&self, input: &Tensor<T>, label: DistortionKind, grads: &mut [Tensor<T>]) -> (f64, usize) {
        let (embedding, ext_cache) = self.extractor.forward(input);
        let passes: Vec<_> = self.heads.iter().map(|h| h.forward(&embedding)).collect();
        let logits: Vec<T> = passes.iter().map(|(out, _)| out.data()[0]).collect();
        let (loss, dlogits) = heads_loss(&logits, label);

        let n_ext = self.extractor.params.len();
        let (ext_grads, head_grads) = grads.split_at_mut(n_ext);
        let mut g_embedding = Tensor::zeros(embedding.shape().to_vec());
        let per_head = head_grads.len() / self.heads.len();
        for (((head, (_, cache)), g), hg) in self
            .heads
            .iter()
            .zip(&passes)
            .zip(dlogits)
            .zip(head_grads.chunks_mut(per_head))
        {
            let g_out = Tensor::new(vec![1], vec![g]).expect("logit gradient");
            g_embedding.add_assign(&head.backward(cache, &g_out, hg));
        }
        self.extractor.backward(&ext_cache, &g_embedding, ext_grads);
        let scores: Vec<f64> = logits.iter().map(|z| z.to_f64().unwrap()).collect();
        (loss.to_f64().unwrap(), super::argmax_kind(&scores).index())
    }
}

impl<T: Scalar> Identifier for MultiTaskModel<T> {
    fn kind_scores(&self, img: &ImageU8) -> Vec<f64> {
        self.forward(img).head_prob
    }
}

impl<T: Scalar> FeatureModel for MultiTaskModel<T> {
    fn analyze(&self, img: &ImageU8) -> ForwardOutput {
        self.forward(img)
    }
}

/// Difference step for checking the whole network.
pub const FULL_MODEL_STEP: f64 = 1e-4;

/// Full multi-task loss of one fixed input as a function of every model
/// parameter, for finite-difference verification.
pub struct MultiTaskLoss {
    model: MultiTaskModel<f64>,
    input: Tensor<f64>,
    label: DistortionKind,
}

impl MultiTaskLoss {
    pub fn new(model: MultiTaskModel<f64>, img: &ImageU8, label: DistortionKind) -> Self {
        let input = model.input(img);
        Self { model, input, label }
    }

    pub fn probe(&self) -> Vec<f64> {
        self.model.flat_params()
    }
}

impl Differentiable for MultiTaskLoss {
    fn num_vars(&self) -> usize {
        self.model.params().iter().map(|p| p.value.len()).sum()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut m = self.model.clone();
        m.set_flat_params(x);
        heads_loss(&m.pass(&self.input).logits, self.label).0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut m = self.model.clone();
        m.set_flat_params(x);
        let mut grads: Vec<Tensor<f64>> = m.params().iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        m.accumulate_gradients(&self.input, self.label, &mut grads);
        grads.iter().flat_map(|g| g.data().to_vec()).collect()
    }
}
