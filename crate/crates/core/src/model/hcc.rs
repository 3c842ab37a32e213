use serde::{Deserialize, Serialize};

use crate::distortion::DistortionKind;
use crate::imaging::ImageU8;
use crate::nn::{softmax, softmax_cross_entropy, Parameter, Scalar, Tensor, LEAKY_SLOPE};
use crate::seeding::stream;

use super::network::{input_tensor, Extractor, Mlp};
use super::train::Trainable;
use super::{Identifier, ModelError};

/// Architecture of the single-head multiclass baseline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    pub head_dims: Vec<usize>,
    pub kinds: Vec<DistortionKind>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            conv_channels: vec![16, 32, 64, 128],
            head_dims: vec![128, 64, 32, 16, DistortionKind::COUNT],
            kinds: DistortionKind::ALL.to_vec(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.input_size < 2 || self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return err("bad extractor geometry");
        }
        if self.head_dims.len() < 2 || self.head_dims.contains(&0) {
            return err("head_dims needs an input and an output");
        }
        if self.head_dims[0] != *self.conv_channels.last().unwrap() {
            return err("head input width must equal the embedding width");
        }
        if *self.head_dims.last().unwrap() != DistortionKind::COUNT {
            return err("head must output one logit per kind");
        }
        if self.kinds != DistortionKind::ALL {
            return err("kinds must list every distortion kind in canonical order");
        }
        Ok(())
    }
}

/// Same extractor as the multi-task model with one softmax head over all
/// kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel<T = f32> {
    config: ClassifierConfig,
    pub(crate) extractor: Extractor<T>,
    pub(crate) head: Mlp<T>,
}

impl<T: Scalar> ClassifierModel<T> {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = stream(seed, "classifier-init");
        let extractor = Extractor::new(3, &config.conv_channels, LEAKY_SLOPE, &mut rng);
        let head = Mlp::new(&config.head_dims, LEAKY_SLOPE, &mut rng);
        Ok(Self {
            config,
            extractor,
            head,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.extractor.param_names();
        names.extend(self.head.param_names("head"));
        names
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        self.extractor.params.iter().chain(&self.head.params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.extractor.params.iter_mut().chain(&mut self.head.params).collect()
    }

    fn logits_of(&self, input: &Tensor<T>) -> Vec<T> {
        let (embedding, _) = self.extractor.forward(input);
        self.head.forward(&embedding).0.into_data()
    }

    /// Class probabilities in canonical kind order.
    pub fn probabilities(&self, img: &ImageU8) -> Vec<f64> {
        let logits = self.logits_of(&input_tensor(img, self.config.input_size));
        softmax(&logits).into_iter().map(|p| p.to_f64().unwrap()).collect()
    }

    pub fn training_loss(&self, img: &ImageU8, label: DistortionKind) -> f64 {
        let logits = self.logits_of(&input_tensor(img, self.config.input_size));
        softmax_cross_entropy(&logits, label.index()).0.to_f64().unwrap()
    }
}

impl<T: Scalar> Trainable for ClassifierModel<T> {
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
        let (out, cache) = self.head.forward(&embedding);
        let (loss, dlogits) = softmax_cross_entropy(out.data(), label.index());
        let (ext_grads, head_grads) = grads.split_at_mut(self.extractor.params.len());
        let g_out = Tensor::new(vec![dlogits.len()], dlogits).expect("logit gradient");
        let g_embedding = self.head.backward(&cache, &g_out, head_grads);
        self.extractor.backward(&ext_cache, &g_embedding, ext_grads);
        let scores: Vec<f64> = out.data().iter().map(|z| z.to_f64().unwrap()).collect();
        (loss.to_f64().unwrap(), super::argmax_kind(&scores).index())
    }
}

impl<T: Scalar> Identifier for ClassifierModel<T> {
    fn kind_scores(&self, img: &ImageU8) -> Vec<f64> {
        self.probabilities(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::scenes::render_scene;
    use crate::nn::gradcheck::{gradient_check, Differentiable};

    struct ClassifierLoss {
        model: ClassifierModel<f64>,
        input: Tensor<f64>,
    }

    impl ClassifierLoss {
        fn with(&self, x: &[f64]) -> ClassifierModel<f64> {
            let mut m = self.model.clone();
            let mut offset = 0;
            for p in m.params_mut() {
                let n = p.value.len();
                p.value.data_mut().copy_from_slice(&x[offset..offset + n]);
                offset += n;
            }
            m
        }
    }

    impl Differentiable for ClassifierLoss {
        fn num_vars(&self) -> usize {
            self.model.params().iter().map(|p| p.value.len()).sum()
        }
        fn value(&self, x: &[f64]) -> f64 {
            softmax_cross_entropy(&self.with(x).logits_of(&self.input), 3).0
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            let m = self.with(x);
            let mut grads: Vec<Tensor<f64>> = m.params().iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
            m.accumulate_gradients(&self.input, DistortionKind::NoiseLow, &mut grads);
            grads.iter().flat_map(|g| g.data().to_vec()).collect()
        }
    }

    #[test]
    fn probabilities_form_a_distribution() {
        let m = ClassifierModel::<f32>::new(ClassifierConfig::default(), 1).unwrap();
        let p = m.probabilities(&render_scene(1, 2, 40));
        assert_eq!(p.len(), 5);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn classifier_gradient_matches_finite_differences() {
        let cfg = ClassifierConfig {
            input_size: 16,
            ..ClassifierConfig::default()
        };
        let model = ClassifierModel::<f64>::new(cfg, 8).unwrap();
        let input = input_tensor(&render_scene(8, 3, 16), 16);
        let f = ClassifierLoss { model, input };
        let probe: Vec<f64> = f.model.params().iter().flat_map(|p| p.value.data().to_vec()).collect();
        let r = gradient_check(&f, &probe, 300, 2);
        assert!(r.passes(1e-3), "{r:?}");
    }
}
