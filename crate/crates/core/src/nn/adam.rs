use rand::Rng;

use super::tensor::{Scalar, Tensor};

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let zeros = Tensor::zeros(value.shape().to_vec());
        Self {
            grad: zeros.clone(),
            adam_m: zeros.clone(),
            adam_v: zeros,
            value,
        }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    /// Kaiming-uniform values scaled for a leaky rectifier.
    pub fn kaiming_uniform<R: Rng + ?Sized>(
        shape: impl Into<Vec<usize>>,
        fan_in: usize,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let shape = shape.into();
        let gain = (2.0 / (1.0 + slope * slope)).sqrt();
        let bound = gain * (3.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
        Self::new(Tensor::new(shape, data).expect("init shape"))
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Weight decay is
/// added to the gradient as an L2 term before the moments are updated.
/// Gradients are zeroed afterwards.
pub fn adam_step<'a, T: Scalar>(params: impl IntoIterator<Item = &'a mut Parameter<T>>, cfg: &AdamConfig, t: u64) {
    assert!(t >= 1, "adam step count starts at 1");
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let wd = T::lit(cfg.weight_decay);
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);
    let bc1 = T::lit(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = T::lit(1.0 - cfg.beta2.powi(t as i32));
    let one = T::one();
    for p in params {
        let Parameter {
            value,
            grad,
            adam_m,
            adam_v,
        } = p;
        for (((w, g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut())
            .zip(adam_m.data_mut())
            .zip(adam_v.data_mut())
        {
            let gi = *g + wd * *w;
            *m = b1 * *m + (one - b1) * gi;
            *v = b2 * *v + (one - b2) * gi * gi;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            *g = T::zero();
        }
    }
}
