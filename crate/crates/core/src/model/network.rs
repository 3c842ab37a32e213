//! Building blocks shared by the multi-task and multiclass models: a strided
//! convolutional extractor ending in global average pooling, and a
//! leaky-rectified fully connected stack.

use rand::Rng;

use crate::imaging::{resize_bilinear, ImageU8};
use crate::nn::{
    conv2d_backward, conv2d_forward_cached, dense_backward, dense_forward, global_avg_pool, global_avg_pool_backward,
    leaky_relu, leaky_relu_backward, ConvCache, Parameter, Scalar, Tensor,
};

/// Converts an image into the `[3, size, size]` network input: resized,
/// gray replicated to RGB, and mapped from bytes to `(v/255 − 0.5)·4`.
pub fn input_tensor<T: Scalar>(img: &ImageU8, size: usize) -> Tensor<T> {
    let img = resize_bilinear(&img.to_rgb(), size, size);
    let plane = size * size;
    let mut data = vec![T::zero(); 3 * plane];
    for (p, px) in img.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + p] = T::lit((px[c] as f64 / 255.0 - 0.5) * 4.0);
        }
    }
    Tensor::new(vec![3, size, size], data).expect("input tensor")
}

/// Stack of 3×3 stride-2 convolutions with leaky rectifiers, pooled to a
/// vector with one entry per final channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Extractor<T> {
    pub(crate) params: Vec<Parameter<T>>,
    slope: f64,
}

pub struct ExtractorCache<T> {
    layers: Vec<(ConvCache<T>, Tensor<T>)>,
    pooled_shape: Vec<usize>,
}

impl<T: Scalar> Extractor<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, channels: &[usize], slope: f64, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(channels.len() * 2);
        let mut c_in = in_channels;
        for &c_out in channels {
            params.push(Parameter::kaiming_uniform(
                vec![c_out, c_in, 3, 3],
                c_in * 9,
                slope,
                rng,
            ));
            params.push(Parameter::zeros(vec![c_out]));
            c_in = c_out;
        }
        Self { params, slope }
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.params.len() / 2)
            .flat_map(|i| [format!("conv{i}.weight"), format!("conv{i}.bias")])
            .collect()
    }

    pub fn forward(&self, input: &Tensor<T>) -> (Tensor<T>, ExtractorCache<T>) {
        let mut x = input.clone();
        let mut layers = Vec::with_capacity(self.params.len() / 2);
        for pair in self.params.chunks_exact(2) {
            let (pre, cache) =
                conv2d_forward_cached(&x, &pair[0].value, &pair[1].value, 2, 1).expect("extractor shapes");
            x = leaky_relu(&pre, self.slope);
            layers.push((cache, pre));
        }
        let pooled_shape = x.shape().to_vec();
        (
            global_avg_pool(&x).expect("pool shape"),
            ExtractorCache { layers, pooled_shape },
        )
    }

    /// Accumulates parameter gradients into `grads` (aligned with `params`).
    pub fn backward(&self, cache: &ExtractorCache<T>, grad_embedding: &Tensor<T>, grads: &mut [Tensor<T>]) {
        let mut g = global_avg_pool_backward(&cache.pooled_shape, grad_embedding);
        for (i, (conv_cache, pre)) in cache.layers.iter().enumerate().rev() {
            let g_pre = leaky_relu_backward(pre, &g, self.slope);
            let (gw, gb) = pair_mut(grads, 2 * i);
            match conv2d_backward(conv_cache, &self.params[2 * i].value, &g_pre, gw, gb, i > 0) {
                Some(gx) => g = gx,
                None => break,
            }
        }
    }
}

fn pair_mut<T>(grads: &mut [T], i: usize) -> (&mut T, &mut T) {
    let (a, b) = grads[i..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Fully connected layers with leaky rectifiers between them (none after the
/// last).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub(crate) params: Vec<Parameter<T>>,
    slope: f64,
}

pub struct MlpCache<T> {
    inputs: Vec<Tensor<T>>,
    pres: Vec<Tensor<T>>,
}

impl<T> MlpCache<T> {
    /// Input of the final layer: the activation after the penultimate layer.
    pub fn penultimate(&self) -> &Tensor<T> {
        self.inputs.last().expect("mlp has layers")
    }
}

impl<T: Scalar> Mlp<T> {
    /// `dims` lists layer widths including the input, e.g. `[128, 64, 64, 1]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], slope: f64, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(2 * (dims.len() - 1));
        for w in dims.windows(2) {
            params.push(Parameter::kaiming_uniform(vec![w[1], w[0]], w[0], slope, rng));
            params.push(Parameter::zeros(vec![w[1]]));
        }
        Self { params, slope }
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.params.len() / 2)
            .flat_map(|i| [format!("{prefix}.fc{i}.weight"), format!("{prefix}.fc{i}.bias")])
            .collect()
    }

    pub fn forward(&self, input: &Tensor<T>) -> (Tensor<T>, MlpCache<T>) {
        let n = self.params.len() / 2;
        let mut inputs = Vec::with_capacity(n);
        let mut pres = Vec::with_capacity(n);
        let mut x = input.clone();
        for (i, pair) in self.params.chunks_exact(2).enumerate() {
            let pre = dense_forward(&x, &pair[0].value, &pair[1].value).expect("mlp shapes");
            inputs.push(x);
            x = if i + 1 < n {
                leaky_relu(&pre, self.slope)
            } else {
                pre.clone()
            };
            pres.push(pre);
        }
        (x, MlpCache { inputs, pres })
    }

    /// Accumulates gradients and returns the gradient with respect to the
    /// input.
    pub fn backward(&self, cache: &MlpCache<T>, grad_out: &Tensor<T>, grads: &mut [Tensor<T>]) -> Tensor<T> {
        let n = self.params.len() / 2;
        let mut g = grad_out.clone();
        for i in (0..n).rev() {
            if i + 1 < n {
                g = leaky_relu_backward(&cache.pres[i], &g, self.slope);
            }
            let (gw, gb) = pair_mut(grads, 2 * i);
            g = dense_backward(&cache.inputs[i], &self.params[2 * i].value, &g, gw, gb);
        }
        g
    }
}
