//! Finite-difference verification of analytic gradients.
//!
//! A [`Differentiable`] maps a flat variable vector to a scalar and reports
//! its analytic gradient. [`gradient_check`] compares that gradient with
//! central differences on a sample of coordinates.

use rand::seq::index::sample;
use rand::Rng;

use super::layers::{
    conv2d_backward, conv2d_forward_cached, dense_backward, dense_forward, global_avg_pool, global_avg_pool_backward,
    leaky_relu, leaky_relu_backward, LEAKY_SLOPE,
};
use super::loss::sigmoid_bce;
use super::tensor::Tensor;
use crate::seeding::stream;

/// Finite-difference step for unit-scale variables.
pub const FD_STEP: f64 = 1e-3;

pub trait Differentiable {
    fn num_vars(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub coordinates_checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// Relative error `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic and central-difference gradients at `probe` over at
/// most `max_coords` coordinates (all of them when there are fewer).
pub fn gradient_check<F: Differentiable + ?Sized>(f: &F, probe: &[f64], max_coords: usize, seed: u64) -> GradCheck {
    gradient_check_with_step(f, probe, max_coords, seed, FD_STEP)
}

/// [`gradient_check`] with an explicit difference step. Deep rectified
/// networks need a small step so probes do not straddle activation kinks.
pub fn gradient_check_with_step<F: Differentiable + ?Sized>(
    f: &F,
    probe: &[f64],
    max_coords: usize,
    seed: u64,
    step: f64,
) -> GradCheck {
    assert_eq!(probe.len(), f.num_vars(), "probe length");
    let analytic = f.gradient(probe);
    let n = probe.len();
    let coords: Vec<usize> = if n <= max_coords {
        (0..n).collect()
    } else {
        let mut v = sample(&mut stream(seed, "gradcheck"), n, max_coords).into_vec();
        v.sort_unstable();
        v
    };
    let mut x = probe.to_vec();
    let mut worst = (0.0, 0);
    for &i in &coords {
        let orig = x[i];
        x[i] = orig + step;
        let up = f.value(&x);
        x[i] = orig - step;
        let down = f.value(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    GradCheck {
        max_relative_error: worst.0,
        worst_coordinate: worst.1,
        coordinates_checked: coords.len(),
    }
}

/// Splits a flat vector into consecutive tensors of the given shapes.
pub fn unflatten(x: &[f64], shapes: &[Vec<usize>]) -> Vec<Tensor<f64>> {
    let mut offset = 0;
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let t = Tensor::from_f64(s.clone(), &x[offset..offset + n]).expect("fragment shape");
            offset += n;
            t
        })
        .collect()
}

fn project(out: &Tensor<f64>, proj: &[f64]) -> f64 {
    out.data().iter().zip(proj).map(|(a, b)| a * b).sum()
}

fn random_vec(n: usize, seed: u64, key: &str) -> Vec<f64> {
    let mut rng = stream(seed, key);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `⟨r, W·x + b⟩` over variables `[x, W, b]`.
pub struct DenseFragment {
    pub inputs: usize,
    pub outputs: usize,
    proj: Vec<f64>,
}

impl DenseFragment {
    pub fn new(inputs: usize, outputs: usize, seed: u64) -> Self {
        Self {
            inputs,
            outputs,
            proj: random_vec(outputs, seed, "dense-proj"),
        }
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.inputs], vec![self.outputs, self.inputs], vec![self.outputs]]
    }

    pub fn probe(&self, seed: u64) -> Vec<f64> {
        random_vec(self.num_vars(), seed, "dense-probe")
    }
}

impl Differentiable for DenseFragment {
    fn num_vars(&self) -> usize {
        self.inputs + self.inputs * self.outputs + self.outputs
    }

    fn value(&self, x: &[f64]) -> f64 {
        let t = unflatten(x, &self.shapes());
        project(&dense_forward(&t[0], &t[1], &t[2]).unwrap(), &self.proj)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let t = unflatten(x, &self.shapes());
        let g = Tensor::new(vec![self.outputs], self.proj.clone()).unwrap();
        let mut gw = Tensor::zeros(t[1].shape().to_vec());
        let mut gb = Tensor::zeros(t[2].shape().to_vec());
        let gx = dense_backward(&t[0], &t[1], &g, &mut gw, &mut gb);
        [gx.data(), gw.data(), gb.data()].concat()
    }
}

/// `⟨r, leaky(conv(x))⟩`, optionally followed by global average pooling,
/// over variables `[x, W, b]`.
pub struct ConvBlockFragment {
    pub in_shape: [usize; 3],
    pub out_channels: usize,
    pub stride: usize,
    pub pad: usize,
    pub pool: bool,
    proj: Vec<f64>,
}

impl ConvBlockFragment {
    pub fn new(in_shape: [usize; 3], out_channels: usize, pool: bool, seed: u64) -> Self {
        let [_, h, w] = in_shape;
        let (oh, ow) = ((h + 2 - 3) / 2 + 1, (w + 2 - 3) / 2 + 1);
        let n = if pool { out_channels } else { out_channels * oh * ow };
        Self {
            in_shape,
            out_channels,
            stride: 2,
            pad: 1,
            pool,
            proj: random_vec(n, seed, "conv-proj"),
        }
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let c = self.in_shape[0];
        vec![
            self.in_shape.to_vec(),
            vec![self.out_channels, c, 3, 3],
            vec![self.out_channels],
        ]
    }

    pub fn probe(&self, seed: u64) -> Vec<f64> {
        random_vec(self.num_vars(), seed, "conv-probe")
    }
}

impl Differentiable for ConvBlockFragment {
    fn num_vars(&self) -> usize {
        self.shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let t = unflatten(x, &self.shapes());
        let (pre, _) = conv2d_forward_cached(&t[0], &t[1], &t[2], self.stride, self.pad).unwrap();
        let act = leaky_relu(&pre, LEAKY_SLOPE);
        let out = if self.pool { global_avg_pool(&act).unwrap() } else { act };
        project(&out, &self.proj)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let t = unflatten(x, &self.shapes());
        let (pre, cache) = conv2d_forward_cached(&t[0], &t[1], &t[2], self.stride, self.pad).unwrap();
        let g_act = if self.pool {
            let g = Tensor::new(vec![self.out_channels], self.proj.clone()).unwrap();
            global_avg_pool_backward(pre.shape(), &g)
        } else {
            Tensor::new(pre.shape().to_vec(), self.proj.clone()).unwrap()
        };
        let g_pre = leaky_relu_backward(&pre, &g_act, LEAKY_SLOPE);
        let mut gw = Tensor::zeros(t[1].shape().to_vec());
        let mut gb = Tensor::zeros(t[2].shape().to_vec());
        let gx = conv2d_backward(&cache, &t[1], &g_pre, &mut gw, &mut gb, true).unwrap();
        [gx.data(), gw.data(), gb.data()].concat()
    }
}

/// Sum of binary cross-entropies of independent logits against fixed labels.
pub struct BceFragment {
    pub labels: Vec<bool>,
}

impl Differentiable for BceFragment {
    fn num_vars(&self) -> usize {
        self.labels.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.labels).map(|(&z, &y)| sigmoid_bce(z, y).0).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.labels).map(|(&z, &y)| sigmoid_bce(z, y).1).collect()
    }
}
