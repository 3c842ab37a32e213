use super::tensor::{gemm, MatRef, Scalar, Tensor};
use super::NnError;

/// Default negative slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Saved activations needed to back-propagate through a convolution.
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    in_shape: [usize; 3],
    out_hw: (usize, usize),
    kernel: usize,
    stride: usize,
    pad: usize,
}

fn conv_out(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn im2col<T: Scalar>(
    input: &[T],
    [c, h, w]: [usize; 3],
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let n = oh * ow;
    let mut cols = vec![T::zero(); c * k * k * n];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    let dst = &mut row[oy * ow..][..ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(
    cols: &[T],
    [c, h, w]: [usize; 3],
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let n = oh * ow;
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * n..][..n];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy as usize * w + ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2-D cross-correlation of a `[C_in, H, W]` input with `[C_out, C_in, K, K]`
/// weights and zero padding.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, NnError> {
    conv2d_forward_cached(input, weight, bias, stride, pad).map(|(out, _)| out)
}

pub fn conv2d_forward_cached<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, ConvCache<T>), NnError> {
    let (&[c, h, w], &[oc, wc, k, k2]) = (input.shape(), weight.shape()) else {
        return Err(NnError::Shape(format!(
            "conv expects [C,H,W] input and [O,C,K,K] weights, got {:?} and {:?}",
            input.shape(),
            weight.shape()
        )));
    };
    if wc != c || k != k2 || bias.shape() != [oc] {
        return Err(NnError::Shape(format!(
            "conv weights {:?} / bias {:?} do not match input {:?}",
            weight.shape(),
            bias.shape(),
            input.shape()
        )));
    }
    let (Some(oh), Some(ow)) = (conv_out(h, k, stride, pad), conv_out(w, k, stride, pad)) else {
        return Err(NnError::Shape(format!("kernel {k} does not fit input {h}x{w}")));
    };
    let cols = im2col(input.data(), [c, h, w], k, stride, pad, (oh, ow));
    let n = oh * ow;
    let mut out = vec![T::zero(); oc * n];
    for (o, row) in out.chunks_exact_mut(n).enumerate() {
        row.iter_mut().for_each(|v| *v = bias.data()[o]);
    }
    gemm(
        MatRef::row_major(weight.data(), oc, c * k * k),
        MatRef::row_major(&cols, c * k * k, n),
        T::one(),
        &mut out,
    );
    let cache = ConvCache {
        cols,
        in_shape: [c, h, w],
        out_hw: (oh, ow),
        kernel: k,
        stride,
        pad,
    };
    Ok((Tensor::new(vec![oc, oh, ow], out)?, cache))
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// requested.
pub fn conv2d_backward<T: Scalar>(
    cache: &ConvCache<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_weight: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
    want_input_grad: bool,
) -> Option<Tensor<T>> {
    let [c, _, _] = cache.in_shape;
    let k = cache.kernel;
    let oc = weight.shape()[0];
    let n = cache.out_hw.0 * cache.out_hw.1;
    let ckk = c * k * k;
    assert_eq!(grad_out.len(), oc * n, "conv grad_out size");
    let g = MatRef::row_major(grad_out.data(), oc, n);
    gemm(
        g,
        MatRef::row_major(&cache.cols, ckk, n).t(),
        T::one(),
        grad_weight.data_mut(),
    );
    for (o, row) in grad_out.data().chunks_exact(n).enumerate() {
        grad_bias.data_mut()[o] += row.iter().copied().sum::<T>();
    }
    if !want_input_grad {
        return None;
    }
    let mut dcols = vec![T::zero(); ckk * n];
    gemm(MatRef::row_major(weight.data(), oc, ckk).t(), g, T::zero(), &mut dcols);
    let dx = col2im(&dcols, cache.in_shape, k, cache.stride, cache.pad, cache.out_hw);
    Some(Tensor::new(cache.in_shape.to_vec(), dx).expect("input gradient shape"))
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = acc.iter().copied().sum::<T>();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

/// Affine map `W·x + b` with `W` of shape `[m, n]`.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let &[m, n] = weight.shape() else {
        return Err(NnError::Shape(format!(
            "dense weights must be 2-D, got {:?}",
            weight.shape()
        )));
    };
    if input.len() != n || bias.shape() != [m] {
        return Err(NnError::Shape(format!(
            "dense {m}x{n} cannot take input of {} values / bias {:?}",
            input.len(),
            bias.shape()
        )));
    }
    let x = input.data();
    let out = weight
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, &b)| dot(row, x) + b)
        .collect();
    Tensor::new(vec![m], out)
}

/// Accumulates `dW += g·xᵀ`, `db += g` and returns `Wᵀ·g`.
pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_weight: &mut Tensor<T>,
    grad_bias: &mut Tensor<T>,
) -> Tensor<T> {
    let n = input.len();
    let x = input.data();
    let mut dx = vec![T::zero(); n];
    for (((g, wrow), gwrow), gb) in grad_out
        .data()
        .iter()
        .zip(weight.data().chunks_exact(n))
        .zip(grad_weight.data_mut().chunks_exact_mut(n))
        .zip(grad_bias.data_mut())
    {
        *gb += *g;
        for i in 0..n {
            gwrow[i] += *g * x[i];
            dx[i] += *g * wrow[i];
        }
    }
    Tensor::new(vec![n], dx).expect("dense input gradient")
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::lit(slope);
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = *v * s
        }
    });
    out
}

/// Gradient through the rectifier given its pre-activation input.
pub fn leaky_relu_backward<T: Scalar>(pre: &Tensor<T>, grad_out: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::lit(slope);
    let mut g = grad_out.clone();
    for (gv, &p) in g.data_mut().iter_mut().zip(pre.data()) {
        if p < T::zero() {
            *gv = *gv * s;
        }
    }
    g
}

/// Per-channel mean of a `[C, H, W]` tensor.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let &[c, h, w] = x.shape() else {
        return Err(NnError::Shape(format!("pool expects [C,H,W], got {:?}", x.shape())));
    };
    let hw = h * w;
    let denom = T::lit(hw as f64);
    let out = x
        .data()
        .chunks_exact(hw)
        .map(|p| p.iter().copied().sum::<T>() / denom)
        .collect();
    Tensor::new(vec![c], out)
}

pub fn global_avg_pool_backward<T: Scalar>(in_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let hw = in_shape[1] * in_shape[2];
    let denom = T::lit(hw as f64);
    let data = grad_out
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / denom, hw))
        .collect();
    Tensor::new(in_shape.to_vec(), data).expect("pool gradient shape")
}
