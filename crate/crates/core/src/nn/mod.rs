//! Small dense/convolutional network substrate with reverse-mode gradients
//! and Adam.

mod adam;
pub mod gradcheck;
mod layers;
mod loss;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, Parameter};
pub use layers::{
    conv2d_backward, conv2d_forward, conv2d_forward_cached, dense_backward, dense_forward, global_avg_pool,
    global_avg_pool_backward, leaky_relu, leaky_relu_backward, ConvCache, LEAKY_SLOPE,
};
pub use loss::{sigmoid, sigmoid_bce, softmax, softmax_cross_entropy};
pub use tensor::{gemm, MatRef, Scalar, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("tensor contains non-finite values")]
    NonFinite,
}
