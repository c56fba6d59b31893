//! Layer kernels with analytic gradients, residual blocks and the model.
//!
//! Every layer is a pair of free functions: a forward map and its gradient.
//! The forward functions return whatever the backward pass needs to cache,
//! so no layer keeps hidden state. Batch normalization returns its updated
//! running statistics instead of mutating them.

mod activation;
mod batchnorm;
mod block;
mod conv;
mod dense;
mod model;
mod pool;

pub use activation::{relu, relu_grad};
pub use batchnorm::{
    batchnorm, batchnorm_grad, BatchNorm, BatchNormCache, BatchNormGrads, RunningStats, BN_EPS,
    BN_MOMENTUM,
};
pub use block::{BlockCache, ResidualBlock};
pub use conv::{conv2d, conv2d_grad, Conv, ConvGrads, ConvSpec};
pub use dense::{dense, dense_grad, Dense, DenseGrads, DenseSpec};
pub use model::{Model, ModelCache, ModelConfig};
pub use pool::{pool2d, pool2d_grad, PoolMode, PoolOutput, PoolSpec};

use crate::tensor::{Tensor, TensorError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer output would be empty: {0}")]
    EmptyOutput(String),
    #[error("pooling window {window_h}x{window_w} exceeds input {height}x{width}")]
    WindowTooLarge {
        window_h: usize,
        window_w: usize,
        height: usize,
        width: usize,
    },
    #[error("batch normalization needs at least two values per channel in train mode")]
    SingleElementBatch,
    #[error("running variance of channel {0} is negative")]
    NegativeVariance(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Whether batch normalization uses batch statistics or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) fn expect_shape(t: &Tensor, expected: &[usize], what: &str) -> Result<()> {
    if t.shape() != expected {
        return Err(NnError::ShapeMismatch(format!(
            "{what}: expected {expected:?}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

pub(crate) fn dims4(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(NnError::ShapeMismatch(format!(
            "{what}: expected a rank-4 [N,C,H,W] tensor, got {:?}",
            t.shape()
        ))),
    }
}
