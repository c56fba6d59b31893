//! Convolutional network training engine and class-imbalance experiment
//! harness for binary fundus-image classification (Normal vs. AMD).

pub mod data;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod tensor;

pub use tensor::{Tensor, TensorError};
