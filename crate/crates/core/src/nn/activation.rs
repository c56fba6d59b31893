use super::Result;
use crate::tensor::{ensure_same_shape, Tensor};

/// `max(0, x)` elementwise.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

/// Passes `upstream` where the forward input was strictly positive.
/// The subgradient at exactly zero is taken to be zero.
pub fn relu_grad(upstream: &Tensor, input: &Tensor) -> Result<Tensor> {
    ensure_same_shape(upstream, input, "relu_grad")?;
    let data = upstream
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_vec(upstream.shape(), data)?)
}
