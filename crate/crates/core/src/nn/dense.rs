use super::{expect_shape, NnError, Result};
use crate::tensor::{matmul, transpose, Tensor};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseSpec {
    pub in_features: usize,
    pub out_features: usize,
}

/// `input · weights + bias` for each row of a `[N, F]` input.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 2 || weights.rank() != 2 {
        return Err(NnError::ShapeMismatch(format!(
            "dense needs rank-2 input and weights, got {:?} and {:?}",
            input.shape(),
            weights.shape()
        )));
    }
    expect_shape(bias, &[weights.shape()[1]], "dense bias")?;
    let product = matmul(input, weights).map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
    let g = bias.len();
    let data = product
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + bias.data()[i % g])
        .collect();
    Ok(Tensor::from_vec(product.shape(), data)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub d_input: Tensor,
    pub d_weights: Tensor,
    pub d_bias: Tensor,
}

pub fn dense_grad(upstream: &Tensor, input: &Tensor, weights: &Tensor) -> Result<DenseGrads> {
    if input.rank() != 2 || weights.rank() != 2 {
        return Err(NnError::ShapeMismatch("dense_grad needs rank-2 operands".into()));
    }
    expect_shape(
        upstream,
        &[input.shape()[0], weights.shape()[1]],
        "dense upstream",
    )?;
    let d_input = matmul(upstream, &transpose(weights)?)?;
    let d_weights = matmul(&transpose(input)?, upstream)?;
    let g = weights.shape()[1];
    let mut d_bias = vec![0.0; g];
    for row in upstream.data().chunks(g) {
        for (d, &v) in d_bias.iter_mut().zip(row) {
            *d += v;
        }
    }
    Ok(DenseGrads {
        d_input,
        d_weights,
        d_bias: Tensor::from_vec(&[g], d_bias)?,
    })
}

/// Fully connected layer with `[in, out]` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn init(spec: DenseSpec, rng: &mut impl Rng) -> Result<Self> {
        if spec.in_features == 0 || spec.out_features == 0 {
            return Err(NnError::InvalidConfig("dense layer with zero features".into()));
        }
        let bound = 1.0 / (spec.in_features as f64).sqrt();
        let data = (0..spec.in_features * spec.out_features)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Ok(Self {
            weight: Tensor::from_vec(&[spec.in_features, spec.out_features], data)?,
            bias: Tensor::zeros(&[spec.out_features])?,
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        dense(input, &self.weight, &self.bias)
    }

    pub fn backward(&self, upstream: &Tensor, input: &Tensor) -> Result<DenseGrads> {
        dense_grad(upstream, input, &self.weight)
    }
}
