//! Softmax cross-entropy (optionally class-weighted), plain SGD and the
//! epoch training loop.

use crate::data::{ImageSet, Sampler, SamplerMode};
use crate::nn::{Model, NnError};
use crate::tensor::{Tensor, TensorError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("label {label} at row {row} is outside 0..{classes}")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("non-finite logit at row {0}")]
    NonFiniteLogit(usize),
    #[error("cost became non-finite in epoch batch {batch}")]
    NonFiniteCost { batch: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, OptimError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Per-class loss weights. `None` means inverse class frequency of the
    /// training split. Ignored unless `loss_weighted` is set.
    pub class_weights: Option<Vec<f64>>,
    pub sampler_mode: SamplerMode,
    pub loss_weighted: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 20,
            batch_size: 32,
            class_weights: None,
            sampler_mode: SamplerMode::Uniform,
            loss_weighted: false,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(OptimError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.epochs == 0 {
            return invalid("epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return invalid(format!("batch size {} is below 2", self.batch_size));
        }
        if let Some(w) = &self.class_weights {
            if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return invalid("class weights must be positive".into());
            }
        }
        Ok(())
    }

    /// Loss weights for a training split with the given class counts.
    pub fn loss_weights(&self, class_counts: &[usize]) -> Vec<f64> {
        if !self.loss_weighted {
            return vec![1.0; class_counts.len()];
        }
        match &self.class_weights {
            Some(w) => w.clone(),
            None => inverse_frequency_weights(class_counts),
        }
    }
}

/// `n_total / (num_classes * n_c)` for each class.
pub fn inverse_frequency_weights(class_counts: &[usize]) -> Vec<f64> {
    let total: usize = class_counts.iter().sum();
    let k = class_counts.len() as f64;
    class_counts
        .iter()
        .map(|&c| total as f64 / (k * c.max(1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub cost: f64,
    pub d_logits: Tensor,
}

/// `cost = (1/N) * sum_n w[y_n] * (-log softmax(logits_n)[y_n])`, with its
/// exact gradient. Weights scale each sample before the mean; they are not
/// renormalized.
pub fn weighted_cross_entropy(logits: &Tensor, labels: &[usize], class_weights: &[f64]) -> Result<LossOutput> {
    let [n, k] = match *logits.shape() {
        [n, k] => [n, k],
        _ => {
            return Err(OptimError::ShapeMismatch(format!(
                "logits must be [N, K], got {:?}",
                logits.shape()
            )))
        }
    };
    if labels.len() != n || class_weights.len() != k {
        return Err(OptimError::ShapeMismatch(format!(
            "{n}x{k} logits with {} labels and {} class weights",
            labels.len(),
            class_weights.len()
        )));
    }
    let mut cost = 0.0;
    let mut grad = vec![0.0; n * k];
    for (row, (z, &label)) in logits.data().chunks(k).zip(labels).enumerate() {
        if label >= k {
            return Err(OptimError::LabelOutOfRange {
                row,
                label,
                classes: k,
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFiniteLogit(row));
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = z.iter().map(|&v| (v - max).exp()).sum();
        let log_denom = denom.ln();
        let weight = class_weights[label];
        cost += weight * (log_denom - (z[label] - max));
        let g = &mut grad[row * k..(row + 1) * k];
        for (j, (gj, &zj)) in g.iter_mut().zip(z).enumerate() {
            let p = (zj - max - log_denom).exp();
            let target = if j == label { 1.0 } else { 0.0 };
            *gj = weight * (p - target) / n as f64;
        }
    }
    Ok(LossOutput {
        cost: cost / n as f64,
        d_logits: Tensor::from_vec(logits.shape(), grad)?,
    })
}

/// `p - learning_rate * g` for each parameter tensor.
pub fn sgd_step(parameters: &[&Tensor], gradients: &[Tensor], learning_rate: f64) -> Result<Vec<Tensor>> {
    if !(learning_rate > 0.0) {
        return Err(OptimError::InvalidConfig(format!(
            "learning rate {learning_rate} must be positive"
        )));
    }
    if parameters.len() != gradients.len() {
        return Err(OptimError::ShapeMismatch(format!(
            "{} parameters but {} gradients",
            parameters.len(),
            gradients.len()
        )));
    }
    parameters
        .iter()
        .zip(gradients)
        .map(|(p, g)| {
            if p.shape() != g.shape() {
                return Err(OptimError::ShapeMismatch(format!(
                    "parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            let data = p
                .data()
                .iter()
                .zip(g.data())
                .map(|(&w, &d)| w - learning_rate * d)
                .collect();
            Ok(Tensor::from_vec(p.shape(), data)?)
        })
        .collect()
}

/// One forward/backward/update step on a batch. Returns the batch cost.
pub fn train_step(
    model: &mut Model,
    batch: &Tensor,
    labels: &[usize],
    class_weights: &[f64],
    learning_rate: f64,
) -> Result<f64> {
    let (logits, cache) = model.forward_train(batch)?;
    let loss = weighted_cross_entropy(&logits, labels, class_weights)?;
    let grads = model.backward(&cache, &loss.d_logits)?;
    let updated = sgd_step(&model.parameters(), &grads, learning_rate)?;
    model.set_parameters(updated)?;
    Ok(loss.cost)
}

/// Runs one epoch of the sampler's batches and returns the mean batch cost.
///
/// A non-finite cost or parameter aborts the epoch with
/// [`OptimError::NonFiniteCost`]; the model is then left mid-epoch.
pub fn train_epoch(
    model: &mut Model,
    set: &ImageSet,
    sampler: &mut Sampler,
    config: &TrainConfig,
) -> Result<f64> {
    config.validate()?;
    if set.is_empty() {
        return Err(OptimError::EmptyDataset);
    }
    if sampler.len() != set.len() {
        return Err(OptimError::ShapeMismatch(format!(
            "sampler covers {} samples, dataset has {}",
            sampler.len(),
            set.len()
        )));
    }
    let weights = config.loss_weights(&set.class_counts());
    let batches = sampler.next_epoch();
    let mut total = 0.0;
    for (b, indices) in batches.iter().enumerate() {
        let (batch, labels) = set.batch(indices)?;
        let cost = match train_step(model, &batch, &labels, &weights, config.learning_rate) {
            Err(OptimError::NonFiniteLogit(_)) => return Err(OptimError::NonFiniteCost { batch: b }),
            other => other?,
        };
        if !cost.is_finite() || model.parameters().iter().any(|p| !p.all_finite()) {
            return Err(OptimError::NonFiniteCost { batch: b });
        }
        total += cost;
    }
    Ok(total / batches.len() as f64)
}
