//! Confusion counts, precision/recall/F1, and model evaluation.

use crate::data::{ImageSet, CLASS_NAMES};
use crate::nn::{Model, NnError};
use crate::optim::{weighted_cross_entropy, OptimError};
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("cannot evaluate an empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("writing prediction dump: {0}")]
    Io(#[from] io::Error),
}

/// Binary confusion counts relative to one positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Accuracy, precision, recall and F1 for one evaluation.
///
/// `degenerate` is set when precision or recall is undefined or zero; F1 is
/// then reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

pub fn confusion(
    predictions: &[usize],
    labels: &[usize],
    positive_class: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p == positive_class, y == positive_class) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// F1 as the harmonic mean of precision and recall,
/// `2 * precision * recall / (precision + recall)`.
pub fn f1_from_confusion(cm: &ConfusionMatrix) -> MetricsReport {
    let total = cm.total();
    let accuracy = if total == 0 {
        0.0
    } else {
        (cm.tp + cm.tn) as f64 / total as f64
    };
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let degenerate = cm.tp == 0;
    let f1 = if degenerate {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MetricsReport {
        confusion: *cm,
        accuracy,
        precision,
        recall,
        f1,
        degenerate,
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sample_id: String,
    pub label: usize,
    pub prediction: usize,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Mean unweighted cross-entropy over all samples.
    pub cost: f64,
    pub predictions: Vec<Prediction>,
}

const EVAL_CHUNK: usize = 128;

/// Runs the model in eval mode over every sample of `set`.
pub fn evaluate(model: &Model, set: &ImageSet, positive_class: usize) -> Result<Evaluation, MetricsError> {
    if set.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let num_classes = model.config().num_classes;
    let uniform = vec![1.0; num_classes];
    let mut predictions = Vec::with_capacity(set.len());
    let mut cost_sum = 0.0;
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (batch, labels) = set.batch(chunk).map_err(NnError::from)?;
        let logits = model.predict(&batch)?;
        let loss = weighted_cross_entropy(&logits, &labels, &uniform)?;
        cost_sum += loss.cost * chunk.len() as f64;
        for (row, &i) in logits.data().chunks(num_classes).zip(chunk) {
            predictions.push(Prediction {
                sample_id: set.ids[i].clone(),
                label: set.labels[i],
                prediction: argmax(row),
                logits: row.to_vec(),
            });
        }
    }
    let predicted: Vec<usize> = predictions.iter().map(|p| p.prediction).collect();
    let cm = confusion(&predicted, &set.labels, positive_class)?;
    Ok(Evaluation {
        report: f1_from_confusion(&cm),
        cost: cost_sum / set.len() as f64,
        predictions,
    })
}

/// Per-sample dump: `sample_id,label,prediction,logit_n,logit_a`.
pub fn format_prediction_dump(predictions: &[Prediction]) -> String {
    let mut out = String::from("sample_id,label,prediction,logit_n,logit_a\n");
    for p in predictions {
        let name = |c: usize| CLASS_NAMES.get(c).copied().unwrap_or("?");
        let _ = write!(out, "{},{},{}", p.sample_id, name(p.label), name(p.prediction));
        for l in &p.logits {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
    }
    out
}

pub fn write_prediction_dump(predictions: &[Prediction], path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, format_prediction_dump(predictions))?;
    Ok(())
}
