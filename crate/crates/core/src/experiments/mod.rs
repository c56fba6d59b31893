//! Training runs, learning-rate sweeps, metric logs, checkpoints and plots.

mod checkpoint;
mod log;
mod plot;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION,
};
pub use log::{
    format_metric_log, format_sweep, parse_metric_log, parse_sweep, read_metric_log, MetricRow,
    Split, SweepEntry, METRIC_LOG_HEADER, SWEEP_HEADER,
};
pub use plot::{emit_run_plots, emit_sweep_plots, format_curves, line_chart_svg, Series};

use crate::data::{make_sampler, split, DataError, Dataset, ImageSet, CLASS_AMD};
use crate::metrics::{evaluate, Evaluation, MetricsError};
use crate::nn::{Model, ModelConfig, NnError};
use crate::optim::{train_epoch, OptimError, TrainConfig};
use crate::tensor::TensorError;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.rfck";
pub const SWEEP_FILE: &str = "sweep.csv";

/// The learning-rate grid `1e0, 1e-1, ..., 1e-6`.
pub const DEFAULT_RATES: [f64; 7] = [1e0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u32),
    #[error("checkpoint file is truncated")]
    TruncatedFile,
    #[error("checkpoint does not match its configuration: {0}")]
    ShapeMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Everything that defines one run apart from the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Two rows per completed epoch, train before test.
    pub rows: Vec<MetricRow>,
    pub diverged: bool,
    /// Eval-mode train cost of the freshly initialized model.
    pub initial_train_cost: f64,
    /// Mean batch cost reported by each completed training epoch.
    pub epoch_costs: Vec<f64>,
    pub final_checkpoint: Option<PathBuf>,
}

impl RunResult {
    fn last(&self, split: Split) -> Option<&MetricRow> {
        self.rows.iter().rev().find(|r| r.split == split)
    }

    pub fn final_train(&self) -> Option<&MetricRow> {
        self.last(Split::Train)
    }

    pub fn final_test(&self) -> Option<&MetricRow> {
        self.last(Split::Test)
    }

    /// Final train cost, falling back to the initial cost when no epoch
    /// completed.
    pub fn final_train_cost(&self) -> f64 {
        self.final_train().map_or(self.initial_train_cost, |r| r.cost)
    }

    pub fn final_test_f1(&self) -> f64 {
        self.final_test().map_or(0.0, |r| r.f1)
    }
}

/// Train and test images for one corpus and split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: ImageSet,
    pub test: ImageSet,
}

impl PreparedData {
    /// Opens `dataset_dir`, splits it with `seed`, and loads both sides at
    /// the model's input shape.
    pub fn load(dataset_dir: &Path, model: &ModelConfig, test_fraction: f64, seed: u64) -> Result<Self, ExperimentError> {
        let dataset = Dataset::open(dataset_dir)?;
        let (train, test) = split(&dataset, test_fraction, seed)?;
        Ok(Self {
            train: ImageSet::load(&train, model.input_shape)?,
            test: ImageSet::load(&test, model.input_shape)?,
        })
    }
}

fn diverged_error(e: &ExperimentError) -> bool {
    matches!(
        e,
        ExperimentError::Optim(OptimError::NonFiniteCost { .. })
            | ExperimentError::Metrics(MetricsError::Optim(OptimError::NonFiniteLogit(_)))
    )
}

/// Trains from a fresh model seeded by `config.train.seed`, evaluating both
/// splits after every epoch. A non-finite cost stops the run and marks it
/// diverged; the model from before the failing epoch is kept.
///
/// With `out_dir` set, writes `metrics.csv` and `model.rfck` there.
pub fn run_prepared(
    config: &ExperimentConfig,
    data: &PreparedData,
    out_dir: Option<&Path>,
) -> Result<RunResult, ExperimentError> {
    config.train.validate()?;
    let mut model = Model::new(config.model.clone(), config.train.seed)?;
    let mut sampler = make_sampler(
        &data.train.labels,
        config.train.sampler_mode,
        config.train.batch_size,
        config.train.seed,
    )?;
    let initial_train_cost = evaluate(&model, &data.train, CLASS_AMD)?.cost;
    let mut rows = Vec::with_capacity(2 * config.train.epochs);
    let mut epoch_costs = Vec::with_capacity(config.train.epochs);
    let mut diverged = false;

    for epoch in 1..=config.train.epochs {
        let snapshot = model.clone();
        let step = (|| -> Result<(f64, Evaluation, Evaluation), ExperimentError> {
            let cost = train_epoch(&mut model, &data.train, &mut sampler, &config.train)?;
            let train = evaluate(&model, &data.train, CLASS_AMD)?;
            let test = evaluate(&model, &data.test, CLASS_AMD)?;
            Ok((cost, train, test))
        })();
        match step {
            Ok((cost, train, test)) if train.cost.is_finite() && test.cost.is_finite() => {
                epoch_costs.push(cost);
                rows.push(MetricRow::new(epoch, Split::Train, train.cost, &train.report));
                rows.push(MetricRow::new(epoch, Split::Test, test.cost, &test.report));
            }
            Ok(_) => {
                diverged = true;
                model = snapshot;
                break;
            }
            Err(e) if diverged_error(&e) => {
                diverged = true;
                model = snapshot;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let final_checkpoint = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
            let log = dir.join(METRICS_FILE);
            std::fs::write(&log, format_metric_log(&rows)).map_err(|e| ExperimentError::io(&log, e))?;
            let ckpt = dir.join(CHECKPOINT_FILE);
            save_checkpoint(&model, &ckpt)?;
            Some(ckpt)
        }
        None => None,
    };
    Ok(RunResult {
        rows,
        diverged,
        initial_train_cost,
        epoch_costs,
        final_checkpoint,
    })
}

/// Loads and splits the corpus in `dataset_dir`, then runs [`run_prepared`].
pub fn run_experiment(
    config: &ExperimentConfig,
    dataset_dir: &Path,
    out_dir: &Path,
) -> Result<RunResult, ExperimentError> {
    let data = PreparedData::load(dataset_dir, &config.model, config.test_fraction, config.train.seed)?;
    run_prepared(config, &data, Some(out_dir))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub runs: Vec<RunResult>,
}

impl SweepResult {
    /// Learning rate with the highest final test F1; ties go to the larger rate.
    pub fn best_rate(&self) -> Option<f64> {
        self.entries
            .iter()
            .fold(None::<&SweepEntry>, |best, e| match best {
                Some(b) if b.final_test_f1 >= e.final_test_f1 => Some(b),
                _ => Some(e),
            })
            .map(|e| e.learning_rate)
    }
}

pub fn validate_rates(rates: &[f64]) -> Result<(), ExperimentError> {
    if rates.is_empty() {
        return Err(ExperimentError::InvalidSweep("no learning rates".into()));
    }
    if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(ExperimentError::InvalidSweep("learning rates must be positive".into()));
    }
    if rates.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ExperimentError::InvalidSweep("learning rates must be strictly decreasing".into()));
    }
    Ok(())
}

/// Directory name of one sweep arm, e.g. `lr_1e-2`.
pub fn arm_dir_name(rate: f64) -> String {
    format!("lr_{rate:e}")
}

/// One run per learning rate with every other setting, the seed included,
/// held fixed. Arms run on up to `threads` worker threads; results do not
/// depend on the thread count.
pub fn run_sweep_prepared(
    base: &ExperimentConfig,
    rates: &[f64],
    data: &PreparedData,
    out_dir: Option<&Path>,
    threads: usize,
) -> Result<SweepResult, ExperimentError> {
    validate_rates(rates)?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunResult, ExperimentError>>>> =
        Mutex::new((0..rates.len()).map(|_| None).collect());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&rate) = rates.get(i) else { break };
        let mut config = base.clone();
        config.train.learning_rate = rate;
        let dir = out_dir.map(|d| d.join(arm_dir_name(rate)));
        let result = run_prepared(&config, data, dir.as_deref());
        slots.lock().expect("no worker panicked")[i] = Some(result);
    };
    let threads = threads.clamp(1, rates.len());
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }

    let mut runs = Vec::with_capacity(rates.len());
    for slot in slots.into_inner().expect("no worker panicked") {
        runs.push(slot.expect("every arm ran")?);
    }
    let entries: Vec<SweepEntry> = rates
        .iter()
        .zip(&runs)
        .map(|(&learning_rate, run)| SweepEntry {
            learning_rate,
            final_test_f1: run.final_test_f1(),
            final_train_cost: run.final_train_cost(),
            diverged: run.diverged,
        })
        .collect();
    if let Some(dir) = out_dir {
        let path = dir.join(SWEEP_FILE);
        std::fs::write(&path, format_sweep(&entries)).map_err(|e| ExperimentError::io(&path, e))?;
    }
    Ok(SweepResult { entries, runs })
}

pub fn run_sweep(
    base: &ExperimentConfig,
    rates: &[f64],
    dataset_dir: &Path,
    out_dir: &Path,
    threads: usize,
) -> Result<SweepResult, ExperimentError> {
    validate_rates(rates)?;
    let data = PreparedData::load(dataset_dir, &base.model, base.test_fraction, base.train.seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::io(out_dir, e))?;
    run_sweep_prepared(base, rates, &data, Some(out_dir), threads)
}

/// Writes plot data for a finished run directory: the run's curves, and the
/// sweep chart when the directory holds a sweep summary.
pub fn emit_plot_data(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = Vec::new();
    let metrics = run_dir.join(METRICS_FILE);
    let sweep = run_dir.join(SWEEP_FILE);
    if metrics.exists() {
        written.extend(emit_run_plots(&read_metric_log(&metrics)?, out_dir)?);
    }
    if sweep.exists() {
        let text = std::fs::read_to_string(&sweep).map_err(|e| ExperimentError::io(&sweep, e))?;
        written.extend(emit_sweep_plots(&parse_sweep(&text)?, out_dir)?);
    }
    if written.is_empty() {
        return Err(ExperimentError::Parse(format!(
            "{} holds neither {METRICS_FILE} nor {SWEEP_FILE}",
            run_dir.display()
        )));
    }
    Ok(written)
}
