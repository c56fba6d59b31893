use clap::{Args, Parser, Subcommand};
use retina_core::data::{synth_generate, Dataset, ImageSet, SamplerMode, CLASS_AMD};
use retina_core::experiments::{
    emit_plot_data, load_checkpoint, run_experiment, run_sweep, validate_rates, ExperimentConfig,
    ExperimentError, SWEEP_FILE,
};
use retina_core::metrics::{evaluate, write_prediction_dump, MetricsError};
use retina_core::nn::ModelConfig;
use retina_core::optim::{OptimError, TrainConfig};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CODES: &str = "Exit codes: 0 success, 1 usage error, 2 data error, 3 run diverged (train only).";

#[derive(Debug, Parser)]
#[command(name = "retina", version, about = "Train and evaluate small CNNs on imbalanced retinal image sets", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic two-class corpus (disks vs rings) as PGM files.
    #[command(after_help = EXIT_CODES)]
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Fraction of minority-class (A) samples.
        #[arg(long, default_value_t = 0.1)]
        imbalance: f64,
        /// Image side length in pixels.
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train one model, logging per-epoch metrics and writing a checkpoint.
    #[command(after_help = EXIT_CODES)]
    Train {
        #[arg(long)]
        lr: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train one model per learning rate and write a summary table.
    #[command(after_help = EXIT_CODES)]
    Sweep {
        /// Comma-separated, strictly decreasing. Worker count is capped by RETINA_THREADS.
        #[arg(long, value_delimiter = ',', default_value = "1e0,1e-1,1e-2,1e-3,1e-4,1e-5,1e-6")]
        lrs: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint on every sample of a corpus and dump predictions.
    #[command(after_help = EXIT_CODES)]
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Prediction dump (CSV).
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a run or sweep directory into curve CSVs and SVG charts.
    #[command(after_help = EXIT_CODES)]
    Plot {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Draw batches with probability inversely proportional to class size.
    #[arg(long)]
    weighted_sampler: bool,
    /// Weight the loss by inverse class frequency.
    #[arg(long)]
    weighted_loss: bool,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Images are resized to this square side length.
    #[arg(long, default_value_t = 32)]
    image_size: usize,
}

impl RunArgs {
    fn config(&self, learning_rate: f64) -> Result<ExperimentConfig, Failure> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Failure::usage("--test-fraction must lie strictly between 0 and 1"));
        }
        let train = TrainConfig {
            learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            class_weights: None,
            sampler_mode: if self.weighted_sampler {
                SamplerMode::Weighted
            } else {
                SamplerMode::Uniform
            },
            loss_weighted: self.weighted_loss,
            seed: self.seed,
        };
        train.validate().map_err(|e| Failure::usage(e.to_string()))?;
        let model = ModelConfig::desk(self.image_size);
        model.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(ExperimentConfig {
            model,
            train,
            test_fraction: self.test_fraction,
        })
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::InvalidSweep(_)
            | ExperimentError::Optim(OptimError::InvalidConfig(_))
            | ExperimentError::Nn(_) => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        ExperimentError::from(e).into()
    }
}

fn threads(rates: usize) -> usize {
    std::env::var("RETINA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .map_or(rates, |t| t.min(rates))
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::GenData { out, n, imbalance, size, seed } => {
            if n < 10 || !(imbalance > 0.0 && imbalance < 0.5) || size < 4 {
                return Err(Failure::usage("need --n >= 10, 0 < --imbalance < 0.5 and --size >= 4"));
            }
            let dataset = synth_generate(n, imbalance, size, seed, &out).map_err(ExperimentError::from)?;
            let [normal, amd] = dataset.class_counts;
            println!("wrote {} images ({normal} N, {amd} A) to {}", dataset.len(), out.display());
            Ok(0)
        }
        Command::Train { lr, run: args } => {
            let config = args.config(lr)?;
            let result = run_experiment(&config, &args.data, &args.out)?;
            if let Some(test) = result.final_test() {
                println!(
                    "epoch {}: test cost {:.6} accuracy {:.4} f1 {:.4}",
                    test.epoch, test.cost, test.accuracy, test.f1
                );
            }
            if result.diverged {
                eprintln!("error: training diverged after {} completed epochs", result.epoch_costs.len());
                return Ok(3);
            }
            Ok(0)
        }
        Command::Sweep { lrs, run: args } => {
            validate_rates(&lrs)?;
            let config = args.config(lrs[0])?;
            let sweep = run_sweep(&config, &lrs, &args.data, &args.out, threads(lrs.len()))?;
            for e in &sweep.entries {
                println!(
                    "lr {:e}: test f1 {:.4} train cost {:.6}{}",
                    e.learning_rate,
                    e.final_test_f1,
                    e.final_train_cost,
                    if e.diverged { " (diverged)" } else { "" }
                );
            }
            println!("summary written to {}", args.out.join(SWEEP_FILE).display());
            Ok(0)
        }
        Command::Eval { checkpoint, data, out } => {
            let model = load_checkpoint(&checkpoint)?;
            let dataset = Dataset::open(&data).map_err(ExperimentError::from)?;
            let set = ImageSet::load(&dataset, model.config().input_shape).map_err(ExperimentError::from)?;
            let eval = evaluate(&model, &set, CLASS_AMD)?;
            write_prediction_dump(&eval.predictions, &out)?;
            let r = &eval.report;
            println!(
                "samples {} cost {:.6} accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}{}",
                set.len(),
                eval.cost,
                r.accuracy,
                r.precision,
                r.recall,
                r.f1,
                if r.degenerate { " (degenerate)" } else { "" }
            );
            Ok(0)
        }
        Command::Plot { run, out } => {
            for path in emit_plot_data(&run, &out)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
