//! Metric-log and sweep-summary CSV files.

use super::ExperimentError;
use crate::metrics::MetricsReport;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

pub const METRIC_LOG_HEADER: &str = "epoch,split,cost,accuracy,precision,recall,f1,degenerate";
pub const SWEEP_HEADER: &str = "learning_rate,final_test_f1,final_train_cost,diverged";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(ExperimentError::Parse(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: Split,
    pub cost: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

impl MetricRow {
    pub fn new(epoch: usize, split: Split, cost: f64, report: &MetricsReport) -> Self {
        Self {
            epoch,
            split,
            cost,
            accuracy: report.accuracy,
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            degenerate: report.degenerate,
        }
    }
}

/// Floats print with Rust's shortest round-trip representation.
pub fn format_metric_log(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRIC_LOG_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.split, r.cost, r.accuracy, r.precision, r.recall, r.f1, r.degenerate
        );
    }
    out
}

fn field<T: FromStr>(value: &str, line: usize) -> Result<T, ExperimentError> {
    value
        .parse()
        .map_err(|_| ExperimentError::Parse(format!("line {line}: bad value `{value}`")))
}

fn data_lines<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>, ExperimentError> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(ExperimentError::Parse(format!("expected header `{header}`")));
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 2, l.split(',').collect())))
}

pub fn parse_metric_log(text: &str) -> Result<Vec<MetricRow>, ExperimentError> {
    data_lines(text, METRIC_LOG_HEADER)?
        .map(|(line, f)| {
            if f.len() != 8 {
                return Err(ExperimentError::Parse(format!("line {line}: expected 8 fields")));
            }
            Ok(MetricRow {
                epoch: field(f[0], line)?,
                split: f[1].parse()?,
                cost: field(f[2], line)?,
                accuracy: field(f[3], line)?,
                precision: field(f[4], line)?,
                recall: field(f[5], line)?,
                f1: field(f[6], line)?,
                degenerate: field(f[7], line)?,
            })
        })
        .collect()
}

pub fn read_metric_log(path: &Path) -> Result<Vec<MetricRow>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    parse_metric_log(&text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEntry {
    pub learning_rate: f64,
    pub final_test_f1: f64,
    pub final_train_cost: f64,
    pub diverged: bool,
}

/// Learning rates print in scientific notation (`1e-2`).
pub fn format_sweep(entries: &[SweepEntry]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for e in entries {
        let _ = writeln!(
            out,
            "{:e},{},{},{}",
            e.learning_rate, e.final_test_f1, e.final_train_cost, e.diverged
        );
    }
    out
}

pub fn parse_sweep(text: &str) -> Result<Vec<SweepEntry>, ExperimentError> {
    data_lines(text, SWEEP_HEADER)?
        .map(|(line, f)| {
            if f.len() != 4 {
                return Err(ExperimentError::Parse(format!("line {line}: expected 4 fields")));
            }
            Ok(SweepEntry {
                learning_rate: field(f[0], line)?,
                final_test_f1: field(f[1], line)?,
                final_train_cost: field(f[2], line)?,
                diverged: field(f[3], line)?,
            })
        })
        .collect()
}
