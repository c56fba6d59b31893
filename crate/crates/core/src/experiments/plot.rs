//! Curve data and simple SVG line charts for runs and sweeps.

use super::log::{MetricRow, Split, SweepEntry};
use super::ExperimentError;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CURVES_HEADER: &str = "metric,split,epoch,value";
pub const SWEEP_CURVE_HEADER: &str = "learning_rate,final_test_f1";

/// One polyline of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a line chart with axes, five ticks per axis and a legend.
/// Output bytes depend only on the inputs.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite = |v: &f64| v.is_finite();
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(finite).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(finite).collect();
    let range = |v: &[f64]| -> (f64, f64) {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        match (lo.is_finite(), hi > lo) {
            (false, _) => (0.0, 1.0),
            (true, true) => (lo, hi),
            (true, false) => (lo - 0.5, lo + 0.5),
        }
    };
    let (x0, x1) = range(&xs);
    let (mut y0, y1) = range(&ys);
    if y0 > 0.0 && y0 < 0.5 * y1 {
        y0 = 0.0;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );
    let (bottom, right) = (MARGIN_TOP + plot_h, MARGIN_LEFT + plot_w);
    let _ = writeln!(
        svg,
        r#"<path d="M{MARGIN_LEFT:.1},{MARGIN_TOP:.1} V{bottom:.1} H{right:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = f64::from(i) / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.1}" y1="{bottom:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            bottom + 4.0,
            bottom + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{MARGIN_LEFT:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 4.0,
            MARGIN_LEFT - 6.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            right + 10.0,
            right + 30.0,
            right + 36.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn series_for(rows: &[MetricRow], split: Split, value: impl Fn(&MetricRow) -> f64) -> Series {
    Series {
        label: split.to_string(),
        points: rows
            .iter()
            .filter(|r| r.split == split)
            .map(|r| (r.epoch as f64, value(r)))
            .collect(),
    }
}

/// Long-format curves: one `cost` and one `f1` series per split.
pub fn format_curves(rows: &[MetricRow]) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    let metrics: [(&str, fn(&MetricRow) -> f64); 2] = [("cost", |r| r.cost), ("f1", |r| r.f1)];
    for (metric, value) in metrics {
        for split in [Split::Train, Split::Test] {
            for r in rows.iter().filter(|r| r.split == split) {
                let _ = writeln!(out, "{metric},{split},{},{}", r.epoch, value(r));
            }
        }
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, ExperimentError> {
    std::fs::write(&path, contents).map_err(|e| ExperimentError::io(&path, e))?;
    Ok(path)
}

/// Writes `curves.csv`, `cost.svg` and `f1.svg` for a run's metric rows.
pub fn emit_run_plots(rows: &[MetricRow], out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Parse("no metric rows to plot".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::io(out_dir, e))?;
    let cost = [
        series_for(rows, Split::Train, |r| r.cost),
        series_for(rows, Split::Test, |r| r.cost),
    ];
    let f1 = [
        series_for(rows, Split::Train, |r| r.f1),
        series_for(rows, Split::Test, |r| r.f1),
    ];
    Ok(vec![
        write(out_dir.join("curves.csv"), &format_curves(rows))?,
        write(out_dir.join("cost.svg"), &line_chart_svg("Cost per epoch", "epoch", "cost", &cost))?,
        write(out_dir.join("f1.svg"), &line_chart_svg("F1 per epoch", "epoch", "F1", &f1))?,
    ])
}

/// Writes `sweep_f1.csv` and `sweep_f1.svg` (F1 against log10 learning rate).
pub fn emit_sweep_plots(entries: &[SweepEntry], out_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    if entries.is_empty() {
        return Err(ExperimentError::Parse("no sweep entries to plot".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::io(out_dir, e))?;
    let mut csv = format!("{SWEEP_CURVE_HEADER}\n");
    for e in entries {
        let _ = writeln!(csv, "{:e},{}", e.learning_rate, e.final_test_f1);
    }
    let series = [Series {
        label: "test F1".into(),
        points: entries
            .iter()
            .map(|e| (e.learning_rate.log10(), e.final_test_f1))
            .collect(),
    }];
    Ok(vec![
        write(out_dir.join("sweep_f1.csv"), &csv)?,
        write(
            out_dir.join("sweep_f1.svg"),
            &line_chart_svg("Final test F1 by learning rate", "log10 learning rate", "F1", &series),
        )?,
    ])
}
