use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use plotters::prelude::*;
use serde::Serialize;

use super::metrics::MetricResult;
use super::sweep::{SizeReport, SnrReport};
use crate::error::{Error, Result};

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Plain-text table of medians and variances per model and SNR.
pub fn snr_summary(report: &SnrReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:<10} {:>8} {:>10} {:>10} {:>4}", "metric", "model", "snr_db", "median", "variance", "n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:<10} {:<10} {:>8} {:>10} {:>10} {:>4}",
            r.metric,
            r.model,
            fmt_opt(r.snr_db),
            fmt_opt(r.median),
            fmt_opt(r.variance),
            r.values.len()
        );
    }
    let _ = writeln!(s, "\ntest audio digests:");
    for (snr, d) in &report.digests {
        let _ = writeln!(s, "  {snr:>5} dB  {d}");
    }
    s
}

pub fn size_summary(report: &SizeReport, metric: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{metric} at {} dB SNR", report.snr_db);
    let _ = writeln!(
        s,
        "{:<8} {:<8} {:>10} {:>12} {:>10} {:>10}",
        "size", "method", "params", "GMAC/frame", "median", "variance"
    );
    for row in &report.rows {
        let r = row.results.iter().find(|r| r.metric == metric);
        let _ = writeln!(
            s,
            "{:<8} {:<8} {:>10} {:>12.4} {:>10} {:>10}",
            row.label,
            row.method,
            row.params,
            row.gmacs_per_frame,
            if row.missing { "missing".to_string() } else { fmt_opt(r.and_then(|r| r.median)) },
            fmt_opt(r.and_then(|r| r.variance)),
        );
    }
    s
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(0.5);
    (lo - pad, hi + pad)
}

/// Median of `metric` against SNR, one line per model, with bars of one
/// standard deviation.
pub fn plot_snr(report: &SnrReport, metric: &str, path: &Path) -> Result<()> {
    let rows: Vec<&MetricResult> = report.rows.iter().filter(|r| r.metric == metric && r.median.is_some()).collect();
    let mut models: Vec<&str> = Vec::new();
    for r in &rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let snrs: Vec<f64> = rows.iter().filter_map(|r| r.snr_db).collect();
    let x_lo = snrs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_hi = snrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = if x_lo.is_finite() { (x_lo - 1.0, x_hi + 1.0) } else { (0.0, 1.0) };
    let (y_lo, y_hi) = y_range(rows.iter().flat_map(|r| {
        let (m, sd) = (r.median.unwrap(), r.variance.unwrap_or(0.0).sqrt());
        [m - sd, m + sd]
    }));

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("median {metric} vs SNR"), ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(55)
        .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("SNR (dB)")
        .y_desc(format!("{metric} (median, bars: population std)"))
        .draw()
        .map_err(plot_err)?;
    for (i, model) in models.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let mut pts: Vec<(f64, f64, f64)> = rows
            .iter()
            .filter(|r| r.model == *model)
            .map(|r| (r.snr_db.unwrap_or(0.0), r.median.unwrap(), r.variance.unwrap_or(0.0).sqrt()))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        chart
            .draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(*model)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.iter().map(|p| PathElement::new(vec![(p.0, p.1 - p.2), (p.0, p.1 + p.2)], color)))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Median of `metric` against GMACs per frame, one line per method, with the
/// teacher as a horizontal reference.
pub fn plot_size(report: &SizeReport, metric: &str, path: &Path) -> Result<()> {
    let point = |row: &super::sweep::SizeRow| {
        row.results
            .iter()
            .find(|r| r.metric == metric)
            .and_then(|r| r.median)
            .map(|m| (row.gmacs_per_frame, m))
    };
    let teacher = report.rows.iter().find(|r| r.method == "teacher");
    let students: Vec<_> = report.rows.iter().filter(|r| r.method != "teacher").collect();
    let xs: Vec<f64> = report.rows.iter().map(|r| r.gmacs_per_frame).collect();
    let x_hi = xs.iter().copied().fold(0.0, f64::max) * 1.05 + 1e-9;
    let (y_lo, y_hi) = y_range(report.rows.iter().filter_map(point).map(|p| p.1));

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("median {metric} at {} dB vs model cost", report.snr_db), ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(55)
        .build_cartesian_2d(0.0..x_hi, y_lo..y_hi)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("GMAC per frame")
        .y_desc(format!("{metric} (median)"))
        .draw()
        .map_err(plot_err)?;
    if let Some(m) = teacher.and_then(point).map(|p| p.1) {
        chart
            .draw_series(LineSeries::new([(0.0, m), (x_hi, m)], BLACK.stroke_width(1)))
            .map_err(plot_err)?
            .label("teacher")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK));
    }
    let mut methods: Vec<&str> = Vec::new();
    for r in &students {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    for (i, method) in methods.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let mut pts: Vec<(f64, f64)> = students.iter().filter(|r| r.method == *method).filter_map(|r| point(r)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(format!("KD {method}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.iter().map(|p| Circle::new(*p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
