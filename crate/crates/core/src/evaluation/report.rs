use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EvalCell, EvalError, EvalReport};
use crate::hybrid::Method;

pub const METRICS_HEADER: &str = "method,neighborhood,topn,precision,recall,f";

pub const REFERENCE_NOTE: &str = "Reference figures reported for this approach on a proprietary bookstore \
log were about 20% precision, 25% recall and 24% F for the hybrid method, and about 7%, 8% and 7.5% for \
latent factors alone. They are not expected to be matched on synthetic or other data.";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub fn write_metrics_csv(report: &EvalReport) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for c in &report.cells {
        let m = &c.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.method.as_str(),
            c.neighborhood,
            c.top_n,
            m.precision,
            m.recall,
            m.f
        );
    }
    out
}

fn metric_value(cell: &EvalCell, metric: &str) -> f64 {
    match metric {
        "precision" => cell.metrics.precision,
        "recall" => cell.metrics.recall,
        _ => cell.metrics.f,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of one metric against neighborhood size, one polyline per
/// (method, list size) series.
pub fn render_svg(report: &EvalReport, metric: &str) -> String {
    let mut series: BTreeMap<(Method, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for c in &report.cells {
        series
            .entry((c.method, c.top_n))
            .or_default()
            .push((c.neighborhood, metric_value(c, metric)));
    }
    for points in series.values_mut() {
        points.sort_by_key(|p| p.0);
    }
    let xs: Vec<usize> = {
        let mut v: Vec<usize> = report.cells.iter().map(|c| c.neighborhood).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (x_min, x_max) = (xs[0] as f64, *xs.last().unwrap() as f64);
    let top = report.cells.iter().map(|c| metric_value(c, metric)).fold(0.0, f64::max);
    let y_max = ((top * 1.1) / 0.05).ceil().max(1.0) * 0.05;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| {
        if x_max > x_min {
            LEFT + (x - x_min) / (x_max - x_min) * plot_w
        } else {
            LEFT + plot_w / 2.0
        }
    };
    let sy = |y: f64| TOP + plot_h - y / y_max * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="800" height="600" viewBox="0 0 800 600">"#
    );
    let _ = writeln!(s, "<desc>{}</desc>", escape(REFERENCE_NOTE));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="600" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="30" font-family="sans-serif" font-size="18" text-anchor="middle">{} vs neighborhood size</text>"#,
        LEFT + plot_w / 2.0,
        metric
    );
    // axes
    let _ = writeln!(
        s,
        r#"<polyline points="{l:.2},{t:.2} {l:.2},{b:.2} {r:.2},{b:.2}" fill="none" stroke="black"/>"#,
        l = LEFT,
        t = TOP,
        b = TOP + plot_h,
        r = LEFT + plot_w
    );
    for &x in &xs {
        let px = sx(x as f64);
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{x}</text>"#,
            TOP + plot_h + 20.0
        );
    }
    let ticks = (y_max / 0.05).round() as usize;
    let step = ticks.div_ceil(10).max(1);
    for t in (0..=ticks).step_by(step) {
        let y = t as f64 * 0.05;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{:.2}</text>"#,
            LEFT - 8.0,
            sy(y) + 4.0,
            y
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">neighborhood size</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        metric
    );
    for (idx, ((method, top_n), points)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x as f64), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 20.0 * idx as f64 + 10.0;
        let lx = LEFT + plot_w + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{} top {}</text>"#,
            lx + 26.0,
            ly + 4.0,
            method.as_str(),
            top_n
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `metrics.csv`, `report.json` and one SVG chart per metric.
/// Returns the written paths.
pub fn emit_report(report: &EvalReport, out_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    if report.cells.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| EvalError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = vec![("metrics.csv".to_string(), write_metrics_csv(report))];
    let json = serde_json::json!({ "reference_note": REFERENCE_NOTE, "cells": report.cells });
    files.push((
        "report.json".to_string(),
        serde_json::to_string_pretty(&json).expect("report serializes") + "\n",
    ));
    for metric in ["precision", "recall", "f"] {
        files.push((format!("{metric}.svg"), render_svg(report, metric)));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
