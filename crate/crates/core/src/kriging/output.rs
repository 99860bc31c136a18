//! Writers for kriging estimates, metric reports and a line chart.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::write_file;
use crate::error::{Error, Result};

use super::{Evaluation, MetricsReport, VirtualLine};

/// One line of an estimates file.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateRow {
    pub sensor_id: String,
    pub t: usize,
    pub estimate: f64,
    pub truth: Option<f64>,
}

/// `sensor_id,t,estimate,truth`; unknown truth is an empty cell.
pub fn rows_csv(rows: &[EstimateRow]) -> Result<String> {
    let csv_err = |e: csv::Error| Error::Format {
        what: "estimates csv",
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sensor_id", "t", "estimate", "truth"])
        .map_err(csv_err)?;
    for r in rows {
        let truth = r.truth.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.sensor_id.as_str(),
            &r.t.to_string(),
            &r.estimate.to_string(),
            &truth,
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// Rows of an evaluation; `t` is offset by `t0`.
pub fn evaluation_rows(
    eval: &Evaluation,
    sensor_ids: &[String],
    t0: usize,
) -> Result<Vec<EstimateRow>> {
    let mut rows = Vec::with_capacity(eval.estimates.rows() * eval.estimates.cols());
    for (r, &v) in eval.virtual_indices.iter().enumerate() {
        let id = sensor_ids
            .get(v)
            .ok_or_else(|| Error::dim("evaluation_rows", "sensor id list too short"))?;
        for c in 0..eval.estimates.cols() {
            rows.push(EstimateRow {
                sensor_id: id.clone(),
                t: t0 + c,
                estimate: eval.estimates.get(r, c),
                truth: (eval.valid.get(r, c) != 0.0).then(|| eval.truth.get(r, c)),
            });
        }
    }
    Ok(rows)
}

pub fn estimates_csv(eval: &Evaluation, sensor_ids: &[String], t0: usize) -> Result<String> {
    rows_csv(&evaluation_rows(eval, sensor_ids, t0)?)
}

/// `virtual_id,x,y,t,estimate` rows for a virtual line.
pub fn virtual_line_csv(line: &VirtualLine, t0: usize) -> String {
    let mut out = String::from("virtual_id,x,y,t,estimate\n");
    for (i, (pt, est)) in line.points.iter().zip(&line.estimates).enumerate() {
        for (c, v) in est.iter().enumerate() {
            let _ = writeln!(out, "v{i},{},{},{},{v}", pt.0, pt.1, t0 + c);
        }
    }
    out
}

pub fn metrics_json(report: &MetricsReport) -> String {
    serde_json::to_string_pretty(report).expect("metrics serialize")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// A minimal SVG line chart; one polyline per named series.
pub fn line_chart_svg(title: &str, series: &[(&str, &[f64])]) -> String {
    let (w, h, pad) = (800.0, 400.0, 40.0);
    let len = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let (lo, hi) = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (lo.min(0.0) - 1.0, lo.max(0.0) + 1.0)
    };
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (len.max(2) - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(
        svg,
        r#"<text x="4" y="{}" font-size="10">{hi:.3}</text>"#,
        pad + 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="4" y="{}" font-size="10">{lo:.3}</text>"#,
        h - pad
    );
    for (k, (name, s)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{}</text>"#,
            w - pad - 120.0,
            pad + 14.0 * k as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
