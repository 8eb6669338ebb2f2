use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diagnostics::AuditCurve;
use crate::trainer::{Stage, StepRecord, TrainLog};

/// A named polyline for [`line_chart_svg`].
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plain SVG line chart with axes, tick labels and a legend.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 160.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(out, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(fx),
            top + ph + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            left + pw + 12.0,
            left + pw + 32.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            left + pw + 38.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

/// Audit curves as one chart of metric against shuffled fraction.
pub fn audit_svg(curves: &[AuditCurve]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            label: c.tag.clone(),
            points: c.fractions.iter().copied().zip(c.mean.iter().copied()).collect(),
        })
        .collect();
    line_chart_svg("Coordinate-shuffle audit", "shuffled fraction", "metric", &series)
}

/// Per-epoch mean gradient norms of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochGradients {
    pub epoch: usize,
    pub stage: Stage,
    pub mean_grad_stat: f64,
    pub mean_grad_topo: f64,
}

pub fn epoch_gradient_means(steps: &[StepRecord]) -> Vec<EpochGradients> {
    let mut out: Vec<(EpochGradients, usize)> = Vec::new();
    for s in steps {
        match out.last_mut() {
            Some((e, n)) if e.epoch == s.epoch => {
                e.mean_grad_stat += s.grad_stat;
                e.mean_grad_topo += s.grad_topo;
                *n += 1;
            }
            _ => out.push((
                EpochGradients {
                    epoch: s.epoch,
                    stage: s.stage,
                    mean_grad_stat: s.grad_stat,
                    mean_grad_topo: s.grad_topo,
                },
                1,
            )),
        }
    }
    out.into_iter()
        .map(|(mut e, n)| {
            e.mean_grad_stat /= n as f64;
            e.mean_grad_topo /= n as f64;
            e
        })
        .collect()
}

/// Topological gradient-norm traces of several runs, one point per epoch.
pub fn gradient_trace_svg(runs: &[(&str, &TrainLog)]) -> String {
    let series: Vec<Series> = runs
        .iter()
        .map(|(name, log)| Series {
            label: name.to_string(),
            points: epoch_gradient_means(&log.steps)
                .iter()
                .map(|e| (e.epoch as f64, e.mean_grad_topo))
                .collect(),
        })
        .collect();
    line_chart_svg("Topological gradient norm", "epoch", "mean ||grad theta_t||", &series)
}
