//! Self-contained SVG line charts: one median line plus a quartile band per series.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{ExperimentReport, Field};

use super::csv::write_file;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    /// Lower and upper edge of the band around `y`; equal to `y` for a bare line.
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub name: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub curves: Vec<Curve>,
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values
            .map(|v| if log { v.log10() } else { v })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if log { 0.5 } else { lo.abs().max(1.0) * 0.1 };
            lo -= pad;
            hi += pad;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { log, lo, hi, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        self.from + (t - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            let step = ((b - a) / 6 + 1).max(1);
            let mut out: Vec<f64> = (a..=b).step_by(step as usize).map(|e| 10f64.powi(e)).collect();
            if out.is_empty() {
                out.push(10f64.powf((self.lo + self.hi) / 2.0));
            }
            out
        } else {
            let span = self.hi - self.lo;
            let raw = span / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .into_iter()
                .map(|m| m * mag)
                .find(|s| span / s <= 6.0)
                .unwrap_or(10.0 * mag);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last).map(|i| i as f64 * step).collect()
        }
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e4).contains(&a) {
        let s = format!("{:.3}", v);
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        let e = a.log10().floor() as i32;
        let m = v / 10f64.powi(e);
        if (m.abs() - 1.0).abs() < 1e-9 {
            format!("{}1e{e}", if v < 0.0 { "-" } else { "" })
        } else {
            format!("{m:.1}e{e}")
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn usable(v: f64, log: bool) -> bool {
    v.is_finite() && (!log || v > 0.0)
}

/// Renders the chart. Points that cannot be drawn (non-finite, or non-positive on a log
/// axis) are dropped and counted in a leading comment.
pub fn chart_svg(chart: &Chart) -> String {
    let mut dropped = 0usize;
    let curves: Vec<Curve> = chart
        .curves
        .iter()
        .map(|c| Curve {
            name: c.name.clone(),
            points: c
                .points
                .iter()
                .filter(|p| {
                    let ok = usable(p.x, chart.log_x) && usable(p.y, chart.log_y);
                    if !ok {
                        dropped += 1;
                    }
                    ok
                })
                .copied()
                .collect(),
        })
        .collect();
    let band = |p: &CurvePoint| {
        let lo = if usable(p.lo, chart.log_y) { p.lo } else { p.y };
        let hi = if usable(p.hi, chart.log_y) { p.hi } else { p.y };
        (lo, hi)
    };
    let all = || curves.iter().flat_map(|c| c.points.iter());
    let xa = Axis::new(all().map(|p| p.x), chart.log_x, LEFT, WIDTH - RIGHT);
    let ya = Axis::new(
        all().flat_map(|p| {
            let (lo, hi) = band(p);
            [lo, hi]
        }),
        chart.log_y,
        HEIGHT - BOTTOM,
        TOP,
    );

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<!-- dropped non-finite points: {dropped} -->");
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(&chart.title)
    );
    // frame and ticks
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r##"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        x1 - x0,
        y0 - y1
    );
    for t in xa.ticks() {
        let x = xa.map(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            y0 + 5.0,
            y0 + 18.0,
            tick_label(t)
        );
    }
    for t in ya.ticks() {
        let y = ya.map(t);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{x0}" y2="{y:.1}" stroke="#333"/><line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#eee"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(&chart.y_label)
    );

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g data-series="{}">"#, escape(&c.name));
        if c.points.len() > 1 {
            let mut poly = String::new();
            for p in &c.points {
                let _ = write!(poly, "{:.2},{:.2} ", xa.map(p.x), ya.map(band(p).1));
            }
            for p in c.points.iter().rev() {
                let _ = write!(poly, "{:.2},{:.2} ", xa.map(p.x), ya.map(band(p).0));
            }
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                poly.trim_end()
            );
            let line: Vec<String> = c
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", xa.map(p.x), ya.map(p.y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
        }
        for p in &c.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                xa.map(p.x),
                ya.map(p.y)
            );
        }
        let ly = TOP + 8.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x1 + 12.0,
            x1 + 32.0,
            x1 + 38.0,
            ly + 4.0,
            escape(&c.name)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Chart of the aggregated `y_field` against `N`, one curve per series.
pub fn report_chart(report: &ExperimentReport, x_field: &str, y_field: Field, log_x: bool, log_y: bool) -> Result<Chart> {
    if x_field != "N" {
        return Err(Error::PlotField(x_field.to_string()));
    }
    let mut curves: Vec<Curve> = Vec::new();
    for a in report.aggregates.iter().filter(|a| a.field == y_field) {
        let point = CurvePoint {
            x: a.n as f64,
            y: a.median,
            lo: a.q25,
            hi: a.q75,
        };
        match curves.iter_mut().find(|c| c.name == a.series) {
            Some(c) => c.points.push(point),
            None => curves.push(Curve {
                name: a.series.clone(),
                points: vec![point],
            }),
        }
    }
    if curves.is_empty() {
        return Err(Error::PlotField(y_field.name().to_string()));
    }
    Ok(Chart {
        title: format!("{}: {}", report.config.experiment, y_field),
        x_label: "N".into(),
        y_label: y_field.name().into(),
        log_x,
        log_y,
        curves,
    })
}

/// The field and axis scaling shown by default for each experiment.
pub fn default_plot(report: &ExperimentReport) -> (Field, bool, bool) {
    use crate::experiments::Experiment::*;
    match report.config.experiment {
        Condnum => (Field::RatioToTheory, true, true),
        LearningCurve | KernelInterp => (Field::Mse, true, true),
        SminStudy => (Field::SminRatio, true, true),
        Truncation => (Field::Slack, true, false),
    }
}

/// Writes the SVG chart of `y_field` against `x_field` (currently only `N`).
pub fn render_plot(
    report: &ExperimentReport,
    path: &Path,
    x_field: &str,
    y_field: Field,
    log_x: bool,
    log_y: bool,
) -> Result<()> {
    let chart = report_chart(report, x_field, y_field, log_x, log_y)?;
    write_file(path, &chart_svg(&chart))
}
