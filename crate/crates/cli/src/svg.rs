//! Self-contained log-log line charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use randmil_core::diagnostics::{ErrorEntry, ErrorReport};

use crate::{loglog_fit, sorted_entries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Error against step size.
    Convergence,
    /// Error against CPU time.
    WorkPrecision,
}

impl PlotKind {
    fn x(self, e: &ErrorEntry) -> f64 {
        match self {
            PlotKind::Convergence => e.h,
            PlotKind::WorkPrecision => e.cpu_seconds,
        }
    }

    fn x_label(self) -> &'static str {
        match self {
            PlotKind::Convergence => "step size h",
            PlotKind::WorkPrecision => "CPU time [s]",
        }
    }
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 250.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
    fit: Option<(f64, f64)>,
}

struct LogAxis {
    lo: f64,
    hi: f64,
    start: f64,
    end: f64,
}

impl LogAxis {
    fn new(values: impl Iterator<Item = f64>, start: f64, end: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v.log10());
            hi = hi.max(v.log10());
        }
        let pad = ((hi - lo) * 0.05).max(0.05);
        Self {
            lo: lo - pad,
            hi: hi + pad,
            start,
            end,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.start + (v.log10() - self.lo) / (self.hi - self.lo) * (self.end - self.start)
    }

    /// Tick positions as `(mantissa, exponent)`: whole decades, or
    /// 1-2-5 steps when fewer than two decades are in range.
    fn ticks(&self) -> Vec<(u32, i32)> {
        let first = self.lo.ceil() as i32;
        let last = self.hi.floor() as i32;
        let decades: Vec<i32> = (first..=last).collect();
        if decades.len() >= 2 {
            let stride = decades.len().div_ceil(8);
            return decades
                .into_iter()
                .step_by(stride)
                .map(|k| (1, k))
                .collect();
        }
        let mut ticks = Vec::new();
        for k in self.lo.floor() as i32..=self.hi.ceil() as i32 {
            for m in [1u32, 2, 5] {
                let v = (f64::from(m) * 10f64.powi(k)).log10();
                if v >= self.lo && v <= self.hi {
                    ticks.push((m, k));
                }
            }
        }
        ticks
    }
}

fn tick_label(mantissa: u32, exponent: i32) -> String {
    if mantissa == 1 {
        format!("1e{exponent}")
    } else {
        format!("{mantissa}e{exponent}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn series(report: &ErrorReport, kind: PlotKind) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for e in sorted_entries(report) {
        let (x, y) = (kind.x(e), e.error);
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            continue;
        }
        match out.last_mut() {
            Some(s) if s.name == e.scheme => s.points.push((x, y)),
            _ => out.push(Series {
                name: e.scheme.clone(),
                points: vec![(x, y)],
                fit: None,
            }),
        }
    }
    for s in &mut out {
        let xs: Vec<f64> = s.points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = s.points.iter().map(|p| p.1).collect();
        s.fit = loglog_fit(&xs, &ys);
    }
    out
}

/// Renders the report as an SVG document. Entries with a nonpositive
/// coordinate cannot be drawn on log axes and are skipped.
pub fn render_svg(report: &ErrorReport, kind: PlotKind) -> Result<String> {
    let series = series(report, kind);
    if series.is_empty() {
        bail!("nothing to plot: no entry has positive coordinates");
    }
    let xs = LogAxis::new(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        LEFT,
        WIDTH - RIGHT,
    );
    let ys = LogAxis::new(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
        HEIGHT - BOTTOM,
        TOP,
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">reference: {}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(&report.reference)
    );

    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<rect class="frame" x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for (m, k) in xs.ticks() {
        let x = xs.map(f64::from(m) * 10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{y0}" stroke="#dddddd"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            y0 + 18.0,
            tick_label(m, k)
        );
    }
    for (m, k) in ys.ticks() {
        let y = ys.map(f64::from(m) * 10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            tick_label(m, k)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        kind.x_label()
    );
    let p = report.entries.first().map_or(2.0, |e| e.p);
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">L^{p} error</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    let _ = writeln!(
        svg,
        r#"<clipPath id="plot"><rect x="{x0}" y="{y1}" width="{}" height="{}"/></clipPath>"#,
        x1 - x0,
        y0 - y1
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", xs.map(x), ys.map(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="data" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                xs.map(x),
                ys.map(y)
            );
        }
        if let Some((slope, intercept)) = s.fit {
            let (lo, hi) = s
                .points
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
                    (lo.min(p.0), hi.max(p.0))
                });
            let at = |x: f64| (slope * x.ln() + intercept).exp();
            let _ = writeln!(
                svg,
                r#"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="6 4" clip-path="url(#plot)"/>"#,
                xs.map(lo),
                ys.map(at(lo)),
                xs.map(hi),
                ys.map(at(hi))
            );
        }

        let ly = TOP + 20.0 + 22.0 * i as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let label = match s.fit {
            Some((slope, _)) => format!("{} (slope {slope:.2})", s.name),
            None => s.name.clone(),
        };
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_svg(report: &ErrorReport, destination: &Path, kind: PlotKind) -> Result<()> {
    let svg = render_svg(report, kind)?;
    fs::write(destination, svg).with_context(|| format!("cannot write {}", destination.display()))
}
