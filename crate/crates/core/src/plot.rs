//! Self-contained SVG line charts and plot-data files for experiment records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QmrError, Result};
use crate::harness::TrialRecord;

/// Floor applied to values drawn on a log axis.
pub const LOG_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlotKind {
    SuccessVsRatio,
    ErrVsP,
    TimeVsP,
    ErrVsSigma,
}

impl PlotKind {
    pub fn slug(self) -> &'static str {
        match self {
            PlotKind::SuccessVsRatio => "success_vs_ratio",
            PlotKind::ErrVsP => "err_vs_p",
            PlotKind::TimeVsP => "time_vs_p",
            PlotKind::ErrVsSigma => "err_vs_sigma",
        }
    }

    fn x_label(self) -> &'static str {
        match self {
            PlotKind::SuccessVsRatio => "n/p",
            PlotKind::ErrVsP | PlotKind::TimeVsP => "p",
            PlotKind::ErrVsSigma => "sigma",
        }
    }

    fn y_label(self) -> &'static str {
        match self {
            PlotKind::SuccessVsRatio => "success rate",
            PlotKind::ErrVsP | PlotKind::ErrVsSigma => "mean relative error",
            PlotKind::TimeVsP => "mean time (s)",
        }
    }

    fn log_y(self) -> bool {
        matches!(self, PlotKind::ErrVsP | PlotKind::ErrVsSigma)
    }

    fn x_of(self, r: &TrialRecord) -> f64 {
        match self {
            PlotKind::SuccessVsRatio => r.n as f64 / r.p as f64,
            PlotKind::ErrVsP | PlotKind::TimeVsP => r.p as f64,
            PlotKind::ErrVsSigma => r.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, y, trials)` sorted by `x`.
    pub points: Vec<(f64, f64, usize)>,
}

/// Groups records into one series per solver (split further by any grid
/// parameter that varies and is not on the x axis) and aggregates each x.
pub fn build_series(records: &[TrialRecord], kind: PlotKind) -> Vec<Series> {
    let varies = |f: &dyn Fn(&TrialRecord) -> String| {
        records.iter().map(f).collect::<std::collections::BTreeSet<_>>().len() > 1
    };
    let show_kind = varies(&|r| r.kind.name().to_string());
    let show_noise = varies(&|r| r.noise_sigma.to_string());
    let show_sigma = kind != PlotKind::ErrVsSigma && varies(&|r| r.sigma.to_string());
    let show_p = kind == PlotKind::SuccessVsRatio && varies(&|r| r.p.to_string());
    let show_n = kind == PlotKind::ErrVsSigma && varies(&|r| r.n.to_string());

    let mut groups: BTreeMap<String, BTreeMap<u64, Vec<&TrialRecord>>> = BTreeMap::new();
    for r in records {
        let mut label = r.solver.name().to_string();
        if show_kind {
            let _ = write!(label, " {}", r.kind);
        }
        if show_noise {
            let _ = write!(label, " noise={}", r.noise_sigma);
        }
        if show_sigma {
            let _ = write!(label, " sigma={}", r.sigma);
        }
        if show_p {
            let _ = write!(label, " p={}", r.p);
        }
        if show_n {
            let _ = write!(label, " n={}", r.n);
        }
        groups
            .entry(label)
            .or_default()
            .entry(kind.x_of(r).to_bits())
            .or_default()
            .push(r);
    }

    let mut out = Vec::new();
    for (label, by_x) in groups {
        let mut points = Vec::new();
        for (xbits, recs) in by_x {
            let y = match kind {
                PlotKind::SuccessVsRatio => {
                    recs.iter().filter(|r| r.success).count() as f64 / recs.len() as f64
                }
                PlotKind::ErrVsP | PlotKind::ErrVsSigma => {
                    mean(recs.iter().map(|r| r.rel_err)).map(|v| v.max(LOG_FLOOR)).unwrap_or(f64::NAN)
                }
                PlotKind::TimeVsP => mean(recs.iter().map(|r| r.time_seconds)).unwrap_or(f64::NAN),
            };
            if y.is_finite() {
                points.push((f64::from_bits(xbits), y, recs.len()));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.is_empty() {
            log::warn!("series `{label}` has no finite values; skipped");
            continue;
        }
        out.push(Series { label, points });
    }
    out
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values.filter(|v| v.is_finite()) {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Writes an SVG chart to `path` and the aggregated series to the sibling
/// `.dat` file. Returns the plotted series.
pub fn emit_plot(records: &[TrialRecord], kind: PlotKind, path: &Path) -> Result<Vec<Series>> {
    let series = build_series(records, kind);
    let svg = render_svg(&series, kind);
    std::fs::write(path, svg).map_err(|e| QmrError::io(path, e))?;
    let dat_path = path.with_extension("dat");
    let mut dat = format!("# {}\n# series\t{}\t{}\ttrials\n", kind.slug(), kind.x_label(), kind.y_label());
    for s in &series {
        for (x, y, t) in &s.points {
            let _ = writeln!(dat, "{}\t{}\t{}\t{}", s.label, x, y, t);
        }
    }
    std::fs::write(&dat_path, dat).map_err(|e| QmrError::io(&dat_path, e))?;
    Ok(series)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn render_svg(series: &[Series], kind: PlotKind) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut x_lo, mut x_hi) = bounds(xs);
    if x_lo == x_hi {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let (y_lo, y_hi) = if kind == PlotKind::SuccessVsRatio {
        (0.0, 1.0)
    } else if kind.log_y() {
        let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1.log10()));
        let (lo, hi) = bounds(ys);
        (lo.floor(), if hi.ceil() > lo.floor() { hi.ceil() } else { lo.floor() + 1.0 })
    } else {
        let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
        let (_, hi) = bounds(ys);
        (0.0, if hi > 0.0 { hi * 1.1 } else { 1.0 })
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| {
        let v = if kind.log_y() { y.log10() } else { y };
        TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for i in 0..=5 {
        let x = x_lo + (x_hi - x_lo) * i as f64 / 5.0;
        let px = sx(x);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            tick_label(x)
        );
    }
    let y_ticks: Vec<(f64, String)> = if kind.log_y() {
        let step = ((y_hi - y_lo) / 8.0).ceil().max(1.0);
        let mut t = Vec::new();
        let mut e = y_lo;
        while e <= y_hi + 1e-9 {
            t.push((10f64.powf(e), format!("1e{}", e as i64)));
            e += step;
        }
        t
    } else {
        (0..=5)
            .map(|i| {
                let y = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
                (y, tick_label(y))
            })
            .collect()
    };
    for (y, label) in y_ticks {
        let py = sy(y);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        kind.x_label()
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        kind.y_label()
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for &(x, y, _) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = TOP + 15.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
