//! Deterministic SVG charts of run artifacts.

use std::fmt::Write as _;

use clap::ValueEnum;
use num_complex::Complex64;
use remsim_core::tomography::ProcessMatrix;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::output::{Artifact, Table};

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const MAX_POINTS: usize = 4000;
const COLORS: [&str; 4] = ["#c0392b", "#1f3a93", "#27ae60", "#8e44ad"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Spectrum,
    Trace,
    Histogram,
    Chi,
    Efficiency,
    Xy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub x: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Style {
    Line,
    Step,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub style: Style,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    mag * if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    }
}

fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let step = nice_step(hi - lo);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), decimals)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Min/max per bucket so peaks survive thinning.
fn thin(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if x.len() <= MAX_POINTS {
        return (x.to_vec(), y.to_vec());
    }
    let per = x.len().div_ceil(MAX_POINTS / 2);
    let (mut tx, mut ty) = (Vec::new(), Vec::new());
    for start in (0..x.len()).step_by(per) {
        let end = (start + per).min(x.len());
        let (mut imin, mut imax) = (start, start);
        for i in start..end {
            if y[i] < y[imin] {
                imin = i;
            }
            if y[i] > y[imax] {
                imax = i;
            }
        }
        for i in if imin <= imax { [imin, imax] } else { [imax, imin] } {
            tx.push(x[i]);
            ty.push(y[i]);
        }
    }
    (tx, ty)
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

pub fn render(chart: &Chart) -> String {
    let (x0, x1) = range(chart.series.iter().flat_map(|s| s.x.iter().copied()));
    let (mut y0, mut y1) = range(chart.series.iter().flat_map(|s| s.y.iter().copied()));
    if y0 > 0.0 && y0 < 0.3 * y1 {
        y0 = 0.0;
    }
    let pad = 0.05 * (y1 - y0);
    y1 += pad;
    if y0 != 0.0 {
        y0 -= pad;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    header(&mut out, &chart.title);
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    let (xt, xd) = ticks(x0, x1);
    for t in xt {
        let px = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#333"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{t:.xd$}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 19.0
        );
    }
    let (yt, yd) = ticks(y0, y1);
    for t in yt {
        let py = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{t:.yd$}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 14.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    for m in &chart.markers {
        if m.x < x0 || m.x > x1 {
            continue;
        }
        let px = sx(m.x);
        let _ = writeln!(
            out,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.2}" fill="#555">{}</text>"##,
            TOP + ph,
            px + 3.0,
            TOP + 14.0,
            escape(&m.label)
        );
    }
    for (k, s) in chart.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let (x, y) = thin(&s.x, &s.y);
        match s.style {
            Style::Points => {
                for (a, b) in x.iter().zip(&y) {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                        sx(*a),
                        sy(*b)
                    );
                }
            }
            Style::Line | Style::Step => {
                let mut d = String::new();
                for i in 0..x.len() {
                    let (px, py) = (sx(x[i]), sy(y[i]));
                    if i == 0 {
                        let _ = write!(d, "M{px:.2} {py:.2}");
                    } else if s.style == Style::Step {
                        let _ = write!(d, " H{px:.2} V{py:.2}");
                    } else {
                        let _ = write!(d, " L{px:.2} {py:.2}");
                    }
                }
                let _ = writeln!(
                    out,
                    r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.2"/>"#
                );
            }
        }
        if chart.series.len() > 1 {
            let ly = TOP + 16.0 + 16.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="12" height="3" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                W - RIGHT - 110.0,
                ly - 4.0,
                W - RIGHT - 94.0,
                ly,
                escape(&s.label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Real and imaginary parts of chi as two bar panels.
pub fn render_chi(chi: &ProcessMatrix) -> String {
    const NAMES: [&str; 4] = ["I", "X", "Y", "Z"];
    let mut out = String::new();
    header(&mut out, "process matrix");
    let panel_w = (W - LEFT - RIGHT - 40.0) / 2.0;
    let ph = H - TOP - BOTTOM;
    type Part = (&'static str, fn(Complex64) -> f64);
    let parts: [Part; 2] = [("Re chi", |z| z.re), ("Im chi", |z| z.im)];
    let (lo, hi) = range(
        (0..16)
            .flat_map(|k| parts.iter().map(move |p| p.1(chi.chi[(k / 4, k % 4)])))
            .chain([-0.1, 1.0]),
    );
    for (p, (title, value)) in parts.iter().enumerate() {
        let left = LEFT + p as f64 * (panel_w + 40.0);
        let sy = |y: f64| TOP + ph - (y - lo) / (hi - lo) * ph;
        let _ = writeln!(
            out,
            r##"<rect x="{left:.1}" y="{TOP}" width="{panel_w:.1}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{title}</text>"#,
            left + panel_w / 2.0,
            TOP - 4.0
        );
        let (yt, yd) = ticks(lo, hi);
        for t in yt {
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{:.2}" x2="{left:.1}" y2="{:.2}" stroke="#333"/><text x="{:.1}" y="{:.2}" text-anchor="end">{t:.yd$}</text>"##,
                left - 5.0,
                sy(t),
                sy(t),
                left - 8.0,
                sy(t) + 4.0
            );
        }
        let zero = sy(0.0);
        let _ = writeln!(
            out,
            r##"<line x1="{left:.1}" y1="{zero:.2}" x2="{:.1}" y2="{zero:.2}" stroke="#333"/>"##,
            left + panel_w
        );
        let slot = panel_w / 16.0;
        for k in 0..16 {
            let (m, n) = (k / 4, k % 4);
            let v = value(chi.chi[(m, n)]);
            let x = left + k as f64 * slot + 0.15 * slot;
            let (top, h) = if v >= 0.0 {
                (sy(v), zero - sy(v))
            } else {
                (zero, sy(v) - zero)
            };
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/><text x="{:.2}" y="{:.1}" text-anchor="middle" font-size="9">{}{}</text>"#,
                0.7 * slot,
                h.max(0.0),
                COLORS[m],
                x + 0.35 * slot,
                TOP + ph + 14.0,
                NAMES[m],
                NAMES[n]
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn guess(table: &Table) -> PlotKind {
    let has = |c: &str| table.column(c).is_some();
    if has("detuning_mhz") && has("depth") {
        PlotKind::Spectrum
    } else if has("time_ns") && has("intensity") {
        PlotKind::Trace
    } else if has("bin_ns") && has("counts") {
        PlotKind::Histogram
    } else if has("order") && has("efficiency") {
        PlotKind::Efficiency
    } else {
        PlotKind::Xy
    }
}

fn col(table: &Table, name: &str) -> Result<Vec<f64>> {
    table
        .column(name)
        .map(<[f64]>::to_vec)
        .ok_or_else(|| CliError::Validation(format!("artifact has no `{name}` column")))
}

pub fn chart_for(table: &Table, kind: PlotKind, title: &str, markers: Vec<Marker>) -> Result<Chart> {
    let (x, y, xl, yl, style) = match kind {
        PlotKind::Spectrum => (
            col(table, "detuning_mhz")?,
            col(table, "depth")?,
            "detuning (MHz)",
            "optical depth",
            Style::Line,
        ),
        PlotKind::Trace => (
            col(table, "time_ns")?,
            col(table, "intensity")?,
            "time (ns)",
            "intensity (1/ns)",
            Style::Line,
        ),
        PlotKind::Histogram => (
            col(table, "bin_ns")?,
            col(table, "counts")?,
            "time (ns)",
            "counts",
            Style::Step,
        ),
        PlotKind::Efficiency => (
            col(table, "order")?,
            col(table, "efficiency")?,
            "echo order",
            "efficiency",
            Style::Points,
        ),
        PlotKind::Xy => {
            if table.columns.len() < 2 {
                return Err(CliError::Validation("need at least two columns to plot".into()));
            }
            let (a, b) = (&table.columns[0], &table.columns[1]);
            (
                table.data[0].clone(),
                table.data[1].clone(),
                a.as_str(),
                b.as_str(),
                Style::Points,
            )
        }
        PlotKind::Chi => return Err(CliError::Validation("chi artifacts are not tables".into())),
    };
    Ok(Chart {
        title: title.to_string(),
        x_label: xl.to_string(),
        y_label: yl.to_string(),
        series: vec![Series {
            label: title.to_string(),
            x,
            y,
            style,
        }],
        markers,
    })
}

/// Echo windows every `period_ns` after the transmitted peak of a trace.
pub fn echo_markers(time_ns: &[f64], intensity: &[f64], period_ns: f64, orders: u32) -> Vec<Marker> {
    let Some(peak) = (0..time_ns.len()).max_by(|&a, &b| intensity[a].total_cmp(&intensity[b])) else {
        return Vec::new();
    };
    (1..=orders)
        .map(|m| Marker {
            x: time_ns[peak] + m as f64 * period_ns,
            label: format!("m={m}"),
        })
        .collect()
}

/// Renders a stored artifact, guessing the kind from its columns when not given.
pub fn plot_artifact(name: &str, bytes: &[u8], kind: Option<PlotKind>, period_ns: f64) -> Result<Artifact> {
    let stem = std::path::Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("plot")
        .to_string();
    let svg_name = format!("{stem}.svg");
    let is_json = name.ends_with(".json");
    if kind == Some(PlotKind::Chi) || (kind.is_none() && is_json && looks_like_chi(bytes)) {
        let text = std::str::from_utf8(bytes).map_err(|e| CliError::Validation(e.to_string()))?;
        let chi = ProcessMatrix::from_json(text).or_else(|_| {
            let t = Table::from_csv(bytes).map_err(CliError::Validation)?;
            chi_from_table(&t)
        });
        return Ok(Artifact::new(svg_name, render_chi(&chi?)));
    }
    let table = if is_json {
        let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| CliError::Validation(e.to_string()))?;
        Table::from_json_value(&v)
            .ok_or_else(|| CliError::Validation("JSON artifact is not a table of columns".into()))?
    } else {
        Table::from_csv(bytes).map_err(CliError::Validation)?
    };
    if kind == Some(PlotKind::Chi) || (kind.is_none() && table.column("re").is_some() && table.column("row").is_some())
    {
        return Ok(Artifact::new(svg_name, render_chi(&chi_from_table(&table)?)));
    }
    let kind = kind.unwrap_or_else(|| guess(&table));
    let markers = match kind {
        PlotKind::Trace => echo_markers(&col(&table, "time_ns")?, &col(&table, "intensity")?, period_ns, 3),
        _ => Vec::new(),
    };
    Ok(Artifact::new(
        svg_name,
        render(&chart_for(&table, kind, &stem, markers)?),
    ))
}

fn looks_like_chi(bytes: &[u8]) -> bool {
    serde_json::from_slice::<serde_json::Value>(bytes)
        .map(|v| {
            v.get("re")
                .is_some_and(|r| r.is_array() && r.get(0).is_some_and(|row| row.is_array()))
        })
        .unwrap_or(false)
}

fn chi_from_table(t: &Table) -> Result<ProcessMatrix> {
    let (r, c, re, im) = (col(t, "row")?, col(t, "col")?, col(t, "re")?, col(t, "im")?);
    let mut p = ProcessMatrix::identity();
    p.chi.fill(0.0.into());
    for i in 0..t.rows() {
        let (m, n) = (r[i] as usize, c[i] as usize);
        if m > 3 || n > 3 {
            return Err(CliError::Validation(format!("chi index ({m}, {n}) out of range")));
        }
        p.chi[(m, n)] = Complex64::new(re[i], im[i]);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_numbers() {
        let (t, d) = ticks(-6.34, 6.34);
        assert_eq!(t, vec![-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0]);
        assert_eq!(d, 0);
        let (t, d) = ticks(0.0, 0.31);
        assert_eq!(d, 2);
        assert!((t[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn spectrum_plot_is_deterministic() {
        let t = Table::new(
            &["detuning_mhz", "depth"],
            vec![vec![-1.0, 0.0, 1.0], vec![0.0, 3.0, 0.0]],
        );
        let a = plot_artifact("s.csv", &t.artifact("s", crate::output::Format::Csv).bytes, None, 500.0).unwrap();
        let b = plot_artifact("s.csv", &t.artifact("s", crate::output::Format::Csv).bytes, None, 500.0).unwrap();
        assert_eq!(a, b);
        let svg = String::from_utf8(a.bytes).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("optical depth"));
    }

    #[test]
    fn chi_json_becomes_bars() {
        let a = plot_artifact(
            "chi.json",
            ProcessMatrix::identity().to_json().unwrap().as_bytes(),
            None,
            500.0,
        )
        .unwrap();
        let svg = String::from_utf8(a.bytes).unwrap();
        assert!(svg.contains("Re chi") && svg.contains("Im chi"));
        assert_eq!(svg.matches("<rect x=").count(), 2 + 2 * 16);
    }

    #[test]
    fn thinning_keeps_extremes() {
        let x: Vec<f64> = (0..100_000).map(|i| i as f64).collect();
        let mut y = vec![0.0; x.len()];
        y[55_555] = 9.0;
        let (tx, ty) = thin(&x, &y);
        assert!(tx.len() <= MAX_POINTS + 2);
        assert!(ty.contains(&9.0));
    }
}
