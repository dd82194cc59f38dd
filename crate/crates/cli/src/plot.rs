//! Minimal SVG line charts: linear axes, one polyline per series, a legend.

use std::fmt::Write;
use std::path::Path;

use crate::output::ParsedCsv;
use crate::CliError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn render_csv(input: &Path, x: &str, ys: &[String], group: Option<&str>) -> Result<String, CliError> {
    let csv = ParsedCsv::read(input)?;
    let xi = csv.column(x)?;
    let yi = ys.iter().map(|y| csv.column(y)).collect::<Result<Vec<_>, _>>()?;
    let gi = group.map(|g| csv.column(g)).transpose()?;

    // group keys in order of first appearance
    let mut keys: Vec<f64> = Vec::new();
    if let Some(g) = gi {
        for r in &csv.rows {
            if !keys.iter().any(|k| k.to_bits() == r[g].to_bits()) {
                keys.push(r[g]);
            }
        }
    }
    let mut series = Vec::new();
    for (name, &col) in ys.iter().zip(&yi) {
        match (group, gi) {
            (Some(gname), Some(g)) => {
                for &k in &keys {
                    series.push(Series {
                        label: format!("{name} ({gname}={k})"),
                        points: csv.rows.iter().filter(|r| r[g].to_bits() == k.to_bits()).map(|r| (r[xi], r[col])).collect(),
                    });
                }
            }
            _ => series.push(Series {
                label: name.clone(),
                points: csv.rows.iter().map(|r| (r[xi], r[col])).collect(),
            }),
        }
    }
    Ok(render(&series, x, &ys.join(", ")))
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Renders the series into an 800×600 SVG. Non-finite points break a curve
/// into separate polylines.
pub fn render(series: &[Series], x_name: &str, y_name: &str) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().filter(|p| p.0.is_finite()).map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"#,
        b = TOP + ph,
        r = LEFT + pw
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{b5}" stroke="black"/><text x="{px:.2}" y="{bt}" text-anchor="middle">{}</text>"#,
            label(xv),
            b = TOP + ph,
            b5 = TOP + ph + 5.0,
            bt = TOP + ph + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{l5}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{lt}" y="{pyt:.2}" text-anchor="end">{}</text>"#,
            label(yv),
            l5 = LEFT - 5.0,
            lt = LEFT - 8.0,
            pyt = py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{cx}" y="{ty}" text-anchor="middle">{}</text>"#,
        escape(x_name),
        cx = LEFT + pw / 2.0,
        ty = HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{cy}" text-anchor="middle" transform="rotate(-90 20 {cy})">{}</text>"#,
        escape(y_name),
        cy = TOP + ph / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for run in s.points.split(|p| !(p.0.is_finite() && p.1.is_finite())) {
            if run.is_empty() {
                continue;
            }
            let pts: Vec<String> = run.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-series="{i}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
