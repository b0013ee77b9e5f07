//! Self-contained line charts: change of right-hand side on the x-axis,
//! optimal value and predicted bounds on the y-axis.

use std::fmt::Write as _;

use copsense::sensitivity::{Method, SensitivityReport};

use crate::experiment::Case;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 40.0;
const TICKS: usize = 5;

const COLORS: [&str; 6] = ["#000000", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

/// One polyline; points with a missing value break the line.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, Option<f64>)>,
}

fn method_color(m: Method) -> &'static str {
    let k = Method::ALL.iter().position(|&x| x == m).unwrap_or(0);
    COLORS[1 + k % (COLORS.len() - 1)]
}

/// Ground truth and one series per method. With a single shifted row the
/// x value is that row's change; otherwise it is the grid index.
pub fn chart_series(case: &Case, report: &SensitivityReport) -> (String, Vec<(Series, &'static str)>) {
    let single = case.rows.len() == 1;
    let std_row = if single { case.instance.constraint_row(case.rows[0]) } else { None };
    let x_of = |k: usize, delta: &[f64]| match std_row {
        Some(r) => delta[r],
        None => k as f64,
    };
    let x_label = if single { "Δb (shifted row)" } else { "grid point" }.to_string();

    let mut out = Vec::new();
    if !report.truth.is_empty() {
        let points = report
            .truth
            .iter()
            .enumerate()
            .map(|(k, t)| (x_of(k, &t.delta), t.value))
            .collect();
        out.push((
            Series {
                label: "exact".into(),
                points,
            },
            COLORS[0],
        ));
    }
    let mut methods: Vec<Method> = report.rows.iter().map(|r| r.method).collect();
    methods.dedup();
    for m in methods {
        let points = report
            .rows
            .iter()
            .filter(|r| r.method == m)
            .enumerate()
            .map(|(k, r)| (x_of(k, &r.delta), r.prediction))
            .collect();
        out.push((
            Series {
                label: m.name().into(),
                points,
            },
            method_color(m),
        ));
    }
    (x_label, out)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series as an SVG document with axes, ticks and a legend.
pub fn render_svg(title: &str, x_label: &str, series: &[(Series, &str)]) -> String {
    let finite = |v: &f64| v.is_finite();
    let xs: Vec<f64> = series.iter().flat_map(|(s, _)| s.points.iter().map(|p| p.0)).filter(finite).collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|(s, _)| s.points.iter().filter_map(|p| p.1))
        .filter(finite)
        .collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_Y + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, MARGIN_LEFT + plot_w / 2.0, escape(title));
    let (bottom, right) = (MARGIN_Y + plot_h, MARGIN_LEFT + plot_w);
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN_LEFT} {MARGIN_Y} V{bottom} H{right}" fill="none" stroke="black"/>"#
    );
    for k in 0..=TICKS {
        let t = k as f64 / TICKS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (cx, cy) = (px(xv), py(yv));
        let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{bottom}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 4.0);
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bottom + 16.0, fmt_tick(xv));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{cy:.2}" x2="{MARGIN_LEFT}" y2="{cy:.2}" stroke="black"/>"#, MARGIN_LEFT - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 6.0, cy + 4.0, fmt_tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MARGIN_LEFT + plot_w / 2.0, HEIGHT - 6.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">value</text>"#,
        MARGIN_Y + plot_h / 2.0,
        MARGIN_Y + plot_h / 2.0
    );

    for (k, (series, color)) in series.iter().enumerate() {
        let mut pts: Vec<(f64, Option<f64>)> = series.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, seg.join(" "));
            } else if let Some(p) = seg.first() {
                let (a, b) = p.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(s, r#"<circle cx="{a}" cy="{b}" r="2" fill="{color}"/>"#);
            }
            seg.clear();
        };
        for (x, y) in pts {
            match y.filter(|v| v.is_finite()) {
                Some(y) if x.is_finite() => segment.push(format!("{:.2},{:.2}", px(x), py(y))),
                _ => flush(&mut segment, &mut s),
            }
        }
        flush(&mut segment, &mut s);
        let ly = MARGIN_Y + 16.0 * k as f64;
        let lx = right + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&series.label));
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_chart(title: &str, case: &Case, report: &SensitivityReport) -> String {
    let (x_label, series) = chart_series(case, report);
    render_svg(title, &x_label, &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_break_lines() {
        let s = Series {
            label: "a".into(),
            points: vec![(0.0, Some(1.0)), (1.0, Some(2.0)), (2.0, None), (3.0, Some(0.0))],
        };
        let svg = render_svg("t", "x", &[(s, "#000")]);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn escapes_labels() {
        let svg = render_svg("a<b", "x&y", &[]);
        assert!(svg.contains("a&lt;b") && svg.contains("x&amp;y"));
    }
}
