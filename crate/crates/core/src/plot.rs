//! Self-contained SVG of one pair's telemetry: `|q|`, `|r̂|`, `v̂`, `I` and
//! `F̂` stacked over a shared time axis. Output depends only on the input.

use std::fmt::Write;

use crate::sim::PairSeries;
use crate::telemetry_csv::format_sig9;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 130.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const GAP: f64 = 26.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo <= 1e-12 * hi.abs().max(1e-12) {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// SVG for ordered pair `(i, j)` (1-based labels). `reference` draws a dashed
/// line at `|d|` in the `|r̂|` panel.
pub fn render_pair_svg(series: &PairSeries, label: (usize, usize), reference: Option<f64>) -> String {
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    let (i, j) = label;
    let panels: [(String, Vec<f64>); 5] = [
        (format!("|q_{i}{j}| (m)"), abs(&series.q)),
        (format!("|r̂_{i}{j}| (m)"), abs(&series.r_hat)),
        (format!("v̂_{i}{j} (m/s)"), series.v_hat.clone()),
        (format!("I_{i}{j} (A)"), series.current.clone()),
        (format!("F̂_{i}{j} (N)"), series.force.clone()),
    ];
    let height = TOP + 5.0 * PANEL + 4.0 * GAP + 40.0;
    let plot_w = WIDTH - LEFT - RIGHT;
    let (t0, t1) = match (series.t.first(), series.t.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let tx = |t: f64| LEFT + (t - t0) / (t1 - t0) * plot_w;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">pair ({i}, {j})</text>"#,
        WIDTH / 2.0
    );
    for (n, (title, values)) in panels.iter().enumerate() {
        let y0 = TOP + n as f64 * (PANEL + GAP);
        let (lo, hi) = match (n, reference) {
            (1, Some(d)) => {
                let mut v = values.clone();
                v.push(d.abs());
                bounds(&v)
            }
            _ => bounds(values),
        };
        let ty = |v: f64| y0 + PANEL - (v - lo) / (hi - lo) * PANEL;
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{y0:.2}" width="{plot_w:.2}" height="{PANEL}" fill="none" stroke="black" stroke-width="0.6"/>"#
        );
        let _ = writeln!(svg, r#"<text x="{LEFT}" y="{:.2}">{}</text>"#, y0 - 4.0, escape(title));
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            y0 + 10.0,
            format_sig9(hi)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            y0 + PANEL,
            format_sig9(lo)
        );
        if let (1, Some(d)) = (n, reference) {
            let y = ty(d.abs());
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
                LEFT + plot_w
            );
        }
        let mut points = String::new();
        for (t, v) in series.t.iter().zip(values) {
            let _ = write!(points, "{:.2},{:.2} ", tx(*t), ty(*v));
        }
        let _ = writeln!(
            svg,
            r##"<polyline fill="none" stroke="#1f5fa8" stroke-width="1.2" points="{}"/>"##,
            points.trim_end()
        );
    }
    let axis_y = TOP + 5.0 * PANEL + 4.0 * GAP + 16.0;
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="{axis_y:.2}">{}</text>"#, format_sig9(t0));
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{axis_y:.2}" text-anchor="end">{} s</text>"#,
        LEFT + plot_w,
        format_sig9(t1)
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series() -> PairSeries {
        PairSeries {
            t: vec![0.0, 0.1, 0.2],
            q: vec![-0.40, -0.42, -0.45],
            r_hat: vec![-0.40, -0.43, -0.45],
            v_hat: vec![0.0, 0.1, 0.0],
            current: vec![0.0, 1.0, 0.5],
            force: vec![0.0, 1e-3, 2e-4],
        }
    }

    #[test]
    fn five_panels_and_deterministic() {
        let a = render_pair_svg(&series(), (1, 2), Some(0.45));
        assert_eq!(a.matches("<polyline").count(), 5);
        assert!(a.contains("stroke-dasharray"));
        assert_eq!(a, render_pair_svg(&series(), (1, 2), Some(0.45)));
    }

    #[test]
    fn flat_series_is_drawable() {
        let mut s = series();
        s.current = vec![0.0; 3];
        let svg = render_pair_svg(&s, (2, 1), None);
        assert!(!svg.contains("NaN"));
    }
}
