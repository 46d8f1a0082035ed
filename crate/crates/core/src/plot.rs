//! Minimal hand-written SVG charts. CSV outputs carry the data; these are
//! for a quick look.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let (mut x0, mut x1) = bounds(xs);
        let (mut y0, mut y1) = bounds(ys);
        if x1 <= x0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        Self { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn header(out: &mut String, title: &str, f: &Frame) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = write!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for (v, anchor_y) in [(f.y0, H - MARGIN), (f.y1, MARGIN)] {
        let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, MARGIN - 4.0, anchor_y + 4.0, v);
    }
    for (v, anchor_x) in [(f.x0, MARGIN), (f.x1, W - MARGIN)] {
        let _ = write!(out, r#"<text x="{anchor_x}" y="{}" text-anchor="middle">{:.3}</text>"#, H - MARGIN + 16.0, v);
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, f: &Frame, xs: &[f64], ys: &[f64], color: &str, dash: bool) {
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| y.is_finite())
        .map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y)))
        .collect();
    let dash = if dash { r#" stroke-dasharray="4 3""# } else { "" };
    let _ = write!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, pts.join(" "));
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 + 14.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, W - MARGIN - 120.0, y - 9.0);
        let _ = write!(out, r#"<text x="{}" y="{y}">{}</text>"#, W - MARGIN - 106.0, escape(name));
    }
}

/// Line chart of several series over a shared x axis, with optional
/// horizontal reference lines (dashed).
pub fn line_chart(title: &str, x: &[f64], series: &[(&str, &[f64])], hlines: &[f64]) -> String {
    let ys = series.iter().flat_map(|(_, s)| s.iter().copied()).chain(hlines.iter().copied());
    let f = Frame::new(x.iter().copied(), ys);
    let mut out = String::new();
    header(&mut out, title, &f);
    for &h in hlines {
        polyline(&mut out, &f, &[f.x0, f.x1], &[h, h], "#888", true);
    }
    for (i, (_, s)) in series.iter().enumerate() {
        polyline(&mut out, &f, x, s, PALETTE[i % PALETTE.len()], false);
    }
    legend(&mut out, &series.iter().map(|s| s.0).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Point estimate with a shaded band.
pub fn band_chart(title: &str, x: &[f64], mid: &[f64], lower: &[f64], upper: &[f64]) -> String {
    let ys = mid.iter().chain(lower).chain(upper).copied().chain([0.0]);
    let f = Frame::new(x.iter().copied(), ys);
    let mut out = String::new();
    header(&mut out, title, &f);
    let mut pts: Vec<String> = x.iter().zip(upper).map(|(a, b)| format!("{:.2},{:.2}", f.px(*a), f.py(*b))).collect();
    pts.extend(x.iter().zip(lower).rev().map(|(a, b)| format!("{:.2},{:.2}", f.px(*a), f.py(*b))));
    let _ = write!(out, r##"<polygon fill="#1f77b4" fill-opacity="0.2" stroke="none" points="{}"/>"##, pts.join(" "));
    polyline(&mut out, &f, &[f.x0, f.x1], &[0.0, 0.0], "#888", true);
    polyline(&mut out, &f, x, mid, PALETTE[0], false);
    out.push_str("</svg>\n");
    out
}

/// Scatter of `(x, y)` points with the line `y = a + b x` and a dashed threshold.
pub fn scatter_with_line(title: &str, points: &[(f64, f64)], line: (f64, f64), threshold: f64) -> String {
    let ys = points.iter().map(|p| p.1).chain([threshold]);
    let f = Frame::new(points.iter().map(|p| p.0), ys);
    let mut out = String::new();
    header(&mut out, title, &f);
    for (x, y) in points {
        let _ = write!(out, r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f77b4" fill-opacity="0.6"/>"##, f.px(*x), f.py(*y));
    }
    let (a, b) = line;
    polyline(&mut out, &f, &[f.x0, f.x1], &[a + b * f.x0, a + b * f.x1], PALETTE[1], false);
    polyline(&mut out, &f, &[f.x0, f.x1], &[threshold, threshold], "#888", true);
    out.push_str("</svg>\n");
    out
}

/// Stacked areas; `layers` are cumulated bottom to top at every x.
pub fn stacked_area(title: &str, x: &[f64], layers: &[(&str, &[f64])]) -> String {
    let f = Frame {
        x0: x.first().copied().unwrap_or(0.0),
        x1: x.last().copied().filter(|&v| v > x[0]).unwrap_or(x[0] + 1.0),
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    header(&mut out, title, &f);
    let mut base = vec![0.0; x.len()];
    for (i, (_, layer)) in layers.iter().enumerate() {
        let top: Vec<f64> = base.iter().zip(layer.iter()).map(|(b, l)| b + l).collect();
        let mut pts: Vec<String> = x.iter().zip(&top).map(|(a, b)| format!("{:.2},{:.2}", f.px(*a), f.py(*b))).collect();
        pts.extend(x.iter().zip(&base).rev().map(|(a, b)| format!("{:.2},{:.2}", f.px(*a), f.py(*b))));
        let _ = write!(out, r#"<polygon fill="{}" fill-opacity="0.8" points="{}"/>"#, PALETTE[i % PALETTE.len()], pts.join(" "));
        base = top;
    }
    legend(&mut out, &layers.iter().map(|l| l.0).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Lays out finished charts from this module in a grid, row-major.
pub fn grid(charts: &[String], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = charts.len().div_ceil(cols).max(1);
    let (w, h) = (W * cols as f64, H * rows as f64);
    let mut out = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    for (i, chart) in charts.iter().enumerate() {
        let (x, y) = (W * (i % cols) as f64, H * (i / cols) as f64);
        // nested <svg> elements accept their own x/y offsets
        let body = chart.trim_end().replacen("<svg ", &format!(r#"<svg x="{x}" y="{y}" "#), 1);
        out.push_str(&body);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let x = [0.0, 1.0, 2.0];
        let a = [0.1, 0.5, 0.2];
        let b = [0.9, 0.5, 0.8];
        for svg in [
            line_chart("t <1>", &x, &[("a", &a), ("b", &b)], &[0.3]),
            band_chart("band", &x, &a, &[0.0, 0.4, 0.1], &[0.2, 0.6, 0.3]),
            scatter_with_line("s", &[(1.0, 0.1), (2.0, 0.2)], (0.0, 0.1), 0.15),
            stacked_area("area", &x, &[("a", &a), ("b", &b)]),
        ] {
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
            assert!(!svg.contains("NaN"));
        }
        assert!(line_chart("t <1>", &x, &[], &[]).contains("t &lt;1&gt;"));

        let g = grid(&[line_chart("a", &x, &[("a", &a)], &[]), line_chart("b", &x, &[("b", &b)], &[])], 1);
        assert_eq!(g.matches("<svg").count(), 3);
        assert!(g.contains(r#"<svg x="0" y="400" "#));
    }
}
