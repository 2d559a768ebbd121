//! Self-contained SVG plot of a rank sweep.

use std::fmt::Write;

use hmx_core::inverse::{root_exponential_abscissa, Sweep, FIT_FLOOR};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: &[(f64, f64)], style: &str) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> =
        pts.iter().map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y))).collect();
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" "));
}

/// log₁₀ of the relative error against r, with both fitted models overlaid.
pub fn sweep_svg(sweep: &Sweep, title: &str) -> String {
    let data: Vec<(f64, f64)> = sweep
        .rows
        .iter()
        .filter(|row| row.rel_err > FIT_FLOOR)
        .map(|row| (row.r as f64, row.rel_err.log10()))
        .collect();
    let r_max = sweep.rows.iter().map(|row| row.r).max().unwrap_or(1) as f64;
    let r_min = sweep.rows.iter().map(|row| row.r).min().unwrap_or(1) as f64;
    let samples: Vec<f64> = (0..=100).map(|k| r_min + (r_max - r_min) * k as f64 / 100.0).collect();
    let ln10 = std::f64::consts::LN_10;
    let root: Vec<(f64, f64)> = sweep
        .fit
        .root_exponential
        .map(|f| samples.iter().map(|r| (*r, (f.log_c - f.rate * root_exponential_abscissa(*r)) / ln10)).collect())
        .unwrap_or_default();
    let expo: Vec<(f64, f64)> = sweep
        .fit
        .exponential
        .map(|f| samples.iter().map(|r| (*r, (f.log_c + r * f.rate.ln()) / ln10)).collect())
        .unwrap_or_default();

    let (lo, hi) = data
        .iter()
        .map(|p| p.1)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (y0, y1) = if lo.is_finite() { (lo.floor().min(hi.ceil() - 1.0), hi.ceil()) } else { (-16.0, 0.0) };
    let frame = Frame { x0: 0.0, x1: r_max.max(1.0), y0, y1 };
    let clip = |pts: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        pts.into_iter().filter(|(_, y)| *y >= y0 && *y <= y1).collect()
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="20">{}</text>"#, escape(title));
    let (ax0, ay0, ax1, ay1) = (frame.px(frame.x0), frame.py(y0), frame.px(frame.x1), frame.py(y1));
    let _ = writeln!(s, r#"<rect x="{ax0:.2}" y="{ay1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, ax1 - ax0, ay0 - ay1);
    let step = ((y1 - y0) / 8.0).ceil().max(1.0);
    let mut y = y0;
    while y <= y1 + 1e-9 {
        let py = frame.py(y);
        let _ = writeln!(s, r##"<line x1="{ax0:.2}" y1="{py:.2}" x2="{ax1:.2}" y2="{py:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#, ax0 - 6.0, py + 4.0, y as i64);
        y += step;
    }
    let xstep = (r_max / 10.0).ceil().max(1.0);
    let mut x = 0.0;
    while x <= frame.x1 + 1e-9 {
        let px = frame.px(x);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{ay0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, ay0 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, ay0 + 18.0, x as i64);
        x += xstep;
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">rank r</text>"#, (ax0 + ax1) / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">relative spectral error</text>"#,
        (ay0 + ay1) / 2.0
    );

    polyline(&mut s, &frame, &clip(root), r##"stroke="#d62728" stroke-dasharray="6 4""##);
    polyline(&mut s, &frame, &clip(expo), r##"stroke="#2ca02c" stroke-dasharray="2 3""##);
    polyline(&mut s, &frame, &data, r##"stroke="#1f77b4""##);
    for (x, y) in &data {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##, frame.px(*x), frame.py(*y));
    }
    if data.is_empty() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">all errors at round-off level</text>"#,
            (ax0 + ax1) / 2.0,
            (ay0 + ay1) / 2.0
        );
    }
    let lx = W - RIGHT + 10.0;
    let legend = [
        ("#1f77b4", "", "measured"),
        ("#d62728", r#" stroke-dasharray="6 4""#, "C exp(-b r^1/4/ln(r+2))"),
        ("#2ca02c", r#" stroke-dasharray="2 3""#, "C q^r"),
    ];
    for (k, (color, dash, label)) in legend.iter().enumerate() {
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}"{dash}/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{}</text>"#, lx + 24.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
