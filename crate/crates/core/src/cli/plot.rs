// SPDX-License-Identifier: MIT OR Apache-2.0

//! Static SVG line charts. Output depends only on the input numbers.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const PAD_LEFT: f64 = 64.0;
const PAD_RIGHT: f64 = 16.0;
const PAD_TOP: f64 = 32.0;
const PAD_BOTTOM: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One polyline.
pub struct Line<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// A chart with optional horizontal reference lines and vertical markers.
#[derive(Default)]
pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub lines: Vec<Line<'a>>,
    pub hlines: Vec<f64>,
    pub vlines: Vec<f64>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl Chart<'_> {
    pub fn to_svg(&self) -> String {
        let pts = || self.lines.iter().flat_map(|l| l.points.iter());
        let (x0, x1) = range(pts().map(|p| p.0).chain(self.vlines.iter().copied()));
        let (y0, y1) = range(pts().map(|p| p.1).chain(self.hlines.iter().copied()));
        let pw = WIDTH - PAD_LEFT - PAD_RIGHT;
        let ph = HEIGHT - PAD_TOP - PAD_BOTTOM;
        let sx = |x: f64| PAD_LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| PAD_TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            WIDTH / 2.0,
            escape(self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{PAD_LEFT}" y="{PAD_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                HEIGHT - PAD_BOTTOM + 14.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                PAD_LEFT - 4.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            PAD_LEFT + pw / 2.0,
            HEIGHT - 6.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            PAD_TOP + ph / 2.0,
            PAD_TOP + ph / 2.0,
            escape(self.y_label)
        );
        for &v in &self.vlines {
            let _ = writeln!(
                s,
                r##"<line x1="{0:.2}" x2="{0:.2}" y1="{PAD_TOP}" y2="{1:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
                sx(v),
                PAD_TOP + ph
            );
        }
        for &h in &self.hlines {
            let _ = writeln!(
                s,
                r##"<line x1="{PAD_LEFT}" x2="{0:.2}" y1="{1:.2}" y2="{1:.2}" stroke="#ff7f0e" stroke-dasharray="6 3"/>"##,
                PAD_LEFT + pw,
                sy(h)
            );
        }
        for (i, line) in self.lines.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let path: Vec<String> = line
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                path.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
                PAD_LEFT + 8.0,
                PAD_TOP + 14.0 + 14.0 * i as f64,
                escape(line.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e5) {
        format!("{:.3}", v)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_lines_and_markers() {
        let chart = Chart {
            title: "a < b",
            lines: vec![Line {
                label: "trace",
                points: vec![(0.0, 0.0), (1.0, 2.0)],
            }],
            hlines: vec![1.0],
            vlines: vec![0.5],
            ..Chart::default()
        };
        let svg = chart.to_svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<line ").count(), 2);
        assert_eq!(svg, chart.to_svg());
    }

    #[test]
    fn ticks() {
        assert_eq!(tick(0.5), "0.5");
        assert_eq!(tick(0.0), "0");
        assert_eq!(tick(120.0), "120");
        assert_eq!(tick(1e-5), "1.00e-5");
    }
}
