//! Minimal static SVG emission for the boundary plot and the feasibility map.

use std::fmt::Write;

use regime_extract::model::{Feasibility, RasterCell};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

/// Linear map of a data interval onto a pixel interval.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new((lo, hi): (f64, f64), px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        };
        Self {
            lo,
            hi,
            px_lo,
            px_hi,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#,
        WIDTH / 2.0
    );
}

fn frame(out: &mut String, x: Axis, y: Axis, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for (v, anchor) in [(x.lo, "start"), (x.hi, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{v:.4}</text>"#,
            x.map(v),
            HEIGHT - MARGIN + 16.0
        );
    }
    for v in [y.lo, y.hi] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#,
            MARGIN - 4.0,
            y.map(v) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{y_label}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
}

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

/// Line plot of several series over a shared x-range.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let x = Axis::new((x_lo, x_hi), MARGIN, WIDTH - MARGIN);
    let y = Axis::new((y_lo, y_hi), HEIGHT - MARGIN, MARGIN);

    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, x, y, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(px, py)| format!("{:.2},{:.2}", x.map(px), y.map(py)))
            .collect();
        let dash = if s.dashed {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            s.color,
            path.join(" ")
        );
        let ly = MARGIN + 16.0 + 16.0 * k as f64;
        let lx = WIDTH - MARGIN - 150.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5"{dash}/>"#,
            lx + 24.0,
            s.color
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Feasibility map: one rectangle per cell, grey where feasible.
pub fn raster(cells: &[RasterCell], steps: usize, s1: (f64, f64), s2: (f64, f64)) -> String {
    let x = Axis::new(s1, MARGIN, WIDTH - MARGIN);
    let y = Axis::new(s2, HEIGHT - MARGIN, MARGIN);
    let cell_w = (x.map(x.hi) - x.map(x.lo)) / steps as f64;
    let cell_h = (y.map(y.lo) - y.map(y.hi)) / steps as f64;

    let mut out = String::new();
    header(&mut out, "Feasible volatility pairs");
    for (k, c) in cells.iter().enumerate() {
        let fill = match c.status {
            Feasibility::Feasible => "#9e9e9e",
            Feasibility::CaseB => "#1f77b4",
            Feasibility::Infeasible => continue,
        };
        let (row, col) = (k / steps, k % steps);
        let _ = writeln!(
            out,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}"/>"#,
            MARGIN + row as f64 * cell_w,
            HEIGHT - MARGIN - (col + 1) as f64 * cell_h,
            cell_w,
            cell_h
        );
    }
    frame(&mut out, x, y, "sigma1", "sigma2");
    out.push_str("</svg>\n");
    out
}
