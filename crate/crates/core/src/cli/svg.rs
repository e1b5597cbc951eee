//! Dependency-free SVG plots: zero-level contours by marching squares,
//! output-plane trajectories and time-series panels.

use std::fmt::Write as _;

use crate::curves::{Aabb, Point};

pub type Segment = (Point, Point);

/// Zero level set of `f` over `bbox` on an `n × n` vertex grid.
///
/// Saddle cells are split using the sign at the cell centre.
pub fn marching_squares<F: Fn(&Point) -> f64>(f: F, bbox: &Aabb, n: usize) -> Vec<Segment> {
    let n = n.max(2);
    let dx = (bbox.max[0] - bbox.min[0]) / (n - 1) as f64;
    let dy = (bbox.max[1] - bbox.min[1]) / (n - 1) as f64;
    let at = |i: usize, j: usize| Point::new(bbox.min[0] + i as f64 * dx, bbox.min[1] + j as f64 * dy);
    let values: Vec<f64> = (0..n * n).map(|k| f(&at(k % n, k / n))).collect();
    let v = |i: usize, j: usize| values[j * n + i];

    let lerp = |a: Point, fa: f64, b: Point, fb: f64| {
        let s = if fa == fb { 0.5 } else { fa / (fa - fb) };
        a + (b - a) * s.clamp(0.0, 1.0)
    };

    let mut out = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            // corners counter-clockwise from bottom-left
            let p = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let f = [v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)];
            let case = f
                .iter()
                .enumerate()
                .fold(0u8, |c, (k, x)| c | (u8::from(*x > 0.0) << k));
            if case == 0 || case == 15 {
                continue;
            }
            let edge = |e: usize| lerp(p[e], f[e], p[(e + 1) % 4], f[(e + 1) % 4]);
            let pairs: &[(usize, usize)] = match case {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(2, 3)],
                5 | 10 => {
                    let center = f.iter().sum::<f64>() / 4.0;
                    let joined = (center > 0.0) == (case == 5);
                    if joined {
                        &[(3, 2), (0, 1)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                _ => unreachable!(),
            };
            out.extend(pairs.iter().map(|&(a, b)| (edge(a), edge(b))));
        }
    }
    out
}

/// Axis-aligned data range with a 10 % margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let (lo, hi) = values
            .into_iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            return Self { lo: -1.0, hi: 1.0 };
        }
        let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
        Self { lo: lo - 0.1 * span, hi: hi + 0.1 * span }
    }
}

/// One rectangular panel in figure pixels.
#[derive(Debug, Clone, Copy)]
pub struct Panel {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub xr: Range,
    pub yr: Range,
}

impl Panel {
    pub fn map(&self, px: f64, py: f64) -> (f64, f64) {
        let u = (px - self.xr.lo) / (self.xr.hi - self.xr.lo);
        let v = (py - self.yr.lo) / (self.yr.hi - self.yr.lo);
        (self.x + u * self.w, self.y + (1.0 - v) * self.h)
    }
}

/// An SVG document under construction.
pub struct Figure {
    width: f64,
    height: f64,
    body: String,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

impl Figure {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height, body: String::new() }
    }

    pub fn frame(&mut self, panel: &Panel, title: &str, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##,
            panel.x, panel.y, panel.w, panel.h
        );
        self.text(panel.x + panel.w / 2.0, panel.y - 8.0, "middle", title);
        self.text(panel.x + panel.w / 2.0, panel.y + panel.h + 30.0, "middle", xlabel);
        let _ = writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
            panel.x - 40.0,
            panel.y + panel.h / 2.0,
            panel.x - 40.0,
            panel.y + panel.h / 2.0,
            escape(ylabel)
        );
        for (v, anchor_x) in [(panel.xr.lo, panel.x), (panel.xr.hi, panel.x + panel.w)] {
            self.text(anchor_x, panel.y + panel.h + 14.0, "middle", &tick(v));
        }
        for (v, anchor_y) in [(panel.yr.lo, panel.y + panel.h), (panel.yr.hi, panel.y)] {
            self.text(panel.x - 4.0, anchor_y + 4.0, "end", &tick(v));
        }
    }

    pub fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="11" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    pub fn polyline(&mut self, panel: &Panel, points: &[(f64, f64)], stroke: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        // drop vertices closer than half a pixel to the last one kept
        let mut d = String::with_capacity(points.len().min(4096) * 16);
        let mut last: Option<(f64, f64)> = None;
        for (k, (px, py)) in points.iter().enumerate() {
            let (x, y) = panel.map(*px, *py);
            let is_last = k + 1 == points.len();
            if let Some((lx, ly)) = last {
                if !is_last && (x - lx).hypot(y - ly) < 0.5 {
                    continue;
                }
            }
            let _ = write!(d, "{}{x:.2},{y:.2}", if last.is_none() { "M" } else { " L" });
            last = Some((x, y));
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    pub fn segments(&mut self, panel: &Panel, segs: &[Segment], stroke: &str, width: f64) {
        if segs.is_empty() {
            return;
        }
        let mut d = String::with_capacity(segs.len() * 32);
        for (a, b) in segs {
            let (x0, y0) = panel.map(a.x, a.y);
            let (x1, y1) = panel.map(b.x, b.y);
            let _ = write!(d, "M{x0:.2},{y0:.2} L{x1:.2},{y1:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            d.trim_end()
        );
    }

    pub fn marker(&mut self, panel: &Panel, p: (f64, f64), stroke: &str, filled: bool) {
        let (x, y) = panel.map(p.0, p.1);
        let fill = if filled { stroke } else { "white" };
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{fill}" stroke="{stroke}" stroke-width="1.5"/>"#
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
