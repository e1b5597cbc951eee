//! CSV, JSON and SVG artifacts. Plot builders only read trajectory data.

use std::fmt::Write as _;

use serde::Serialize;

use super::config::Scenario;
use super::svg::{color, marching_squares, Figure, Panel, Range};
use crate::curves::{Aabb, ImplicitCurve, Point};
use crate::plants::{wrap_angle, PlantKind};
use crate::sim::{MetricsReport, Trajectory, TrajectoryRow};
use crate::target::TargetTrajectory;

const CONTOUR_GRID: usize = 201;

/// `#`-prefixed echo of the full scenario plus any extra `key = value` lines.
pub fn header_block(scenario: &Scenario, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    for line in scenario.to_toml().lines() {
        let _ = writeln!(out, "# {line}");
    }
    for (k, v) in extra {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out
}

/// Shortest round-trip text; scientific outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn heading(plant: PlantKind, q3: f64) -> f64 {
    match plant {
        PlantKind::Vessel => wrap_angle(q3),
        PlantKind::Lti => q3,
    }
}

/// Trajectory table; the vessel heading is wrapped to `(−π, π]`.
pub fn trajectory_csv(header: &str, traj: &Trajectory) -> String {
    let with_theta = traj.rows.first().is_some_and(|r| r.theta.is_some());
    let with_k = traj.rows.first().is_some_and(|r| r.gain_k.is_some());
    let mut out = String::with_capacity(header.len() + traj.rows.len() * 320);
    out.push_str(header);
    out.push_str("t,q1,q2,q3,p1,p2,p3,qy1,qy2,qy1_dot,qy2_dot,z1,z2,phi,u1,u2");
    if with_theta {
        out.push_str(",theta1,theta2");
    }
    if with_k {
        out.push_str(",K");
    }
    out.push_str(",qn_dot\n");
    for r in &traj.rows {
        let q3 = heading(traj.plant, r.q[2]);
        let mut cols = vec![
            r.t, r.q[0], r.q[1], q3, r.p[0], r.p[1], r.p[2], r.qy[0], r.qy[1], r.qy_dot[0], r.qy_dot[1], r.z[0],
            r.z[1], r.phi, r.u[0], r.u[1],
        ];
        if with_theta {
            cols.extend(r.theta.unwrap_or([f64::NAN; 2]));
        }
        if with_k {
            cols.push(r.gain_k.unwrap_or(f64::NAN));
        }
        cols.push(r.qn_dot);
        let line: Vec<String> = cols.into_iter().map(num).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct RunMetrics<'a> {
    pub scenario: &'a str,
    pub controller: &'a str,
    pub gains: Vec<(&'static str, f64)>,
    pub tol: f64,
    #[serde(flatten)]
    pub metrics: &'a MetricsReport,
}

/// Square data window holding every point, 10 % margin.
fn square_window(points: impl Iterator<Item = Point>, extra: &Aabb) -> (Range, Range) {
    let pts: Vec<Point> = points.chain([Point::from(extra.min), Point::from(extra.max)]).collect();
    let xr = Range::of(pts.iter().map(|p| p.x));
    let yr = Range::of(pts.iter().map(|p| p.y));
    let half = 0.5 * (xr.hi - xr.lo).max(yr.hi - yr.lo);
    let (cx, cy) = (0.5 * (xr.lo + xr.hi), 0.5 * (yr.lo + yr.hi));
    (Range { lo: cx - half, hi: cx + half }, Range { lo: cy - half, hi: cy + half })
}

fn contour(curve: &ImplicitCurve, xr: Range, yr: Range) -> Vec<(Point, Point)> {
    let window = Aabb::new([xr.lo, yr.lo], [xr.hi, yr.hi]);
    marching_squares(|p| curve.phi(p), &window, CONTOUR_GRID)
}

fn log_series(rows: &[TrajectoryRow], f: impl Fn(&TrajectoryRow) -> f64) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.t, f(r).abs().max(1e-16).log10())).collect()
}

/// Output plane with the path, plus `log10|Φ|`, `log10|z|` and `q3` panels.
pub fn closed_loop_svg(title: &str, curve: &ImplicitCurve, traj: &Trajectory) -> String {
    let rows = &traj.rows;
    let mut fig = Figure::new(1000.0, 600.0);
    fig.text(500.0, 18.0, "middle", title);

    let (xr, yr) = square_window(rows.iter().map(|r| Point::new(r.qy[0], r.qy[1])), &curve.bounding_box());
    let plane = Panel { x: 80.0, y: 50.0, w: 440.0, h: 440.0, xr, yr };
    fig.frame(&plane, "output plane", "q_y1", "q_y2");
    fig.segments(&plane, &contour(curve, xr, yr), "#888", 1.5);
    let path: Vec<(f64, f64)> = rows.iter().map(|r| (r.qy[0], r.qy[1])).collect();
    fig.polyline(&plane, &path, color(0), 1.2);
    if let Some(first) = path.first() {
        fig.marker(&plane, *first, color(1), true);
    }

    let tr = Range::of(rows.iter().map(|r| r.t));
    let series: [(&str, Vec<(f64, f64)>); 3] = [
        ("log10 |Φ|", log_series(rows, |r| r.phi)),
        ("log10 |z|", log_series(rows, TrajectoryRow::z_norm)),
        ("q3", rows.iter().map(|r| (r.t, heading(traj.plant, r.q[2]))).collect()),
    ];
    for (k, (name, pts)) in series.iter().enumerate() {
        let yr = Range::of(pts.iter().map(|p| p.1));
        let panel = Panel { x: 620.0, y: 50.0 + 180.0 * k as f64, w: 340.0, h: 120.0, xr: tr, yr };
        fig.frame(&panel, name, "t [s]", "");
        fig.polyline(&panel, pts, color(k + 2), 1.2);
    }
    fig.finish()
}

/// Seed trajectories with the path and the critical points.
pub fn portrait_svg(title: &str, curve: &ImplicitCurve, trajs: &[TargetTrajectory], critical: &[Point]) -> String {
    let mut fig = Figure::new(700.0, 640.0);
    fig.text(350.0, 18.0, "middle", title);
    let (xr, yr) = square_window(trajs.iter().flat_map(|t| t.xi.iter().copied()), &curve.bounding_box());
    let panel = Panel { x: 80.0, y: 50.0, w: 540.0, h: 540.0, xr, yr };
    fig.frame(&panel, "phase portrait", "ξ1", "ξ2");
    for (k, t) in trajs.iter().enumerate() {
        let pts: Vec<(f64, f64)> = t.xi.iter().map(|p| (p.x, p.y)).collect();
        fig.polyline(&panel, &pts, color(k), 0.8);
        if let Some(first) = pts.first() {
            fig.marker(&panel, *first, color(k), true);
        }
    }
    fig.segments(&panel, &contour(curve, xr, yr), "black", 2.0);
    for c in critical {
        fig.marker(&panel, (c.x, c.y), "#d62728", false);
    }
    fig.finish()
}

/// `seed_id,t,xi1,xi2,phi`, every `stride`-th sample plus the last.
pub fn portrait_csv(header: &str, curve: &ImplicitCurve, trajs: &[(usize, TargetTrajectory)], stride: usize) -> String {
    let mut out = String::from(header);
    out.push_str("seed_id,t,xi1,xi2,phi\n");
    for (id, t) in trajs {
        let n = t.len();
        for k in (0..n).filter(|k| k % stride == 0 || k + 1 == n) {
            let _ = writeln!(
                out,
                "{id},{},{},{},{}",
                num(t.t[k]),
                num(t.xi[k].x),
                num(t.xi[k].y),
                num(curve.phi(&t.xi[k]))
            );
        }
    }
    out
}
