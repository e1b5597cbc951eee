//! Implicit planar Jordan curves `Φ(q) = 0` with analytic derivatives and
//! diagnostics for the critical set `Ω = {q : ∇Φ(q) = 0}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point (or vector) in the output plane.
pub type Point = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("non-finite input point ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("invalid curve parameters: {0}")]
    InvalidParameters(String),
    #[error("critical set is not made of isolated points near ({x:.6}, {y:.6})")]
    Degenerate { x: f64, y: f64 },
    #[error("critical value {value:e} at ({x:.6}, {y:.6}) is too close to zero to have a sign")]
    AmbiguousSign { x: f64, y: f64, value: f64 },
}

/// Axis-aligned box in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        )
    }

    pub fn half_extent(&self) -> Point {
        Point::new(
            0.5 * (self.max[0] - self.min[0]),
            0.5 * (self.max[1] - self.min[1]),
        )
    }

    /// Same center, half-widths multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let c = self.center();
        let h = self.half_extent() * factor;
        Self::new([c.x - h.x, c.y - h.y], [c.x + h.x, c.y + h.y])
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    /// Distance from `p` to the nearest box edge, relative to the box size.
    fn relative_edge_distance(&self, p: &Point) -> f64 {
        let h = self.half_extent();
        let dx = (p.x - self.min[0]).min(self.max[0] - p.x) / h.x;
        let dy = (p.y - self.min[1]).min(self.max[1] - p.y) / h.y;
        dx.min(dy)
    }
}

/// A user supplied scalar field with analytic first and second derivatives.
pub trait CurveField: Send + Sync {
    fn phi(&self, p: &Point) -> f64;
    fn grad(&self, p: &Point) -> Point;
    fn hess(&self, p: &Point) -> Matrix2<f64>;
    /// Bounding box of the zero level set.
    fn bounding_box(&self) -> Aabb;
    fn name(&self) -> &str {
        "custom"
    }
}

#[derive(Clone)]
pub enum CurveShape {
    /// `Φ = |q − c|² − r²`
    Circle { center: Point, radius: f64 },
    /// `Φ = ξ1⁴ + ξ2⁴ − 2a0²(ξ1² − ξ2²) + a0⁴ − b0⁴`
    Cassini { a0: f64, b0: f64 },
    Custom(Arc<dyn CurveField>),
}

impl fmt::Debug for CurveShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveShape::Circle { center, radius } => f
                .debug_struct("Circle")
                .field("center", &(center.x, center.y))
                .field("radius", radius)
                .finish(),
            CurveShape::Cassini { a0, b0 } => f
                .debug_struct("Cassini")
                .field("a0", a0)
                .field("b0", b0)
                .finish(),
            CurveShape::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

/// An implicit Jordan curve together with the search box used for its
/// critical points.
#[derive(Debug, Clone)]
pub struct ImplicitCurve {
    shape: CurveShape,
    domain_box: Aabb,
}

/// Grid resolution used to seed the critical-point search.
pub const CRITICAL_GRID: usize = 101;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 50;
const GRAD_TOL: f64 = 1e-10;
const MERGE_TOL: f64 = 1e-6;
const SIGN_TOL: f64 = 1e-12;

impl ImplicitCurve {
    pub fn circle(center: Point, radius: f64) -> Result<Self, CurveError> {
        if !(radius > 0.0 && radius.is_finite()) || !center.iter().all(|c| c.is_finite()) {
            return Err(CurveError::InvalidParameters(format!(
                "circle radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self::with_default_box(CurveShape::Circle { center, radius }))
    }

    pub fn cassini(a0: f64, b0: f64) -> Result<Self, CurveError> {
        if !(a0 > 0.0 && b0 > a0 && b0.is_finite()) {
            return Err(CurveError::InvalidParameters(format!(
                "cassini oval requires b0 > a0 > 0, got a0={a0}, b0={b0}"
            )));
        }
        Ok(Self::with_default_box(CurveShape::Cassini { a0, b0 }))
    }

    pub fn custom(field: Arc<dyn CurveField>) -> Self {
        Self::with_default_box(CurveShape::Custom(field))
    }

    fn with_default_box(shape: CurveShape) -> Self {
        let mut curve = Self {
            shape,
            domain_box: Aabb::new([0.0; 2], [0.0; 2]),
        };
        curve.domain_box = curve.bounding_box().scaled(1.5);
        curve
    }

    /// Replaces the critical-point search box.
    pub fn with_domain_box(mut self, domain_box: Aabb) -> Self {
        self.domain_box = domain_box;
        self
    }

    pub fn shape(&self) -> &CurveShape {
        &self.shape
    }

    pub fn domain_box(&self) -> Aabb {
        self.domain_box
    }

    /// Tight bounding box of the zero level set.
    pub fn bounding_box(&self) -> Aabb {
        match &self.shape {
            CurveShape::Circle { center, radius } => Aabb::new(
                [center.x - radius, center.y - radius],
                [center.x + radius, center.y + radius],
            ),
            CurveShape::Cassini { a0, b0 } => {
                let (a2, b4) = (a0 * a0, b0.powi(4));
                let xmax = (a2 + b0 * b0).sqrt();
                let ymax = ((a2 * a2 + b4).sqrt() - a2).sqrt();
                Aabb::new([-xmax, -ymax], [xmax, ymax])
            }
            CurveShape::Custom(c) => c.bounding_box(),
        }
    }

    /// Characteristic length: the larger half-extent of the bounding box,
    /// measured from the box center.
    pub fn scale(&self) -> f64 {
        let b = self.bounding_box();
        let h = b.half_extent();
        h.x.max(h.y)
    }

    #[inline]
    pub fn phi(&self, p: &Point) -> f64 {
        match &self.shape {
            CurveShape::Circle { center, radius } => (p - center).norm_squared() - radius * radius,
            CurveShape::Cassini { a0, b0 } => {
                let (x2, y2, a2) = (p.x * p.x, p.y * p.y, a0 * a0);
                x2 * x2 + y2 * y2 - 2.0 * a2 * (x2 - y2) + a2 * a2 - b0.powi(4)
            }
            CurveShape::Custom(c) => c.phi(p),
        }
    }

    #[inline]
    pub fn grad(&self, p: &Point) -> Point {
        match &self.shape {
            CurveShape::Circle { center, .. } => 2.0 * (p - center),
            CurveShape::Cassini { a0, .. } => {
                let a2 = a0 * a0;
                Point::new(
                    4.0 * p.x * (p.x * p.x - a2),
                    4.0 * p.y * (p.y * p.y + a2),
                )
            }
            CurveShape::Custom(c) => c.grad(p),
        }
    }

    #[inline]
    pub fn hess(&self, p: &Point) -> Matrix2<f64> {
        match &self.shape {
            CurveShape::Circle { .. } => Matrix2::identity() * 2.0,
            CurveShape::Cassini { a0, .. } => {
                let a2 = a0 * a0;
                Matrix2::new(
                    12.0 * p.x * p.x - 4.0 * a2,
                    0.0,
                    0.0,
                    12.0 * p.y * p.y + 4.0 * a2,
                )
            }
            CurveShape::Custom(c) => c.hess(p),
        }
    }

    /// Checked evaluation of `Φ`.
    pub fn eval_phi(&self, p: &Point) -> Result<f64, CurveError> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(CurveError::NonFinite(p.x, p.y));
        }
        Ok(self.phi(p))
    }

    /// All isolated zeros of `∇Φ` inside the domain box.
    ///
    /// A dense grid of seeds is refined by damped Newton on `∇Φ = 0`;
    /// converged points closer than `1e-6` are merged. If neighbouring
    /// seeds converge to distinct points the critical set contains a
    /// continuum and [`CurveError::Degenerate`] is returned.
    pub fn find_critical_points(&self) -> Result<Vec<Point>, CurveError> {
        let b = self.domain_box;
        let n = CRITICAL_GRID;
        let dx = (b.max[0] - b.min[0]) / (n - 1) as f64;
        let dy = (b.max[1] - b.min[1]) / (n - 1) as f64;
        let spacing = dx.hypot(dy);

        let mut found: Vec<Point> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let seed = Point::new(b.min[0] + i as f64 * dx, b.min[1] + j as f64 * dy);
                let Some(p) = self.newton_critical(seed) else {
                    continue;
                };
                if !b.contains(&p) {
                    continue;
                }
                if found.iter().all(|q| (q - p).norm() > MERGE_TOL) {
                    found.push(p);
                }
            }
        }

        // Distinct critical points within a couple of grid cells of each
        // other mean Newton is landing on a critical curve.
        for (i, p) in found.iter().enumerate() {
            for q in &found[i + 1..] {
                if (p - q).norm() < 2.0 * spacing {
                    return Err(CurveError::Degenerate { x: p.x, y: p.y });
                }
            }
        }

        found.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        Ok(found)
    }

    fn newton_critical(&self, seed: Point) -> Option<Point> {
        let mut p = seed;
        let mut g = self.grad(&p);
        for _ in 0..NEWTON_MAX_ITERS {
            let gn = g.norm();
            if gn < GRAD_TOL {
                return Some(p);
            }
            let step = self.hess(&p).lu().solve(&g)?;
            if !step.iter().all(|s| s.is_finite()) {
                return None;
            }
            // Backtrack on |∇Φ| so far seeds do not get thrown out of the box.
            let mut lambda = 1.0;
            loop {
                let cand = p - step * lambda;
                let gc = self.grad(&cand);
                if gc.norm() < gn || lambda < 1e-4 {
                    p = cand;
                    g = gc;
                    break;
                }
                lambda *= 0.5;
            }
            if step.norm() * lambda < NEWTON_TOL {
                break;
            }
        }
        (g.norm() < GRAD_TOL).then_some(p)
    }

    /// `n` points on the curve, one per ray from the bounding-box center at
    /// evenly spaced angles. Each point is the outermost sign change of `Φ`
    /// along its ray, refined by bisection.
    pub fn sample_on_curve(&self, n: usize) -> Vec<Point> {
        let b = self.bounding_box();
        let c = b.center();
        let reach = 2.0 * b.half_extent().norm();
        let outside = self.phi(&(c + Point::new(reach, 0.0))).signum();
        let march = 400;
        (0..n)
            .filter_map(|i| {
                let th = i as f64 * std::f64::consts::TAU / n as f64;
                let dir = Point::new(th.cos(), th.sin());
                let at = |r: f64| self.phi(&(c + dir * r));
                let mut hi = reach;
                let mut lo = reach;
                for k in (0..march).rev() {
                    let r = reach * k as f64 / march as f64;
                    if at(r).signum() != outside {
                        lo = r;
                        break;
                    }
                    hi = r;
                }
                if lo == reach {
                    return None;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if at(mid).signum() == outside {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= f64::EPSILON * hi {
                        break;
                    }
                }
                Some(c + dir * (0.5 * (lo + hi)))
            })
            .collect()
    }

    /// Checks that the critical values of `Φ` share one strict sign.
    pub fn check_assumption1(&self) -> Result<Assumption1Report, CurveError> {
        let points = match self.find_critical_points() {
            Ok(points) => points,
            Err(CurveError::Degenerate { x, y }) => {
                return Ok(Assumption1Report {
                    holds: false,
                    isolated: false,
                    points: vec![Point::new(x, y)],
                    values: vec![self.phi(&Point::new(x, y))],
                    suspect: Vec::new(),
                })
            }
            Err(e) => return Err(e),
        };
        let mut values = Vec::with_capacity(points.len());
        for p in &points {
            let value = self.phi(p);
            if value.abs() < SIGN_TOL {
                return Err(CurveError::AmbiguousSign { x: p.x, y: p.y, value });
            }
            values.push(value);
        }
        let same_sign = values.iter().all(|v| *v < 0.0) || values.iter().all(|v| *v > 0.0);
        let suspect = points
            .iter()
            .filter(|p| self.domain_box.relative_edge_distance(p) < 1e-3)
            .copied()
            .collect();
        Ok(Assumption1Report {
            holds: same_sign && !points.is_empty(),
            isolated: true,
            points,
            values,
            suspect,
        })
    }
}

/// Outcome of the critical-set sign check.
#[derive(Debug, Clone, PartialEq)]
pub struct Assumption1Report {
    pub holds: bool,
    pub isolated: bool,
    pub points: Vec<Point>,
    /// `Φ` evaluated at each entry of `points`.
    pub values: Vec<f64>,
    /// Critical points found on the search-box boundary.
    pub suspect: Vec<Point>,
}
