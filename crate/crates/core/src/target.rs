//! The planar target oscillator `ξ̇ = F(ξ,x)∇V_d(ξ)` whose attractive limit
//! cycle is the zero level set of `Φ`.
//!
//! With `V_d = ½Φ²` and `F = 𝒥 − ℛ`, where `𝒥` is skew with entries
//! `±w/Φ`, the vector field simplifies to
//!
//! ```text
//! α(ξ, x) = w(ξ, x)·J₀·∇Φ(ξ) − ℛ(ξ)·Φ(ξ)·∇Φ(ξ),   J₀ = [[0, 1], [−1, 0]]
//! ```
//!
//! which is what every function here evaluates. The `1/Φ` in `𝒥` never
//! appears, so the field is smooth on the curve itself.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use rayon::prelude::*;
use thiserror::Error;

use crate::curves::{CurveError, ImplicitCurve, Point};
use crate::sim::rk4_step;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error("damping matrix is not positive definite at ({x}, {y})")]
    InvalidDamping { x: f64, y: f64 },
    #[error("speed w vanishes on the curve at ({x}, {y})")]
    ZeroSpeed { x: f64, y: f64 },
    #[error("operation requires constant speed and damping")]
    NotConstant,
    #[error("invalid integration settings: {0}")]
    InvalidStep(String),
    #[error("no seeds given")]
    NoSeeds,
    #[error("trajectory left the divergence box at t = {t}")]
    Diverged { t: f64 },
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// `J₀ = [[0, 1], [−1, 0]]`.
pub fn j0() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -1.0, 0.0)
}

type DampingFn = dyn Fn(&Point) -> Matrix2<f64> + Send + Sync;
type SpeedFn = dyn Fn(&Point, Option<&[f64]>) -> f64 + Send + Sync;

/// The damping matrix `ℛ(ξ)`.
#[derive(Clone)]
pub enum Damping {
    Constant(Matrix2<f64>),
    Field(Arc<DampingFn>),
}

/// The speed mapping `w(ξ, x)`. `x` is the flattened plant state `col(q, p)`
/// when the oscillator runs inside a closed loop.
#[derive(Clone)]
pub enum Speed {
    Constant(f64),
    Field(Arc<SpeedFn>),
}

impl fmt::Debug for Damping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Damping::Constant(m) => write!(f, "Constant({m:?})"),
            Damping::Field(_) => f.write_str("Field(..)"),
        }
    }
}

impl fmt::Debug for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speed::Constant(w) => write!(f, "Constant({w})"),
            Speed::Field(_) => f.write_str("Field(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TargetSpec {
    curve: ImplicitCurve,
    damping: Damping,
    speed: Speed,
}

fn is_spd(m: &Matrix2<f64>) -> bool {
    let sym = (m + m.transpose()) * 0.5;
    (m - m.transpose()).norm() <= 1e-12 * m.norm().max(1.0)
        && sym.m11 > 0.0
        && sym.determinant() > 0.0
}

/// Points sampled on the curve used for the `w ≠ 0` check.
const SPEED_SAMPLES: usize = 200;

impl TargetSpec {
    /// Oscillator with `w = 1` and `ℛ = I₂`.
    pub fn new(curve: ImplicitCurve) -> Self {
        Self {
            curve,
            damping: Damping::Constant(Matrix2::identity()),
            speed: Speed::Constant(1.0),
        }
    }

    pub fn with_speed(mut self, w: f64) -> Result<Self, TargetError> {
        self.speed = Speed::Constant(w);
        self.validate()?;
        Ok(self)
    }

    pub fn with_damping(mut self, damping: Matrix2<f64>) -> Result<Self, TargetError> {
        self.damping = Damping::Constant(damping);
        self.validate()?;
        Ok(self)
    }

    /// Shorthand for `ℛ = r·I₂`.
    pub fn with_scalar_damping(self, r: f64) -> Result<Self, TargetError> {
        self.with_damping(Matrix2::identity() * r)
    }

    pub fn with_speed_field<F>(mut self, w: F) -> Result<Self, TargetError>
    where
        F: Fn(&Point, Option<&[f64]>) -> f64 + Send + Sync + 'static,
    {
        self.speed = Speed::Field(Arc::new(w));
        self.validate()?;
        Ok(self)
    }

    pub fn with_damping_field<F>(mut self, r: F) -> Result<Self, TargetError>
    where
        F: Fn(&Point) -> Matrix2<f64> + Send + Sync + 'static,
    {
        self.damping = Damping::Field(Arc::new(r));
        self.validate()?;
        Ok(self)
    }

    /// Checks that `ℛ` is positive definite on a grid over the domain box
    /// and that `w` does not vanish on sampled curve points.
    pub fn validate(&self) -> Result<(), TargetError> {
        match &self.damping {
            Damping::Constant(m) => {
                if !is_spd(m) {
                    return Err(TargetError::InvalidDamping { x: f64::NAN, y: f64::NAN });
                }
            }
            Damping::Field(r) => {
                let b = self.curve.domain_box();
                for i in 0..=20 {
                    for j in 0..=20 {
                        let p = Point::new(
                            b.min[0] + (b.max[0] - b.min[0]) * i as f64 / 20.0,
                            b.min[1] + (b.max[1] - b.min[1]) * j as f64 / 20.0,
                        );
                        if !is_spd(&r(&p)) {
                            return Err(TargetError::InvalidDamping { x: p.x, y: p.y });
                        }
                    }
                }
            }
        }
        match &self.speed {
            Speed::Constant(w) => {
                if *w == 0.0 || !w.is_finite() {
                    return Err(TargetError::ZeroSpeed { x: f64::NAN, y: f64::NAN });
                }
            }
            Speed::Field(w) => {
                for p in self.curve.sample_on_curve(SPEED_SAMPLES) {
                    if w(&p, None) == 0.0 {
                        return Err(TargetError::ZeroSpeed { x: p.x, y: p.y });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn curve(&self) -> &ImplicitCurve {
        &self.curve
    }

    pub fn damping_at(&self, xi: &Point) -> Matrix2<f64> {
        match &self.damping {
            Damping::Constant(m) => *m,
            Damping::Field(r) => r(xi),
        }
    }

    pub fn speed_at(&self, xi: &Point, x: Option<&[f64]>) -> f64 {
        match &self.speed {
            Speed::Constant(w) => *w,
            Speed::Field(w) => w(xi, x),
        }
    }

    /// `(w, ℛ)` when both are constant.
    pub fn constant_gains(&self) -> Option<(f64, Matrix2<f64>)> {
        match (&self.speed, &self.damping) {
            (Speed::Constant(w), Damping::Constant(r)) => Some((*w, *r)),
            _ => None,
        }
    }

    /// `V_d(ξ) = ½Φ(ξ)²`.
    pub fn vd(&self, xi: &Point) -> f64 {
        let phi = self.curve.phi(xi);
        0.5 * phi * phi
    }

    /// `∇V_d(ξ) = Φ(ξ)∇Φ(ξ)`.
    pub fn grad_vd(&self, xi: &Point) -> Point {
        self.curve.grad(xi) * self.curve.phi(xi)
    }

    /// The oscillator vector field `α(ξ, x) = F(ξ,x)∇V_d(ξ)` in its
    /// division-free form.
    pub fn alpha(&self, xi: &Point, x: Option<&[f64]>) -> Point {
        let phi = self.curve.phi(xi);
        let grad = self.curve.grad(xi);
        let w = self.speed_at(xi, x);
        j0() * grad * w - self.damping_at(xi) * grad * phi
    }

    /// Jacobian `∂α/∂ξ = w·J₀·∇²Φ − ℛ(∇Φ∇Φᵀ + Φ∇²Φ)` for constant `w` and `ℛ`.
    pub fn alpha_jacobian(&self, xi: &Point) -> Result<Matrix2<f64>, TargetError> {
        let (w, r) = self.constant_gains().ok_or(TargetError::NotConstant)?;
        let phi = self.curve.phi(xi);
        let grad = self.curve.grad(xi);
        let hess = self.curve.hess(xi);
        Ok(j0() * hess * w - r * (grad * grad.transpose() + hess * phi))
    }

    /// Integrates the oscillator with fixed-step RK4 from `xi0`.
    pub fn simulate(&self, xi0: Point, horizon: f64, step: f64) -> Result<TargetTrajectory, TargetError> {
        if !(step > 0.0 && step.is_finite()) || !(horizon >= step) {
            return Err(TargetError::InvalidStep(format!(
                "need step > 0 and horizon >= step, got step={step}, horizon={horizon}"
            )));
        }
        if !(xi0.x.is_finite() && xi0.y.is_finite()) {
            return Err(CurveError::NonFinite(xi0.x, xi0.y).into());
        }
        let escape = self.curve.domain_box().scaled(10.0);
        let n = (horizon / step).round() as usize;
        let mut traj = TargetTrajectory::with_capacity(n + 1);
        let mut xi = xi0;
        traj.push(0.0, xi, self.curve.phi(&xi).abs());
        for k in 0..n {
            let t = k as f64 * step;
            let next = rk4_step(
                |_, s| {
                    let a = self.alpha(&Point::new(s[0], s[1]), None);
                    Ok(vec![a.x, a.y])
                },
                t,
                xi.as_slice(),
                step,
            )
            .map_err(|_| TargetError::Diverged { t })?;
            xi = Point::new(next[0], next[1]);
            let t_next = (k + 1) as f64 * step;
            if !escape.contains(&xi) {
                return Err(TargetError::Diverged { t: t_next });
            }
            traj.push(t_next, xi, self.curve.phi(&xi).abs());
        }
        Ok(traj)
    }

    /// One trajectory per seed, computed in parallel; output order follows
    /// `seeds`.
    pub fn phase_portrait(
        &self,
        seeds: &[Point],
        horizon: f64,
        step: f64,
    ) -> Result<Vec<TargetTrajectory>, TargetError> {
        if seeds.is_empty() {
            return Err(TargetError::NoSeeds);
        }
        seeds
            .par_iter()
            .map(|s| self.simulate(*s, horizon, step))
            .collect()
    }
}

/// Time history of an oscillator run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetTrajectory {
    pub t: Vec<f64>,
    pub xi: Vec<Point>,
    pub abs_phi: Vec<f64>,
}

impl TargetTrajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            xi: Vec::with_capacity(n),
            abs_phi: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, xi: Point, abs_phi: f64) {
        self.t.push(t);
        self.xi.push(xi);
        self.abs_phi.push(abs_phi);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_abs_phi(&self) -> f64 {
        self.abs_phi.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_point(&self) -> Point {
        self.xi.last().copied().unwrap_or_else(|| Point::repeat(f64::NAN))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> TargetSpec {
        TargetSpec::new(ImplicitCurve::circle(Point::zeros(), 1.0).unwrap())
    }

    fn cassini() -> TargetSpec {
        TargetSpec::new(ImplicitCurve::cassini(1.0, 1.2).unwrap())
    }

    /// `F∇V_d` with `F = 𝒥 − ℛ`, `𝒥 = [[0, w/Φ], [−w/Φ, 0]]`, evaluated
    /// literally. Only valid off the curve.
    fn alpha_naive(spec: &TargetSpec, xi: &Point) -> Point {
        let phi = spec.curve().phi(xi);
        let w = spec.speed_at(xi, None);
        let jm = Matrix2::new(0.0, w / phi, -w / phi, 0.0);
        let f = jm - spec.damping_at(xi);
        f * (spec.curve().grad(xi) * phi)
    }

    #[test]
    fn vd_examples() {
        let s = unit();
        assert_eq!(s.vd(&Point::new(1.0, 0.0)), 0.0);
        assert_eq!(s.vd(&Point::new(2.0, 0.0)), 4.5);
        assert!((cassini().vd(&Point::zeros()) - 0.57630848).abs() < 1e-12);
    }

    #[test]
    fn grad_vd_examples() {
        let s = unit();
        assert_eq!(s.grad_vd(&Point::new(1.0, 0.0)), Point::zeros());
        assert_eq!(s.grad_vd(&Point::new(2.0, 0.0)), Point::new(12.0, 0.0));
        for p in [Point::new(-1.0, 0.0), Point::zeros(), Point::new(1.0, 0.0)] {
            assert_eq!(cassini().grad_vd(&p), Point::zeros());
        }
    }

    #[test]
    fn alpha_examples() {
        let s = unit();
        assert_eq!(s.alpha(&Point::new(1.0, 0.0), None), Point::new(0.0, -2.0));
        assert_eq!(s.alpha(&Point::new(2.0, 0.0), None), Point::new(-12.0, -4.0));
        let s2 = unit().with_speed(-3.0).unwrap().with_scalar_damping(7.0).unwrap();
        assert_eq!(s2.alpha(&Point::zeros(), None), Point::zeros());
    }

    #[test]
    fn alpha_matches_naive_form_off_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [
            unit(),
            cassini()
                .with_speed(0.7)
                .unwrap()
                .with_damping(Matrix2::new(2.0, 0.3, 0.3, 1.0))
                .unwrap(),
        ];
        for s in &specs {
            let b = s.curve().domain_box();
            let mut checked = 0;
            while checked < 1000 {
                let p = Point::new(
                    rng.gen_range(b.min[0]..b.max[0]),
                    rng.gen_range(b.min[1]..b.max[1]),
                );
                if s.curve().phi(&p).abs() < 1e-6 {
                    continue;
                }
                let a = s.alpha(&p, None);
                let n = alpha_naive(s, &p);
                assert!((a - n).norm() <= 1e-10 * a.norm().max(1e-300), "{p}: {a} vs {n}");
                checked += 1;
            }
        }
    }

    #[test]
    fn alpha_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = cassini()
            .with_speed(0.4)
            .unwrap()
            .with_damping(Matrix2::new(1.5, 0.2, 0.2, 0.5))
            .unwrap();
        for _ in 0..100 {
            let p = Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
            let jac = s.alpha_jacobian(&p).unwrap();
            let h = 1e-6;
            let cx = (s.alpha(&(p + Point::new(h, 0.0)), None) - s.alpha(&(p - Point::new(h, 0.0)), None)) / (2.0 * h);
            let cy = (s.alpha(&(p + Point::new(0.0, h)), None) - s.alpha(&(p - Point::new(0.0, h)), None)) / (2.0 * h);
            let fd = Matrix2::from_columns(&[cx, cy]);
            assert!((fd - jac).norm() <= 1e-5 * jac.norm().max(1.0));
        }
        let field = unit().with_speed_field(|_, _| 1.0).unwrap();
        assert_eq!(field.alpha_jacobian(&Point::zeros()), Err(TargetError::NotConstant));
    }

    #[test]
    fn rejects_invalid_gains() {
        assert!(matches!(unit().with_speed(0.0), Err(TargetError::ZeroSpeed { .. })));
        assert!(matches!(
            unit().with_scalar_damping(-1.0),
            Err(TargetError::InvalidDamping { .. })
        ));
        assert!(unit().with_damping(Matrix2::new(1.0, 2.0, 0.0, 1.0)).is_err());
        // w(ξ) = ξ1 vanishes where the unit circle crosses the q2 axis
        assert!(matches!(
            unit().with_speed_field(|p, _| if p.x.abs() < 0.05 { 0.0 } else { 1.0 }),
            Err(TargetError::ZeroSpeed { .. })
        ));
        assert!(unit().with_damping_field(|p| Matrix2::identity() * (1.0 + p.norm())).is_ok());
    }

    #[test]
    fn converges_from_outside() {
        let traj = unit().simulate(Point::new(2.0, 0.0), 20.0, 0.01).unwrap();
        assert!(traj.final_abs_phi() < 1e-6);
        assert_eq!(traj.len(), 2001);
    }

    #[test]
    fn equilibria_stay_fixed() {
        let s = cassini();
        for p in [Point::new(-1.0, 0.0), Point::zeros(), Point::new(1.0, 0.0)] {
            let traj = s.simulate(p, 5.0, 0.01).unwrap();
            assert_eq!(traj.final_point(), p);
        }
    }

    #[test]
    fn curve_is_invariant() {
        // only RK4 local error moves the state off the curve
        let traj = unit().simulate(Point::new(1.0, 0.0), 20.0, 0.01).unwrap();
        assert!(traj.abs_phi.iter().all(|v| *v < 2e-8));
    }

    #[test]
    fn descent_of_vd() {
        let s = unit().with_speed(2.0).unwrap().with_scalar_damping(0.5).unwrap();
        for seed in [Point::new(2.0, 0.3), Point::new(0.1, -0.05), Point::new(-1.2, 1.1)] {
            let traj = s.simulate(seed, 10.0, 0.01).unwrap();
            for w in traj.xi.windows(2) {
                assert!(s.vd(&w[1]) <= s.vd(&w[0]) + 1e-9);
            }
        }
    }

    #[test]
    fn on_orbit_speed_is_w_grad_phi() {
        let s = cassini().with_speed(0.3).unwrap();
        for p in s.curve().sample_on_curve(50) {
            let v = s.alpha(&p, None);
            let expected = 0.3 * s.curve().grad(&p).norm();
            assert!((v.norm() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_settings() {
        assert!(matches!(
            unit().simulate(Point::zeros(), 1.0, 0.0),
            Err(TargetError::InvalidStep(_))
        ));
        assert!(matches!(
            unit().simulate(Point::zeros(), 0.001, 0.01),
            Err(TargetError::InvalidStep(_))
        ));
        assert!(matches!(unit().phase_portrait(&[], 1.0, 0.1), Err(TargetError::NoSeeds)));
    }

    #[test]
    fn diverging_field_is_reported() {
        let s = unit();
        // seed already outside the 10x escape box
        let err = s.simulate(Point::new(100.0, 0.0), 1.0, 0.01).unwrap_err();
        assert!(matches!(err, TargetError::Diverged { .. }));
    }
}
