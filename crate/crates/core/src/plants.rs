//! Port-Hamiltonian mechanical plants
//!
//! ```text
//! q̇ = A(q) ∇_p H,   ṗ = −A(q)ᵀ ∇_q H − R(x) ∇_p H + G u,   H = ½ pᵀ M⁻¹ p + U(q)
//! ```
//!
//! Two models ship: the 3-dof LTI benchmark with `A = I₃` and a 3-dof
//! surface vessel with `A(q)` the yaw rotation. Both have `U = 0`.

use std::fmt::Debug;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant parameters: {0}")]
    Invariant(String),
    #[error("non-finite state or input")]
    NonFinite,
}

/// Configuration and momenta. For the vessel `p` is the body-frame momentum,
/// so `M⁻¹p` is the body velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub q: Vector3<f64>,
    pub p: Vector3<f64>,
}

impl PlantState {
    pub fn new(q: Vector3<f64>, p: Vector3<f64>) -> Self {
        Self { q, p }
    }

    pub fn at_rest(q: Vector3<f64>) -> Self {
        Self { q, p: Vector3::zeros() }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.q[0], self.q[1], self.q[2], self.p[0], self.p[1], self.p[2]]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            q: Vector3::new(x[0], x[1], x[2]),
            p: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Lti,
    Vessel,
}

/// A plant with a 2-dimensional regulated output `q_y = h(q)` and one
/// internal coordinate `q_N = N(q)`, together forming `T(q) = col(h, N)`.
pub trait PlantModel: Debug + Send + Sync {
    fn kind(&self) -> PlantKind;

    /// Constant inertia matrix.
    fn mass(&self) -> Matrix3<f64>;
    fn mass_inv(&self) -> Matrix3<f64>;

    /// `∇_q U`; zero for the shipped plants.
    fn potential_gradient(&self, _q: &Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }

    fn potential(&self, _q: &Vector3<f64>) -> f64 {
        0.0
    }

    /// State derivative under input `u`.
    fn rhs(&self, state: &PlantState, u: &Vector2<f64>) -> Result<PlantState, PlantError>;

    /// `(q_y, q_N) = T(q)`.
    fn output_map(&self, q: &Vector3<f64>) -> (Point, f64);

    /// `T⁻¹(q_y, q_N)`.
    fn config_from_output(&self, qy: &Point, qn: f64) -> Vector3<f64>;

    /// `𝒜(q) = ∇T(q)ᵀ A(q)`, so that `col(q̇_y, q̇_N) = 𝒜 M⁻¹ p` in the
    /// absence of disturbances.
    fn coordinate_frame(&self, q: &Vector3<f64>) -> Matrix3<f64>;

    /// Kinematic disturbance added to `q̇_y`; zero unless overridden.
    fn current(&self) -> Point {
        Point::zeros()
    }

    /// `d/dt (∇hᵀ A M⁻¹ p)` evaluated from the raw equations of motion.
    fn output_acceleration(&self, state: &PlantState, u: &Vector2<f64>) -> Result<Point, PlantError>;

    /// `∇hᵀ A M⁻¹ G`, the input matrix of `q̈_y`.
    fn input_gain(&self, q: &Vector3<f64>) -> Matrix2<f64>;

    /// `∇hᵀ A M⁻¹ p`: the part of `q̇_y` produced by the momenta.
    fn body_output_velocity(&self, state: &PlantState) -> Point {
        let r = self.coordinate_frame(&state.q) * (self.mass_inv() * state.p);
        Point::new(r[0], r[1])
    }

    /// Full output velocity `q̇_y`, including the current.
    fn output_velocity(&self, state: &PlantState) -> Point {
        self.body_output_velocity(state) + self.current()
    }

    /// `q̇_N`.
    fn internal_velocity(&self, state: &PlantState) -> f64 {
        (self.coordinate_frame(&state.q) * (self.mass_inv() * state.p))[2]
    }

    fn energy(&self, state: &PlantState) -> f64 {
        0.5 * state.p.dot(&(self.mass_inv() * state.p)) + self.potential(&state.q)
    }

    /// Momenta that realise the output velocity `qy_dot` (momentum part only)
    /// and internal velocity `qn_dot` at configuration `q`.
    fn momenta_for(&self, q: &Vector3<f64>, qy_dot: &Point, qn_dot: f64) -> Option<Vector3<f64>> {
        let frame = self.coordinate_frame(q);
        let v = frame.lu().solve(&Vector3::new(qy_dot.x, qy_dot.y, qn_dot))?;
        Some(self.mass() * v)
    }
}

fn is_spd(m: &Matrix3<f64>) -> bool {
    (m - m.transpose()).norm() <= 1e-12 * m.norm() && m.cholesky().is_some()
}

fn min_sym_eigenvalue(m: &Matrix3<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// The linear benchmark: `A = I₃`, `U = 0`, `h(q) = Cq`, `N(q) = C⊥q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiPlant {
    mass: Matrix3<f64>,
    mass_inv: Matrix3<f64>,
    damping: Matrix3<f64>,
    input: Matrix3x2<f64>,
    output: Matrix2x3<f64>,
    output_perp: RowVector3<f64>,
}

impl LtiPlant {
    pub fn new(
        mass: Matrix3<f64>,
        damping: Matrix3<f64>,
        input: Matrix3x2<f64>,
        output: Matrix2x3<f64>,
    ) -> Result<Self, PlantError> {
        if !is_spd(&mass) {
            return Err(PlantError::Invariant("M must be symmetric positive definite".into()));
        }
        if min_sym_eigenvalue(&damping) < -1e-12 {
            return Err(PlantError::Invariant("R must be positive semidefinite".into()));
        }
        let r0: Vector3<f64> = output.row(0).transpose();
        let r1: Vector3<f64> = output.row(1).transpose();
        let normal = r0.cross(&r1);
        if normal.norm() < 1e-12 * r0.norm().max(1.0) * r1.norm().max(1.0) {
            return Err(PlantError::Invariant("rank(C) must be 2".into()));
        }
        let mass_inv = mass.try_inverse().expect("SPD matrix is invertible");
        let gain = output * mass_inv * input;
        if gain.determinant().abs() < 1e-12 {
            return Err(PlantError::Invariant("rank(C M⁻¹ G) must be 2".into()));
        }
        Ok(Self {
            mass,
            mass_inv,
            damping,
            input,
            output,
            output_perp: normal.normalize().transpose(),
        })
    }

    /// `M = I₃`, `R = diag(0, 0, r3)`, `G = [[1,0],[0,1],[1,0]]`,
    /// `C = [[1,0,0],[0,1,0]]`.
    pub fn benchmark(r3: f64) -> Result<Self, PlantError> {
        Self::new(
            Matrix3::identity(),
            Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, r3)),
            Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 1.0, 0.0),
            Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
        )
    }

    pub fn damping(&self) -> &Matrix3<f64> {
        &self.damping
    }

    pub fn input(&self) -> &Matrix3x2<f64> {
        &self.input
    }

    pub fn output(&self) -> &Matrix2x3<f64> {
        &self.output
    }

    pub fn output_perp(&self) -> &RowVector3<f64> {
        &self.output_perp
    }

    fn transform(&self) -> Matrix3<f64> {
        Matrix3::from_rows(&[self.output.row(0).into_owned(), self.output.row(1).into_owned(), self.output_perp])
    }
}

impl PlantModel for LtiPlant {
    fn kind(&self) -> PlantKind {
        PlantKind::Lti
    }

    fn mass(&self) -> Matrix3<f64> {
        self.mass
    }

    fn mass_inv(&self) -> Matrix3<f64> {
        self.mass_inv
    }

    fn rhs(&self, state: &PlantState, u: &Vector2<f64>) -> Result<PlantState, PlantError> {
        if !state.is_finite() || !u.iter().all(|v| v.is_finite()) {
            return Err(PlantError::NonFinite);
        }
        let v = self.mass_inv * state.p;
        Ok(PlantState {
            q: v,
            p: -self.potential_gradient(&state.q) - self.damping * v + self.input * u,
        })
    }

    fn output_map(&self, q: &Vector3<f64>) -> (Point, f64) {
        (self.output * q, (self.output_perp * q)[0])
    }

    fn config_from_output(&self, qy: &Point, qn: f64) -> Vector3<f64> {
        self.transform()
            .lu()
            .solve(&Vector3::new(qy.x, qy.y, qn))
            .expect("[C; C⊥] is invertible")
    }

    fn coordinate_frame(&self, _q: &Vector3<f64>) -> Matrix3<f64> {
        self.transform()
    }

    fn output_acceleration(&self, state: &PlantState, u: &Vector2<f64>) -> Result<Point, PlantError> {
        let d = self.rhs(state, u)?;
        Ok(self.output * (self.mass_inv * d.p))
    }

    fn input_gain(&self, _q: &Vector3<f64>) -> Matrix2<f64> {
        self.output * self.mass_inv * self.input
    }
}

/// Inertia, damping and geometry of a 3-dof surface vessel (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VesselParams {
    pub m11: f64,
    pub m22: f64,
    pub m23: f64,
    pub m32: f64,
    pub m33: f64,
    pub d11: f64,
    pub d22: f64,
    pub d23: f64,
    pub d32: f64,
    pub d33: f64,
    /// Hand-position lever arm ℓ.
    pub ell: f64,
    /// Constant ocean current `V_c` in the earth frame.
    pub current: [f64; 2],
}

impl Default for VesselParams {
    /// A supply-vessel-like parameter set satisfying every model invariant
    /// and the lever-arm bound with `ℓ = 18`.
    fn default() -> Self {
        Self {
            m11: 1.2e5,
            m22: 1.8e5,
            m23: -1.0e4,
            m32: -1.0e4,
            m33: 6.0e6,
            d11: 2.2e4,
            d22: 1.5e5,
            d23: -3.0e4,
            d32: -3.0e4,
            d33: 4.2e6,
            ell: 18.0,
            current: [0.0, 0.0],
        }
    }
}

/// The reduced-dynamics constants `m0`, `δ1 … δ4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselConstants {
    pub m0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
}

impl VesselParams {
    pub fn mass(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.m11, 0.0, 0.0, //
            0.0, self.m22, self.m23, //
            0.0, self.m32, self.m33,
        )
    }

    pub fn damping(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.d11, 0.0, 0.0, //
            0.0, self.d22, self.d23, //
            0.0, self.d32, self.d33,
        )
    }

    /// Lower bound on ℓ: `−(d33·m23 − d23·m33)/(d22·m33 − d32·m23)`.
    pub fn ell_lower_bound(&self) -> f64 {
        -(self.d33 * self.m23 - self.d23 * self.m33) / (self.d22 * self.m33 - self.d32 * self.m23)
    }

    pub fn constants(&self) -> VesselConstants {
        let m0 = self.m22 * self.m33 - self.m23 * self.m23;
        VesselConstants {
            m0,
            delta1: (self.m11 * self.m33 - self.m23 * self.m23) / m0,
            delta2: (self.d33 * self.m23 - self.d23 * self.m33) / m0,
            delta3: (self.m11 - self.m22) * self.m23 / m0,
            delta4: (self.d22 * self.m33 - self.d32 * self.m23) / m0,
        }
    }

    /// Checks every model invariant, naming the first violated one.
    pub fn validate(&self) -> Result<(), PlantError> {
        let all = [
            self.m11, self.m22, self.m23, self.m32, self.m33, self.d11, self.d22, self.d23,
            self.d32, self.d33, self.ell, self.current[0], self.current[1],
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(PlantError::Invariant("all parameters must be finite".into()));
        }
        if self.m23 != self.m32 {
            return Err(PlantError::Invariant("m23 must equal m32".into()));
        }
        if self.mass().cholesky().is_none() {
            return Err(PlantError::Invariant("M must be positive definite".into()));
        }
        if self.constants().m0 <= 0.0 {
            return Err(PlantError::Invariant("m0 = m22·m33 − m23² must be positive".into()));
        }
        if min_sym_eigenvalue(&self.damping()) <= 0.0 {
            return Err(PlantError::Invariant("D + Dᵀ must be positive definite".into()));
        }
        if !(self.ell > 0.0) {
            return Err(PlantError::Invariant(format!("ell must be positive, got {}", self.ell)));
        }
        let bound = self.ell_lower_bound();
        if !(self.ell > bound) {
            return Err(PlantError::Invariant(format!(
                "ell = {} violates the lever-arm bound ell > {bound}",
                self.ell
            )));
        }
        Ok(())
    }
}

/// Earth-fixed pose `q = (x, y, ψ)` with body-frame momenta; input is the
/// normalised `u` with `M⁻¹Gu = (u1, 0, u2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselPlant {
    params: VesselParams,
    mass: Matrix3<f64>,
    mass_inv: Matrix3<f64>,
    damping: Matrix3<f64>,
}

impl VesselPlant {
    pub fn new(params: VesselParams) -> Result<Self, PlantError> {
        params.validate()?;
        let mass = params.mass();
        Ok(Self {
            params,
            mass,
            mass_inv: mass.try_inverse().expect("positive definite"),
            damping: params.damping(),
        })
    }

    pub fn params(&self) -> &VesselParams {
        &self.params
    }

    pub fn ell(&self) -> f64 {
        self.params.ell
    }

    /// Coriolis-centripetal matrix `C(v)`.
    pub fn coriolis(&self, v: &Vector3<f64>) -> Matrix3<f64> {
        let p = &self.params;
        let a = p.m22 * v[1] + p.m23 * v[2];
        let b = p.m11 * v[0];
        Matrix3::new(
            0.0, 0.0, -a, //
            0.0, 0.0, b, //
            a, -b, 0.0,
        )
    }

    /// The 2×2 rotation block of `A(q)`.
    pub fn rotation(q3: f64) -> Matrix2<f64> {
        let (s, c) = q3.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn structure(q3: f64) -> Matrix3<f64> {
        let (s, c) = q3.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    /// Body velocity `v = M⁻¹p`.
    pub fn velocity(&self, state: &PlantState) -> Vector3<f64> {
        self.mass_inv * state.p
    }
}

impl PlantModel for VesselPlant {
    fn kind(&self) -> PlantKind {
        PlantKind::Vessel
    }

    fn mass(&self) -> Matrix3<f64> {
        self.mass
    }

    fn mass_inv(&self) -> Matrix3<f64> {
        self.mass_inv
    }

    fn rhs(&self, state: &PlantState, u: &Vector2<f64>) -> Result<PlantState, PlantError> {
        if !state.is_finite() || !u.iter().all(|v| v.is_finite()) {
            return Err(PlantError::NonFinite);
        }
        let v = self.mass_inv * state.p;
        let a = Self::structure(state.q[2]);
        let vc = self.params.current;
        let q_dot = a * v + Vector3::new(vc[0], vc[1], 0.0);
        let force = self.mass * Vector3::new(u[0], 0.0, u[1]);
        let p_dot = -a.transpose() * self.potential_gradient(&state.q)
            - (self.coriolis(&v) + self.damping) * v
            + force;
        Ok(PlantState { q: q_dot, p: p_dot })
    }

    fn output_map(&self, q: &Vector3<f64>) -> (Point, f64) {
        let (s, c) = q[2].sin_cos();
        let ell = self.params.ell;
        (Point::new(q[0] + ell * c, q[1] + ell * s), q[2])
    }

    fn config_from_output(&self, qy: &Point, qn: f64) -> Vector3<f64> {
        let (s, c) = qn.sin_cos();
        let ell = self.params.ell;
        Vector3::new(qy.x - ell * c, qy.y - ell * s, qn)
    }

    fn coordinate_frame(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        let (s, c) = q[2].sin_cos();
        let ell = self.params.ell;
        Matrix3::new(
            c, -s, -ell * s, //
            s, c, ell * c, //
            0.0, 0.0, 1.0,
        )
    }

    fn current(&self) -> Point {
        Point::new(self.params.current[0], self.params.current[1])
    }

    fn output_acceleration(&self, state: &PlantState, u: &Vector2<f64>) -> Result<Point, PlantError> {
        // q̇_y(body) = R(q3)·(v1, v2 + ℓv3) and Ṙ = R·[[0, −v3], [v3, 0]].
        let d = self.rhs(state, u)?;
        let v = self.mass_inv * state.p;
        let vd = self.mass_inv * d.p;
        let ell = self.params.ell;
        let inner = Vector2::new(
            vd[0] - (v[1] + ell * v[2]) * v[2],
            vd[1] + ell * vd[2] + v[0] * v[2],
        );
        Ok(Self::rotation(state.q[2]) * inner)
    }

    fn input_gain(&self, q: &Vector3<f64>) -> Matrix2<f64> {
        let (s, c) = q[2].sin_cos();
        let ell = self.params.ell;
        Matrix2::new(c, -ell * s, s, ell * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn vessel() -> VesselPlant {
        VesselPlant::new(VesselParams::default()).unwrap()
    }

    #[test]
    fn lti_unforced_rhs() {
        let plant = LtiPlant::benchmark(1.0).unwrap();
        let s = PlantState::new(Vector3::new(2.0, 0.5, 1.0), Vector3::new(0.0, 0.0, 1.0));
        let d = plant.rhs(&s, &Vector2::zeros()).unwrap();
        assert_eq!(d.q, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(d.p, Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn vessel_at_rest_is_equilibrium() {
        let plant = vessel();
        let s = PlantState::at_rest(Vector3::new(3.0, -1.0, 0.7));
        let d = plant.rhs(&s, &Vector2::zeros()).unwrap();
        assert_eq!(d.q, Vector3::zeros());
        assert_eq!(d.p, Vector3::zeros());
    }

    #[test]
    fn vessel_surge_input() {
        let plant = vessel();
        let s = PlantState::at_rest(Vector3::zeros());
        let d = plant.rhs(&s, &Vector2::new(1.0, 0.0)).unwrap();
        let vdot = plant.mass_inv() * d.p;
        assert!((vdot - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let d = plant.rhs(&s, &Vector2::new(0.0, 1.0)).unwrap();
        let vdot = plant.mass_inv() * d.p;
        assert!((vdot - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let plant = vessel();
        let s = PlantState::at_rest(Vector3::zeros());
        assert_eq!(plant.rhs(&s, &Vector2::new(f64::NAN, 0.0)), Err(PlantError::NonFinite));
        let bad = PlantState::at_rest(Vector3::new(f64::INFINITY, 0.0, 0.0));
        let lti = LtiPlant::benchmark(1.0).unwrap();
        assert_eq!(lti.rhs(&bad, &Vector2::zeros()), Err(PlantError::NonFinite));
    }

    #[test]
    fn output_maps() {
        let plant = vessel();
        let (qy, qn) = plant.output_map(&Vector3::new(120.0, -90.0, 0.0));
        assert_eq!(qy, Point::new(138.0, -90.0));
        assert_eq!(qn, 0.0);
        let (qy, _) = plant.output_map(&Vector3::new(0.0, 0.0, PI / 2.0));
        assert!((qy - Point::new(0.0, 18.0)).norm() < 1e-12);

        let lti = LtiPlant::benchmark(1.0).unwrap();
        let (qy, qn) = lti.output_map(&Vector3::new(2.0, 0.5, 1.0));
        assert_eq!(qy, Point::new(2.0, 0.5));
        assert_eq!(qn, 1.0);
        assert_eq!(*lti.output_perp(), RowVector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn output_map_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plants: [Box<dyn PlantModel>; 2] = [Box::new(vessel()), Box::new(LtiPlant::benchmark(1.0).unwrap())];
        for plant in &plants {
            for _ in 0..100 {
                let q = Vector3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-3.0..3.0));
                let (qy, qn) = plant.output_map(&q);
                assert!((plant.config_from_output(&qy, qn) - q).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn output_velocities() {
        let lti = LtiPlant::benchmark(1.0).unwrap();
        let s = PlantState::new(Vector3::zeros(), Vector3::new(3.0, 4.0, 5.0));
        assert_eq!(lti.output_velocity(&s), Point::new(3.0, 4.0));

        let plant = vessel();
        let m = plant.mass();
        let s = PlantState::new(Vector3::zeros(), m * Vector3::new(1.0, 0.0, 0.0));
        assert!((plant.output_velocity(&s) - Point::new(1.0, 0.0)).norm() < 1e-12);
        let s = PlantState::new(Vector3::zeros(), m * Vector3::new(0.0, 0.0, 1.0));
        assert!((plant.output_velocity(&s) - Point::new(0.0, 18.0)).norm() < 1e-12);

        let with_current = VesselPlant::new(VesselParams { current: [2.0, 1.0], ..Default::default() }).unwrap();
        assert!((with_current.output_velocity(&s) - Point::new(2.0, 19.0)).norm() < 1e-12);
        assert!((with_current.body_output_velocity(&s) - Point::new(0.0, 18.0)).norm() < 1e-12);
    }

    #[test]
    fn output_velocity_matches_kinematics() {
        // q̇_y from differentiating h along q̇ = A v + col(V_c, 0)
        let plant = VesselPlant::new(VesselParams { current: [0.5, -0.3], ..Default::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let q = Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-4.0..4.0));
            let v = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.2..0.2));
            let s = PlantState::new(q, plant.mass() * v);
            let qdot = plant.rhs(&s, &Vector2::zeros()).unwrap().q;
            let h = 1e-6;
            let fd = (plant.output_map(&(q + qdot * h)).0 - plant.output_map(&(q - qdot * h)).0) / (2.0 * h);
            assert!((fd - plant.output_velocity(&s)).norm() < 1e-6);
        }
    }

    #[test]
    fn output_acceleration_matches_finite_differences() {
        let plant = vessel();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let q = Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-4.0..4.0));
            let v = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.2..0.2));
            let u = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.1..0.1));
            let s = PlantState::new(q, plant.mass() * v);
            let d = plant.rhs(&s, &u).unwrap();
            let h = 1e-5;
            let fwd = PlantState::new(s.q + d.q * h, s.p + d.p * h);
            let bwd = PlantState::new(s.q - d.q * h, s.p - d.p * h);
            let fd = (plant.body_output_velocity(&fwd) - plant.body_output_velocity(&bwd)) / (2.0 * h);
            let an = plant.output_acceleration(&s, &u).unwrap();
            assert!((fd - an).norm() <= 1e-5 * an.norm().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn coriolis_is_skew_on_velocity() {
        let plant = vessel();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let v = Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-1.0..1.0));
            let c = plant.coriolis(&v);
            let scale = c.norm() * v.norm_squared();
            assert!(v.dot(&(c * v)).abs() <= 1e-12 * scale.max(1.0));
            assert!((c + c.transpose()).norm() == 0.0);
        }
    }

    #[test]
    fn input_gain_has_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let plants: [Box<dyn PlantModel>; 2] = [Box::new(vessel()), Box::new(LtiPlant::benchmark(1.0).unwrap())];
        for plant in &plants {
            for _ in 0..100 {
                let q = Vector3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-PI..PI));
                assert!(plant.input_gain(&q).determinant().abs() > 1e-9);
            }
        }
        // Jacobian of T for the vessel has unit determinant for every ℓ
        let plant = vessel();
        assert!((plant.coordinate_frame(&Vector3::new(0.0, 0.0, 0.3)).determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lti_rank_conditions() {
        let bad_c = Matrix2x3::new(1.0, 0.0, 0.0, 2.0, 0.0, 0.0);
        assert!(LtiPlant::new(Matrix3::identity(), Matrix3::zeros(), Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 1.0, 0.0), bad_c).is_err());
        let bad_g = Matrix3x2::new(1.0, 1.0, 0.0, 0.0, 1.0, 0.0);
        let c = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        assert!(LtiPlant::new(Matrix3::identity(), Matrix3::zeros(), bad_g, c).is_err());
        assert!(LtiPlant::benchmark(-1.0).is_err());
    }

    #[test]
    fn lever_arm_bound() {
        let p = VesselParams::default();
        assert!(p.ell_lower_bound() < 18.0);
        let c = p.constants();
        assert!(c.delta4 + c.delta2 / p.ell > 0.0);

        let bad = VesselParams { ell: p.ell_lower_bound() - 1.0, ..p };
        assert!(bad.validate().is_err());

        // without cross terms the bound collapses to ℓ > 0
        let diag = VesselParams { m23: 0.0, m32: 0.0, d23: 0.0, d32: 0.0, ..p };
        assert_eq!(diag.ell_lower_bound(), 0.0);
        assert!(VesselParams { ell: 1e-3, ..diag }.validate().is_ok());
        assert!(VesselParams { ell: 0.0, ..diag }.validate().is_err());
    }

    #[test]
    fn invalid_vessel_parameters_are_named() {
        let p = VesselParams::default();
        let err = VesselPlant::new(VesselParams { m32: 0.0, ..p }).unwrap_err();
        assert!(err.to_string().contains("m23"));
        let err = VesselPlant::new(VesselParams { m22: -1.0, ..p }).unwrap_err();
        assert!(err.to_string().contains("positive definite"));
        let err = VesselPlant::new(VesselParams { d11: -1.0, ..p }).unwrap_err();
        assert!(err.to_string().contains("D + D"));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }
}
