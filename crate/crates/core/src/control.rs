//! Immersion-and-invariance path-following controllers.
//!
//! Every law here is built around the off-the-manifold coordinate
//!
//! ```text
//! z = φ(x) = ∇h(q)ᵀ A(q) M⁻¹ p − α(h(q), x)
//! ```
//!
//! where `α` is the target oscillator field. The controllers enforce
//! `ż = −k z`, so once `z = 0` the output `q_y = h(q)` moves exactly like the
//! oscillator and inherits its attractive limit cycle.
//!
//! Only the momentum part of `q̇_y` enters `z`: an unknown ocean current
//! acting on the vessel is not measured by the controller.

use std::fmt::Debug;

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use thiserror::Error;

use crate::curves::Point;
use crate::plants::{LtiPlant, PlantError, PlantKind, PlantModel, PlantState, VesselPlant};
use crate::target::{j0, TargetError, TargetSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid gain: {0}")]
    InvalidGain(String),
    #[error("input matrix is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("assembled state is not finite")]
    NonFinite,
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// Input and, for dynamic laws, the integrator derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: Vector2<f64>,
    pub theta_dot: Option<Point>,
}

/// A static (or integrator-augmented) state feedback bound to its plant and
/// target oscillator.
pub trait Controller: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn plant(&self) -> &dyn PlantModel;
    fn target(&self) -> &TargetSpec;

    /// Configured exponential rate of `z`, if the law enforces one.
    fn decay_gain(&self) -> Option<f64>;

    fn has_integrator(&self) -> bool {
        false
    }

    /// Named gains, echoed into output headers.
    fn gains(&self) -> Vec<(&'static str, f64)>;

    /// The coordinate the law drives to zero.
    fn off_manifold(&self, state: &PlantState, theta: Option<&Point>) -> Point {
        let _ = theta;
        off_manifold(self.plant(), self.target(), state)
    }

    fn feedback(&self, state: &PlantState, theta: Option<&Point>) -> Result<ControlOutput, ControlError>;

    fn gain_monitor(&self, _state: &PlantState) -> Option<GainMonitor> {
        None
    }
}

/// `z = ∇hᵀ A M⁻¹ p − α(q_y, x)`.
pub fn off_manifold(plant: &dyn PlantModel, target: &TargetSpec, state: &PlantState) -> Point {
    let (qy, _) = plant.output_map(&state.q);
    let x = state.to_array();
    plant.body_output_velocity(state) - target.alpha(&qy, Some(&x))
}

fn require_constant(target: &TargetSpec) -> Result<(f64, Matrix2<f64>), ControlError> {
    target
        .constant_gains()
        .ok_or(ControlError::Target(TargetError::NotConstant))
}

fn positive(name: &str, value: f64) -> Result<(), ControlError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ControlError::InvalidGain(format!("{name} must be positive, got {value}")))
    }
}

/// Feedback-linearising law for the LTI benchmark:
///
/// ```text
/// u = (C M⁻¹ G)⁻¹ [ (∂L/∂q + C M⁻¹ R) M⁻¹ p − k z ],   L(q) = α(Cq)
/// ```
#[derive(Debug, Clone)]
pub struct LtiIIController {
    plant: LtiPlant,
    target: TargetSpec,
    k: f64,
    gain_inv: Matrix2<f64>,
}

impl LtiIIController {
    pub fn new(plant: LtiPlant, target: TargetSpec, k: f64) -> Result<Self, ControlError> {
        positive("k", k)?;
        require_constant(&target)?;
        let gain = plant.input_gain(&Vector3::zeros());
        let det = gain.determinant();
        let gain_inv = gain.try_inverse().filter(|_| det.abs() > 1e-12).ok_or(ControlError::Singular(det))?;
        Ok(Self { plant, target, k, gain_inv })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn lti_plant(&self) -> &LtiPlant {
        &self.plant
    }

    /// `L(q) = −Φ(Cq)·ℛ∇Φ(Cq) + w·J₀∇Φ(Cq)`.
    pub fn l_map(&self, q: &Vector3<f64>) -> Point {
        let (qy, _) = self.plant.output_map(q);
        self.target.alpha(&qy, None)
    }

    /// The 2×3 Jacobian `∂L/∂q = (∂α/∂q_y)·C`.
    pub fn l_jacobian(&self, q: &Vector3<f64>) -> Matrix2x3<f64> {
        let (qy, _) = self.plant.output_map(q);
        let d = self
            .target
            .alpha_jacobian(&qy)
            .expect("constant gains checked at construction");
        d * self.plant.output()
    }
}

/// `lti_feedback`: the law above evaluated at `state`.
pub fn lti_feedback(ctrl: &LtiIIController, state: &PlantState) -> Vector2<f64> {
    let plant = &ctrl.plant;
    let v = plant.mass_inv() * state.p;
    let z = off_manifold(plant, &ctrl.target, state);
    let drift = (ctrl.l_jacobian(&state.q) + plant.output() * plant.mass_inv() * plant.damping()) * v;
    ctrl.gain_inv * (drift - z * ctrl.k)
}

impl Controller for LtiIIController {
    fn name(&self) -> &'static str {
        "lti-ii"
    }

    fn plant(&self) -> &dyn PlantModel {
        &self.plant
    }

    fn target(&self) -> &TargetSpec {
        &self.target
    }

    fn decay_gain(&self) -> Option<f64> {
        Some(self.k)
    }

    fn gains(&self) -> Vec<(&'static str, f64)> {
        let (w, r) = self.target.constant_gains().unwrap_or_default();
        vec![("k", self.k), ("w", w), ("r", r.m11)]
    }

    fn feedback(&self, state: &PlantState, _theta: Option<&Point>) -> Result<ControlOutput, ControlError> {
        Ok(ControlOutput { u: lti_feedback(self, state), theta_dot: None })
    }
}

/// `u = −J₀·(q1, q2) − (J₀ + I₂)·(q̇1, q̇2)`, an orbital-stabilisation law
/// without path information, kept for comparison.
pub fn lti_comparison_feedback(q: &Vector3<f64>, q_dot: &Vector3<f64>) -> Vector2<f64> {
    let j = j0();
    let pos = Vector2::new(q[0], q[1]);
    let vel = Vector2::new(q_dot[0], q_dot[1]);
    -(j * pos) - (j + Matrix2::identity()) * vel
}

/// Comparison law on the LTI plant. The target is only used to report `Φ`
/// and `z`.
#[derive(Debug, Clone)]
pub struct LtiComparisonController {
    plant: LtiPlant,
    target: TargetSpec,
}

impl LtiComparisonController {
    pub fn new(plant: LtiPlant, target: TargetSpec) -> Self {
        Self { plant, target }
    }
}

impl Controller for LtiComparisonController {
    fn name(&self) -> &'static str {
        "lti-comparison"
    }

    fn plant(&self) -> &dyn PlantModel {
        &self.plant
    }

    fn target(&self) -> &TargetSpec {
        &self.target
    }

    fn decay_gain(&self) -> Option<f64> {
        None
    }

    fn gains(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }

    fn feedback(&self, state: &PlantState, _theta: Option<&Point>) -> Result<ControlOutput, ControlError> {
        let q_dot = self.plant.mass_inv() * state.p;
        Ok(ControlOutput { u: lti_comparison_feedback(&state.q, &q_dot), theta_dot: None })
    }
}

/// The vessel mappings `g_z`, `f_z`, `F1 … F4`, evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselMappings {
    pub g_z: Matrix2<f64>,
    pub f_z: Point,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

/// `q̈_y = f_z(x) + g_z(x) u` for the hand-position output.
pub fn vessel_mappings(plant: &VesselPlant, state: &PlantState) -> VesselMappings {
    let p = plant.params();
    let c = p.constants();
    let ell = p.ell;
    let v = plant.velocity(state);
    let (v1, v2, v3) = (v[0], v[1], v[2]);
    let (s, co) = state.q[2].sin_cos();

    let f1 = (p.m22 * v2 + p.m23 * v3) * v3 / p.m11 - p.d11 / p.m11 * v1;
    let f2 = ((p.m23 * p.m23 - p.m11 * p.m33) * v1 + (p.d33 * p.m23 - p.d23 * p.m33)) / c.m0;
    let f3 = ((p.m22 - p.m11) * p.m23 * v1 - (p.d22 * p.m33 - p.d32 * p.m23)) / c.m0;
    let f4 = ((p.m23 * p.d22 - p.m22 * (p.d32 + (p.m22 - p.m11) * v1)) * v2
        + (p.m23 * (p.d23 + p.m11 * v1) - p.m22 * (p.d33 + p.m23 * v1)) * v3)
        / c.m0;

    let g_z = Matrix2::new(co, -ell * s, s, ell * co);
    let inner = Point::new(
        f1 - v2 * v3 - ell * v3 * v3,
        v1 * v3 + f2 * v3 + f3 * v2 + f4 * ell,
    );
    let f_z = VesselPlant::rotation(state.q[2]) * inner;
    VesselMappings { g_z, f_z, f1, f2, f3, f4 }
}

/// The static vessel law
///
/// ```text
/// u = g_z⁻¹ [ −f_z + d/dt(F∇V_d)(q_y) − k z ],
/// d/dt(F∇V_d) = [w J₀ ∇²Φ − ℛ(∇Φ∇Φᵀ + Φ∇²Φ)] q̇_y
/// ```
#[derive(Debug, Clone)]
pub struct VesselIIController {
    plant: VesselPlant,
    target: TargetSpec,
    k: f64,
}

impl VesselIIController {
    pub fn new(plant: VesselPlant, target: TargetSpec, k: f64) -> Result<Self, ControlError> {
        positive("k", k)?;
        require_constant(&target)?;
        if plant.ell().abs() < 1e-9 {
            return Err(ControlError::Singular(plant.ell()));
        }
        Ok(Self { plant, target, k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn vessel(&self) -> &VesselPlant {
        &self.plant
    }

    /// `(∂κ/∂q_y, q̇_y)` with `κ` the target field and `q̇_y` its momentum part.
    fn target_rate(&self, state: &PlantState) -> (Matrix2<f64>, Point) {
        let (qy, _) = self.plant.output_map(&state.q);
        let jac = self
            .target
            .alpha_jacobian(&qy)
            .expect("constant gains checked at construction");
        (jac, self.plant.body_output_velocity(state))
    }

    fn solve(&self, g_z: &Matrix2<f64>, rhs: Point) -> Result<Vector2<f64>, ControlError> {
        let det = g_z.determinant();
        if det.abs() < 1e-9 {
            return Err(ControlError::Singular(det));
        }
        g_z.lu().solve(&rhs).ok_or(ControlError::Singular(det))
    }
}

pub fn vessel_feedback(ctrl: &VesselIIController, state: &PlantState) -> Result<Vector2<f64>, ControlError> {
    let m = vessel_mappings(&ctrl.plant, state);
    let (jac, qy_dot) = ctrl.target_rate(state);
    let z = off_manifold(&ctrl.plant, &ctrl.target, state);
    ctrl.solve(&m.g_z, -m.f_z + jac * qy_dot - z * ctrl.k)
}

impl Controller for VesselIIController {
    fn name(&self) -> &'static str {
        "vessel-ii"
    }

    fn plant(&self) -> &dyn PlantModel {
        &self.plant
    }

    fn target(&self) -> &TargetSpec {
        &self.target
    }

    fn decay_gain(&self) -> Option<f64> {
        Some(self.k)
    }

    fn gains(&self) -> Vec<(&'static str, f64)> {
        let (w, r) = self.target.constant_gains().unwrap_or_default();
        vec![("k", self.k), ("w", w), ("r", r.m11), ("ell", self.plant.ell())]
    }

    fn feedback(&self, state: &PlantState, _theta: Option<&Point>) -> Result<ControlOutput, ControlError> {
        Ok(ControlOutput { u: vessel_feedback(self, state)?, theta_dot: None })
    }

    fn gain_monitor(&self, state: &PlantState) -> Option<GainMonitor> {
        Some(internal_gain_monitor(&self.plant, state))
    }
}

/// Vessel law with integral action against a constant current:
///
/// ```text
/// z = ∇hᵀ A M⁻¹ p − κ(q_y) + θ
/// θ̇ = k_I ∇V_d(q_y) + k_I (∂κ/∂q_y) z
/// u = g_z⁻¹ [ −f_z + (∂κ/∂q_y)(∇hᵀ A M⁻¹ p + θ) − θ̇ − k_p z ]
/// ```
#[derive(Debug, Clone)]
pub struct VesselIntegralController {
    base: VesselIIController,
    k_p: f64,
    k_i: f64,
}

impl VesselIntegralController {
    pub fn new(plant: VesselPlant, target: TargetSpec, k_p: f64, k_i: f64) -> Result<Self, ControlError> {
        positive("k_I", k_i)?;
        let base = VesselIIController::new(plant, target, k_p)?;
        let (w, _) = require_constant(&base.target)?;
        if !(k_p > 0.25 * w) {
            return Err(ControlError::InvalidGain(format!("k_p must exceed w/4 = {}, got {k_p}", 0.25 * w)));
        }
        Ok(Self { base, k_p, k_i })
    }

    pub fn base(&self) -> &VesselIIController {
        &self.base
    }

    pub fn k_p(&self) -> f64 {
        self.k_p
    }

    pub fn k_i(&self) -> f64 {
        self.k_i
    }
}

/// Returns `(u, θ̇)`.
pub fn vessel_integral_feedback(
    ctrl: &VesselIntegralController,
    state: &PlantState,
    theta: &Point,
) -> Result<(Vector2<f64>, Point), ControlError> {
    let base = &ctrl.base;
    let m = vessel_mappings(&base.plant, state);
    let (jac, qy_dot) = base.target_rate(state);
    let (qy, _) = base.plant.output_map(&state.q);
    let z = off_manifold(&base.plant, &base.target, state) + theta;
    // ∂h/∂q12 = I₂ for the hand-position output
    let theta_dot = (base.target.grad_vd(&qy) + jac * z) * ctrl.k_i;
    let rhs = -m.f_z + jac * qy_dot + jac * theta - theta_dot - z * ctrl.k_p;
    Ok((base.solve(&m.g_z, rhs)?, theta_dot))
}

impl Controller for VesselIntegralController {
    fn name(&self) -> &'static str {
        "vessel-integral"
    }

    fn plant(&self) -> &dyn PlantModel {
        &self.base.plant
    }

    fn target(&self) -> &TargetSpec {
        &self.base.target
    }

    fn decay_gain(&self) -> Option<f64> {
        None
    }

    fn has_integrator(&self) -> bool {
        true
    }

    fn gains(&self) -> Vec<(&'static str, f64)> {
        let mut g = self.base.gains();
        g.retain(|(n, _)| *n != "k");
        g.insert(0, ("k_p", self.k_p));
        g.insert(1, ("k_I", self.k_i));
        g
    }

    fn off_manifold(&self, state: &PlantState, theta: Option<&Point>) -> Point {
        off_manifold(&self.base.plant, &self.base.target, state) + theta.copied().unwrap_or_default()
    }

    fn feedback(&self, state: &PlantState, theta: Option<&Point>) -> Result<ControlOutput, ControlError> {
        let theta = theta.copied().unwrap_or_default();
        let (u, theta_dot) = vessel_integral_feedback(self, state, &theta)?;
        Ok(ControlOutput { u, theta_dot: Some(theta_dot) })
    }

    fn gain_monitor(&self, state: &PlantState) -> Option<GainMonitor> {
        Some(internal_gain_monitor(&self.base.plant, state))
    }
}

/// Damping gain `K` of the internal yaw-rate dynamics `v̇3 = −K v3 − Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainMonitor {
    /// `K` with the `|q̇_y|^½` factor.
    pub k: f64,
    /// `K` with `|q̇_y|` in place of `|q̇_y|^½`.
    pub k_linear: f64,
    pub psi: f64,
    /// False when `q̇_y = 0` and `ψ` was set to zero.
    pub psi_defined: bool,
}

impl GainMonitor {
    pub fn certifies(&self) -> bool {
        self.k > 0.0
    }
}

/// `K = (δ3 − (δ1 − 1)/ℓ)·|q̇_y|^½·cos(q3 − ψ) + δ4 + δ2/ℓ` with
/// `ψ = atan2(q̇_y1, q̇_y2)` (first argument `q̇_y1`).
pub fn internal_gain_monitor(plant: &VesselPlant, state: &PlantState) -> GainMonitor {
    let c = plant.params().constants();
    let ell = plant.ell();
    let qy_dot = plant.output_velocity(state);
    let speed = qy_dot.norm();
    let psi_defined = speed > 0.0;
    let psi = if psi_defined { qy_dot.x.atan2(qy_dot.y) } else { 0.0 };
    let coeff = (c.delta3 - (c.delta1 - 1.0) / ell) * (state.q[2] - psi).cos();
    let constant = c.delta4 + c.delta2 / ell;
    GainMonitor {
        k: coeff * speed.sqrt() + constant,
        k_linear: coeff * speed + constant,
        psi,
        psi_defined,
    }
}

/// Builds `x = π(ξ, x)`: configuration from `(ξ, q_N)` and momenta
/// `p = M 𝒜⁻¹ col(α(ξ), q̇_N)`.
pub fn assemble_on_manifold(
    plant: &dyn PlantModel,
    target: &TargetSpec,
    xi: &Point,
    qn: f64,
    qn_dot: f64,
) -> Result<PlantState, ControlError> {
    let q = plant.config_from_output(xi, qn);
    let rest = PlantState::at_rest(q);
    let kappa = target.alpha(xi, Some(&rest.to_array()));
    let p = plant.momenta_for(&q, &kappa, qn_dot).ok_or(ControlError::NonFinite)?;
    let state = PlantState::new(q, p);
    if !state.is_finite() {
        return Err(ControlError::NonFinite);
    }
    Ok(state)
}

/// `ż` along the closed loop, from the plant equations of motion and the
/// chain rule through `α(q_y)`.
pub fn off_manifold_rate(
    ctrl: &dyn Controller,
    state: &PlantState,
    theta: Option<&Point>,
) -> Result<Point, ControlError> {
    let plant = ctrl.plant();
    let out = ctrl.feedback(state, theta)?;
    let (qy, _) = plant.output_map(&state.q);
    let jac = ctrl.target().alpha_jacobian(&qy)?;
    let rate = plant.output_acceleration(state, &out.u)? - jac * plant.output_velocity(state);
    Ok(rate + out.theta_dot.unwrap_or_default())
}

/// Immersion residual `|z| + |ż|` at the state assembled from `(ξ, q_N, q̇_N)`.
pub fn verify_immersion(ctrl: &dyn Controller, xi: &Point, qn: f64, qn_dot: f64) -> Result<f64, ControlError> {
    let state = assemble_on_manifold(ctrl.plant(), ctrl.target(), xi, qn, qn_dot)?;
    immersion_residual(ctrl, &state)
}

/// `|z| + |ż|` at an arbitrary state (integrator state zero).
pub fn immersion_residual(ctrl: &dyn Controller, state: &PlantState) -> Result<f64, ControlError> {
    let theta = ctrl.has_integrator().then(Point::zeros);
    let z = ctrl.off_manifold(state, theta.as_ref());
    let z_dot = off_manifold_rate(ctrl, state, theta.as_ref())?;
    Ok(z.norm() + z_dot.norm())
}

/// Result of the implicit-manifold check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldCheck {
    pub z_norm: f64,
    /// `|x − π(h(q), x)|`
    pub reconstruction_gap: f64,
    /// Largest singular value of `M 𝒜⁻¹`; `gap ≤ gap_factor · z_norm`.
    pub gap_factor: f64,
    /// Smallest singular value of `M 𝒜⁻¹`; `gap ≥ gap_floor · z_norm`.
    pub gap_floor: f64,
}

pub fn verify_implicit_manifold(
    plant: &dyn PlantModel,
    target: &TargetSpec,
    state: &PlantState,
) -> Result<ManifoldCheck, ControlError> {
    let z = off_manifold(plant, target, state);
    let (qy, qn) = plant.output_map(&state.q);
    let qn_dot = plant.internal_velocity(state);
    let rebuilt = assemble_on_manifold(plant, target, &qy, qn, qn_dot)?;
    let gap_q = (rebuilt.q - state.q).norm();
    let gap_p = (rebuilt.p - state.p).norm();
    let frame_inv = plant
        .coordinate_frame(&state.q)
        .try_inverse()
        .ok_or(ControlError::NonFinite)?;
    let sv = (plant.mass() * frame_inv).singular_values();
    Ok(ManifoldCheck {
        z_norm: z.norm(),
        reconstruction_gap: (gap_q * gap_q + gap_p * gap_p).sqrt(),
        gap_factor: sv.max(),
        gap_floor: sv.min(),
    })
}

/// Which law a controller kind denotes; used for config validation.
pub fn plant_for(kind: &str) -> Option<PlantKind> {
    match kind {
        "lti-ii" | "lti-comparison" => Some(PlantKind::Lti),
        "vessel-ii" | "vessel-integral" => Some(PlantKind::Vessel),
        _ => None,
    }
}
