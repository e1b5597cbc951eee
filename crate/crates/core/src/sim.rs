//! Fixed-step RK4 integration of the closed loop and trajectory metrics.

use nalgebra::{Vector2, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::control::{ControlError, Controller};
use crate::curves::Point;
use crate::plants::{PlantKind, PlantState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// One classical Runge–Kutta step of `ẋ = f(t, x)`.
///
/// Fails without producing a state when any stage derivative is not finite.
pub fn rk4_step<F>(mut f: F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>, SimError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, SimError>,
{
    let n = x.len();
    let finite = |d: Vec<f64>, t: f64| {
        if d.len() == n && d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(SimError::NonFinite { t })
        }
    };
    let axpy = |a: f64, d: &[f64]| -> Vec<f64> { x.iter().zip(d).map(|(xi, di)| xi + a * di).collect() };

    let k1 = finite(f(t, x)?, t)?;
    let k2 = finite(f(t + 0.5 * h, &axpy(0.5 * h, &k1))?, t)?;
    let k3 = finite(f(t + 0.5 * h, &axpy(0.5 * h, &k2))?, t)?;
    let k4 = finite(f(t + h, &axpy(h, &k3))?, t)?;
    Ok((0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    pub record_stride: usize,
    /// Escape radius around the curve's box center, in multiples of the
    /// curve scale.
    pub divergence_bound: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { step: 0.01, horizon: 30.0, record_stride: 1, divergence_bound: 100.0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(SimError::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon == 0.0 || self.horizon >= self.step) || !self.horizon.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "horizon must be zero or at least one step, got {}",
                self.horizon
            )));
        }
        if self.record_stride == 0 {
            return Err(SimError::InvalidConfig("record_stride must be at least 1".into()));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(SimError::InvalidConfig("divergence_bound must be positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }
}

/// A recorded sample. `q` is stored unwrapped; writers wrap the vessel
/// heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: [f64; 3],
    pub p: [f64; 3],
    pub qy: [f64; 2],
    pub qy_dot: [f64; 2],
    pub z: [f64; 2],
    pub phi: f64,
    pub u: [f64; 2],
    pub theta: Option<[f64; 2]>,
    pub gain_k: Option<f64>,
    pub qn_dot: f64,
}

impl TrajectoryRow {
    pub fn z_norm(&self) -> f64 {
        self.z[0].hypot(self.z[1])
    }

    pub fn speed(&self) -> f64 {
        self.qy_dot[0].hypot(self.qy_dot[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub plant: PlantKind,
    pub rows: Vec<TrajectoryRow>,
    /// Time of the last good sample when the run left the divergence box.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }
}

fn sample(ctrl: &dyn Controller, t: f64, x: &[f64]) -> Result<TrajectoryRow, SimError> {
    let plant = ctrl.plant();
    let state = PlantState::from_slice(&x[..6]);
    let theta = ctrl.has_integrator().then(|| Point::new(x[6], x[7]));
    let out = ctrl.feedback(&state, theta.as_ref())?;
    let (qy, _) = plant.output_map(&state.q);
    let qy_dot = plant.output_velocity(&state);
    let z = ctrl.off_manifold(&state, theta.as_ref());
    Ok(TrajectoryRow {
        t,
        q: state.q.into(),
        p: state.p.into(),
        qy: qy.into(),
        qy_dot: qy_dot.into(),
        z: z.into(),
        phi: ctrl.target().curve().phi(&qy),
        u: out.u.into(),
        theta: theta.map(Into::into),
        gain_k: ctrl.gain_monitor(&state).map(|m| m.k),
        qn_dot: plant.internal_velocity(&state),
    })
}

/// Integrates the closed loop `ẋ = f(x, β(x))`, with `θ` appended to the
/// state for integral controllers. Feedback is evaluated at every RK4 stage.
///
/// Leaving the divergence box or a non-finite derivative ends the run early
/// and sets `diverged_at`; the trajectory keeps every good sample.
pub fn run_closed_loop(
    ctrl: &dyn Controller,
    cfg: &SimConfig,
    x0: PlantState,
    theta0: Option<Point>,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    if !x0.is_finite() {
        return Err(SimError::NonFinite { t: 0.0 });
    }
    let plant = ctrl.plant();
    let mut x: Vec<f64> = x0.to_array().to_vec();
    if ctrl.has_integrator() {
        let th = theta0.unwrap_or_default();
        x.extend([th.x, th.y]);
    }

    let curve = ctrl.target().curve();
    let center = curve.domain_box().center();
    let bound = cfg.divergence_bound * curve.scale();
    let escaped = |x: &[f64]| {
        let (qy, _) = plant.output_map(&Vector3::new(x[0], x[1], x[2]));
        (qy - center).norm() > bound
    };

    let field = |_t: f64, s: &[f64]| -> Result<Vec<f64>, SimError> {
        let state = PlantState::from_slice(&s[..6]);
        let theta = ctrl.has_integrator().then(|| Point::new(s[6], s[7]));
        let out = ctrl.feedback(&state, theta.as_ref())?;
        let d = plant.rhs(&state, &out.u).map_err(ControlError::from)?;
        let mut v = d.to_array().to_vec();
        if let Some(td) = out.theta_dot {
            v.extend([td.x, td.y]);
        }
        Ok(v)
    };

    let n = cfg.steps();
    let mut rows = Vec::with_capacity(n / cfg.record_stride + 2);
    rows.push(sample(ctrl, 0.0, &x)?);
    let mut diverged_at = None;
    for k in 0..n {
        let t = k as f64 * cfg.step;
        let next = match rk4_step(field, t, &x, cfg.step) {
            Ok(next) => Some(next),
            Err(SimError::NonFinite { .. }) | Err(SimError::Control(ControlError::Plant(_))) => None,
            Err(e) => return Err(e),
        }
        .filter(|next| next.iter().all(|v| v.is_finite()) && !escaped(next));
        let Some(next) = next else {
            diverged_at = Some(t);
            if rows.last().map(|r: &TrajectoryRow| r.t) != Some(t) {
                rows.push(sample(ctrl, t, &x)?);
            }
            break;
        };
        let t_next = (k + 1) as f64 * cfg.step;
        x = next;
        if (k + 1) % cfg.record_stride == 0 || k + 1 == n {
            rows.push(sample(ctrl, t_next, &x)?);
        }
    }
    Ok(Trajectory { plant: plant.kind(), rows, diverged_at })
}

/// Path-following diagnostics of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub final_time: f64,
    pub final_abs_phi: f64,
    pub max_abs_state: f64,
    pub settling_time: Option<f64>,
    pub z_decay_rate: Option<f64>,
    pub min_speed_on_path: Option<f64>,
    pub invariance_drift: Option<f64>,
    pub qn_dot_bound: f64,
    /// Mean and max of `|Φ|` over the last quarter of the run.
    pub tail_mean_abs_phi: f64,
    pub tail_max_abs_phi: f64,
    pub min_gain_k: Option<f64>,
    pub nonpositive_gain_samples: usize,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
}

/// Least-squares slope of `ln|z|` against `t`, negated.
fn decay_rate(rows: &[TrajectoryRow]) -> Option<f64> {
    let z0 = rows.first()?.z_norm();
    let hi = 0.5 * z0;
    let lo = 1e-8;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| {
            let z = r.z_norm();
            z >= lo && z <= hi
        })
        .map(|r| (r.t, r.z_norm().ln()))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sty, stt) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    (stt > 0.0).then(|| -sty / stt)
}

/// Computes the report; `tol` is the on-path threshold on `|Φ|`.
pub fn compute_metrics(traj: &Trajectory, tol: f64) -> Result<MetricsReport, SimError> {
    let rows = &traj.rows;
    let last = rows.last().ok_or(SimError::EmptyTrajectory)?;

    let max_abs_state = rows
        .iter()
        .flat_map(|r| r.q.iter().chain(r.p.iter()))
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let qn_dot_bound = rows.iter().fold(0.0_f64, |m, r| m.max(r.qn_dot.abs()));

    // last index at which |Φ| ≥ tol; settled after it
    let settling_time = if traj.diverged() {
        None
    } else {
        match rows.iter().rposition(|r| r.phi.abs() >= tol) {
            None => Some(rows[0].t),
            Some(i) if i + 1 < rows.len() => Some(rows[i + 1].t),
            Some(_) => None,
        }
    };

    let entry = rows.iter().position(|r| r.phi.abs() < tol);
    let (min_speed_on_path, invariance_drift) = match entry {
        Some(i) => {
            let on_path = rows.iter().filter(|r| r.phi.abs() < tol);
            let min_speed = on_path.map(TrajectoryRow::speed).fold(f64::INFINITY, f64::min);
            let drift = rows[i..].iter().fold(0.0_f64, |m, r| m.max(r.phi.abs()));
            (Some(min_speed), Some(drift))
        }
        None => (None, None),
    };

    let tail = &rows[rows.len() - rows.len().div_ceil(4)..];
    let tail_mean_abs_phi = tail.iter().map(|r| r.phi.abs()).sum::<f64>() / tail.len() as f64;
    let tail_max_abs_phi = tail.iter().fold(0.0_f64, |m, r| m.max(r.phi.abs()));

    let gains: Vec<f64> = rows.iter().filter_map(|r| r.gain_k).collect();
    let min_gain_k = gains.iter().copied().reduce(f64::min);

    Ok(MetricsReport {
        samples: rows.len(),
        final_time: last.t,
        final_abs_phi: last.phi.abs(),
        max_abs_state,
        settling_time,
        z_decay_rate: decay_rate(rows),
        min_speed_on_path,
        invariance_drift,
        qn_dot_bound,
        tail_mean_abs_phi,
        tail_max_abs_phi,
        min_gain_k,
        nonpositive_gain_samples: gains.iter().filter(|k| **k <= 0.0).count(),
        diverged: traj.diverged(),
        diverged_at: traj.diverged_at,
    })
}

/// Mean distance of the output from `center` over the last `fraction` of
/// the recorded samples.
pub fn tail_mean_radius(traj: &Trajectory, center: &Point, fraction: f64) -> f64 {
    let rows = &traj.rows;
    let n = ((rows.len() as f64 * fraction).ceil() as usize).clamp(1, rows.len().max(1));
    let tail = &rows[rows.len().saturating_sub(n)..];
    tail.iter()
        .map(|r| (Vector2::new(r.qy[0], r.qy[1]) - center).norm())
        .sum::<f64>()
        / tail.len() as f64
}
