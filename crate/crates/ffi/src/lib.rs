//! C ABI over `pathfollow`.
//!
//! Objects cross the boundary as opaque heap handles created by a `pf_*_new`
//! style constructor and released with the matching `pf_*_free`. Every
//! fallible call returns a [`PfStatus`]; on failure a message is available
//! from [`pf_last_error_message`] on the same thread. Absent optional values
//! are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::size_t;
use pathfollow::cli::{self, config::Scenario, CliError};
use pathfollow::sim::{MetricsReport, Trajectory};
use pathfollow::target::{TargetError, TargetSpec};
use pathfollow::{ImplicitCurve, Point};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    Diverged = 4,
    NumericError = 5,
    Panic = 6,
}

pub struct PfCurve(ImplicitCurve);

pub struct PfTarget(TargetSpec);

pub struct PfRun {
    trajectory: Trajectory,
    metrics: MetricsReport,
}

/// One recorded sample of a closed-loop run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PfRow {
    pub t: f64,
    pub q: [f64; 3],
    pub p: [f64; 3],
    pub qy: [f64; 2],
    pub qy_dot: [f64; 2],
    pub z: [f64; 2],
    pub phi: f64,
    pub u: [f64; 2],
    /// NaN without an integrator.
    pub theta: [f64; 2],
    /// NaN unless the plant has a gain monitor.
    pub gain_k: f64,
    pub qn_dot: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PfMetrics {
    pub samples: size_t,
    pub final_time: f64,
    pub final_abs_phi: f64,
    pub max_abs_state: f64,
    pub settling_time: f64,
    pub z_decay_rate: f64,
    pub min_speed_on_path: f64,
    pub invariance_drift: f64,
    pub qn_dot_bound: f64,
    pub tail_mean_abs_phi: f64,
    pub tail_max_abs_phi: f64,
    pub min_gain_k: f64,
    pub diverged: bool,
    pub diverged_at: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(PfStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Self(PfStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl ToString) -> Self {
        Self(PfStatus::InvalidArgument, msg.to_string())
    }
}

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Parse { .. } | CliError::Config(_) | CliError::UnknownScenario(_) => PfStatus::ConfigError,
            CliError::Diverged { .. } => PfStatus::Diverged,
            CliError::Io(_) | CliError::Sim(_) => PfStatus::NumericError,
        };
        Self(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F: FnOnce() -> Result<PfStatus, Failure>>(f: F) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PfStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure::invalid(format!("{what} is not UTF-8")))
}

fn opt(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Circle `|ξ − c|² − r²`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_curve_circle(cx: f64, cy: f64, radius: f64, out: *mut *mut PfCurve) -> PfStatus {
    guard(|| {
        let c = ImplicitCurve::circle(Point::new(cx, cy), radius).map_err(Failure::invalid)?;
        write_out(out, Box::into_raw(Box::new(PfCurve(c))), "out")?;
        Ok(PfStatus::Ok)
    })
}

/// Cassini oval with `b0 > a0 > 0`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_curve_cassini(a0: f64, b0: f64, out: *mut *mut PfCurve) -> PfStatus {
    guard(|| {
        let c = ImplicitCurve::cassini(a0, b0).map_err(Failure::invalid)?;
        write_out(out, Box::into_raw(Box::new(PfCurve(c))), "out")?;
        Ok(PfStatus::Ok)
    })
}

/// # Safety
/// `curve` must be NULL or a handle from a `pf_curve_*` constructor that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn pf_curve_free(curve: *mut PfCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// # Safety
/// `curve` must be a live handle; `out` valid for one `double`.
#[no_mangle]
pub unsafe extern "C" fn pf_curve_phi(curve: *const PfCurve, x: f64, y: f64, out: *mut f64) -> PfStatus {
    guard(|| {
        let c = as_ref(curve, "curve")?;
        let v = c.0.eval_phi(&Point::new(x, y)).map_err(Failure::invalid)?;
        write_out(out, v, "out")?;
        Ok(PfStatus::Ok)
    })
}

/// Gradient written to `out[0..2]`.
///
/// # Safety
/// `curve` must be a live handle; `out` valid for two `double`s.
#[no_mangle]
pub unsafe extern "C" fn pf_curve_grad(curve: *const PfCurve, x: f64, y: f64, out: *mut f64) -> PfStatus {
    guard(|| {
        let c = as_ref(curve, "curve")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let g = c.0.grad(&Point::new(x, y));
        std::slice::from_raw_parts_mut(out, 2).copy_from_slice(g.as_slice());
        Ok(PfStatus::Ok)
    })
}

/// Writes up to `capacity` critical points as `x, y` pairs into `out_xy` and
/// the total number found into `out_count`. `out_xy` may be NULL when
/// `capacity` is zero.
///
/// # Safety
/// `curve` must be a live handle; `out_xy` valid for `2 * capacity`
/// doubles; `out_count` valid for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn pf_curve_critical_points(
    curve: *const PfCurve,
    out_xy: *mut f64,
    capacity: size_t,
    out_count: *mut size_t,
) -> PfStatus {
    guard(|| {
        let c = as_ref(curve, "curve")?;
        let points = c.0.find_critical_points().map_err(|e| Failure(PfStatus::NumericError, e.to_string()))?;
        write_out(out_count, points.len(), "out_count")?;
        if capacity > 0 {
            if out_xy.is_null() {
                return Err(Failure::null("out_xy"));
            }
            let dst = std::slice::from_raw_parts_mut(out_xy, 2 * capacity);
            for (slot, p) in dst.chunks_exact_mut(2).zip(&points) {
                slot.copy_from_slice(p.as_slice());
            }
        }
        Ok(PfStatus::Ok)
    })
}

/// Oscillator on a copy of `curve` with constant speed `w` and damping
/// `r·I₂`.
///
/// # Safety
/// `curve` must be a live handle; `out` valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_target_new(curve: *const PfCurve, w: f64, r: f64, out: *mut *mut PfTarget) -> PfStatus {
    guard(|| {
        let c = as_ref(curve, "curve")?;
        let t = TargetSpec::new(c.0.clone())
            .with_speed(w)
            .and_then(|t| t.with_scalar_damping(r))
            .map_err(Failure::invalid)?;
        write_out(out, Box::into_raw(Box::new(PfTarget(t))), "out")?;
        Ok(PfStatus::Ok)
    })
}

/// # Safety
/// `target` must be NULL or a live handle from [`pf_target_new`].
#[no_mangle]
pub unsafe extern "C" fn pf_target_free(target: *mut PfTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// Oscillator vector field at `(x, y)`, written to `out[0..2]`.
///
/// # Safety
/// `target` must be a live handle; `out` valid for two doubles.
#[no_mangle]
pub unsafe extern "C" fn pf_target_alpha(target: *const PfTarget, x: f64, y: f64, out: *mut f64) -> PfStatus {
    guard(|| {
        let t = as_ref(target, "target")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let a = t.0.alpha(&Point::new(x, y), None);
        std::slice::from_raw_parts_mut(out, 2).copy_from_slice(a.as_slice());
        Ok(PfStatus::Ok)
    })
}

/// Integrates the oscillator from `(x0, y0)`; writes the final point to
/// `out_final[0..2]` and its `|Φ|` to `out_abs_phi`.
///
/// # Safety
/// `target` must be a live handle; `out_final` valid for two doubles and
/// `out_abs_phi` for one.
#[no_mangle]
pub unsafe extern "C" fn pf_target_simulate(
    target: *const PfTarget,
    x0: f64,
    y0: f64,
    horizon: f64,
    step: f64,
    out_final: *mut f64,
    out_abs_phi: *mut f64,
) -> PfStatus {
    guard(|| {
        let t = as_ref(target, "target")?;
        if out_final.is_null() {
            return Err(Failure::null("out_final"));
        }
        let traj = t.0.simulate(Point::new(x0, y0), horizon, step).map_err(|e| match e {
            TargetError::Diverged { .. } => Failure(PfStatus::Diverged, e.to_string()),
            other => Failure::invalid(other),
        })?;
        std::slice::from_raw_parts_mut(out_final, 2).copy_from_slice(traj.final_point().as_slice());
        write_out(out_abs_phi, traj.final_abs_phi(), "out_abs_phi")?;
        Ok(PfStatus::Ok)
    })
}

fn run_scenario(scenario: &Scenario) -> Result<(PfRun, bool), Failure> {
    if scenario.is_portrait() {
        return Err(Failure(PfStatus::ConfigError, "phase-portrait scenarios are not runnable here".into()));
    }
    let run = cli::simulate(scenario)?;
    let diverged = run.trajectory.diverged_at.is_some();
    Ok((PfRun { trajectory: run.trajectory, metrics: run.metrics }, diverged))
}

unsafe fn finish_run(result: (PfRun, bool), out: *mut *mut PfRun) -> Result<PfStatus, Failure> {
    let (run, diverged) = result;
    let at = run.trajectory.diverged_at;
    write_out(out, Box::into_raw(Box::new(run)), "out")?;
    if diverged {
        set_error(format!("run diverged at t = {}", opt(at)));
        return Ok(PfStatus::Diverged);
    }
    Ok(PfStatus::Ok)
}

/// Runs a closed-loop scenario given as TOML text. On `PF_STATUS_DIVERGED`
/// the truncated run is still returned in `out`.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_run_scenario(toml: *const c_char, out: *mut *mut PfRun) -> PfStatus {
    guard(|| {
        let text = c_str(toml, "toml")?;
        let scenario = Scenario::from_toml(text, "<ffi>")?;
        finish_run(run_scenario(&scenario)?, out)
    })
}

/// Runs a builtin closed-loop scenario by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` valid for one pointer.
#[no_mangle]
pub unsafe extern "C" fn pf_run_builtin(name: *const c_char, out: *mut *mut PfRun) -> PfStatus {
    guard(|| {
        let name = c_str(name, "name")?;
        let b = cli::BUILTINS
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Failure(PfStatus::ConfigError, format!("unknown builtin `{name}`")))?;
        let scenario = Scenario::from_toml(b.source, b.name)?;
        finish_run(run_scenario(&scenario)?, out)
    })
}

/// # Safety
/// `run` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_run_len(run: *const PfRun) -> size_t {
    run.as_ref().map_or(0, |r| r.trajectory.rows.len())
}

/// # Safety
/// `run` must be a live handle; `out` valid for one [`PfRow`].
#[no_mangle]
pub unsafe extern "C" fn pf_run_row(run: *const PfRun, index: size_t, out: *mut PfRow) -> PfStatus {
    guard(|| {
        let r = as_ref(run, "run")?;
        let row = r
            .trajectory
            .rows
            .get(index)
            .ok_or_else(|| Failure::invalid(format!("row {index} out of range")))?;
        let value = PfRow {
            t: row.t,
            q: row.q,
            p: row.p,
            qy: row.qy,
            qy_dot: row.qy_dot,
            z: row.z,
            phi: row.phi,
            u: row.u,
            theta: row.theta.unwrap_or([f64::NAN; 2]),
            gain_k: opt(row.gain_k),
            qn_dot: row.qn_dot,
        };
        write_out(out, value, "out")?;
        Ok(PfStatus::Ok)
    })
}

/// # Safety
/// `run` must be a live handle; `out` valid for one [`PfMetrics`].
#[no_mangle]
pub unsafe extern "C" fn pf_run_metrics(run: *const PfRun, out: *mut PfMetrics) -> PfStatus {
    guard(|| {
        let m = &as_ref(run, "run")?.metrics;
        let value = PfMetrics {
            samples: m.samples,
            final_time: m.final_time,
            final_abs_phi: m.final_abs_phi,
            max_abs_state: m.max_abs_state,
            settling_time: opt(m.settling_time),
            z_decay_rate: opt(m.z_decay_rate),
            min_speed_on_path: opt(m.min_speed_on_path),
            invariance_drift: opt(m.invariance_drift),
            qn_dot_bound: m.qn_dot_bound,
            tail_mean_abs_phi: m.tail_mean_abs_phi,
            tail_max_abs_phi: m.tail_max_abs_phi,
            min_gain_k: opt(m.min_gain_k),
            diverged: m.diverged,
            diverged_at: opt(m.diverged_at),
        };
        write_out(out, value, "out")?;
        Ok(PfStatus::Ok)
    })
}

/// # Safety
/// `run` must be NULL or a live handle from `pf_run_*`.
#[no_mangle]
pub unsafe extern "C" fn pf_run_free(run: *mut PfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
