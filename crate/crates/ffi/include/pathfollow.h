#ifndef PATHFOLLOW_H
#define PATHFOLLOW_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_POINTER = 1,
  PF_STATUS_INVALID_ARGUMENT = 2,
  PF_STATUS_CONFIG_ERROR = 3,
  PF_STATUS_DIVERGED = 4,
  PF_STATUS_NUMERIC_ERROR = 5,
  PF_STATUS_PANIC = 6,
} PfStatus;

typedef struct PfCurve PfCurve;

typedef struct PfRun PfRun;

typedef struct PfTarget PfTarget;

/**
 * One recorded sample of a closed-loop run.
 */
typedef struct PfRow {
  double t;
  double q[3];
  double p[3];
  double qy[2];
  double qy_dot[2];
  double z[2];
  double phi;
  double u[2];
  /**
   * NaN without an integrator.
   */
  double theta[2];
  /**
   * NaN unless the plant has a gain monitor.
   */
  double gain_k;
  double qn_dot;
} PfRow;

typedef struct PfMetrics {
  size_t samples;
  double final_time;
  double final_abs_phi;
  double max_abs_state;
  double settling_time;
  double z_decay_rate;
  double min_speed_on_path;
  double invariance_drift;
  double qn_dot_bound;
  double tail_mean_abs_phi;
  double tail_max_abs_phi;
  double min_gain_k;
  bool diverged;
  double diverged_at;
} PfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pf_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *pf_last_error_message(void);

/**
 * Circle `|ξ − c|² − r²`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum PfStatus pf_curve_circle(double cx, double cy, double radius, struct PfCurve **out);

/**
 * Cassini oval with `b0 > a0 > 0`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum PfStatus pf_curve_cassini(double a0, double b0, struct PfCurve **out);

/**
 * # Safety
 * `curve` must be NULL or a handle from a `pf_curve_*` constructor that has
 * not been freed.
 */
void pf_curve_free(struct PfCurve *curve);

/**
 * # Safety
 * `curve` must be a live handle; `out` valid for one `double`.
 */
enum PfStatus pf_curve_phi(const struct PfCurve *curve, double x, double y, double *out);

/**
 * Gradient written to `out[0..2]`.
 *
 * # Safety
 * `curve` must be a live handle; `out` valid for two `double`s.
 */
enum PfStatus pf_curve_grad(const struct PfCurve *curve, double x, double y, double *out);

/**
 * Writes up to `capacity` critical points as `x, y` pairs into `out_xy` and
 * the total number found into `out_count`. `out_xy` may be NULL when
 * `capacity` is zero.
 *
 * # Safety
 * `curve` must be a live handle; `out_xy` valid for `2 * capacity`
 * doubles; `out_count` valid for one `size_t`.
 */
enum PfStatus pf_curve_critical_points(const struct PfCurve *curve,
                                       double *out_xy,
                                       size_t capacity,
                                       size_t *out_count);

/**
 * Oscillator on a copy of `curve` with constant speed `w` and damping
 * `r·I₂`.
 *
 * # Safety
 * `curve` must be a live handle; `out` valid for writing one pointer.
 */
enum PfStatus pf_target_new(const struct PfCurve *curve, double w, double r, struct PfTarget **out);

/**
 * # Safety
 * `target` must be NULL or a live handle from [`pf_target_new`].
 */
void pf_target_free(struct PfTarget *target);

/**
 * Oscillator vector field at `(x, y)`, written to `out[0..2]`.
 *
 * # Safety
 * `target` must be a live handle; `out` valid for two doubles.
 */
enum PfStatus pf_target_alpha(const struct PfTarget *target, double x, double y, double *out);

/**
 * Integrates the oscillator from `(x0, y0)`; writes the final point to
 * `out_final[0..2]` and its `|Φ|` to `out_abs_phi`.
 *
 * # Safety
 * `target` must be a live handle; `out_final` valid for two doubles and
 * `out_abs_phi` for one.
 */
enum PfStatus pf_target_simulate(const struct PfTarget *target,
                                 double x0,
                                 double y0,
                                 double horizon,
                                 double step,
                                 double *out_final,
                                 double *out_abs_phi);

/**
 * Runs a closed-loop scenario given as TOML text. On `PF_STATUS_DIVERGED`
 * the truncated run is still returned in `out`.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` valid for one pointer.
 */
enum PfStatus pf_run_scenario(const char *toml, struct PfRun **out);

/**
 * Runs a builtin closed-loop scenario by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` valid for one pointer.
 */
enum PfStatus pf_run_builtin(const char *name, struct PfRun **out);

/**
 * # Safety
 * `run` must be NULL or a live handle.
 */
size_t pf_run_len(const struct PfRun *run);

/**
 * # Safety
 * `run` must be a live handle; `out` valid for one [`PfRow`].
 */
enum PfStatus pf_run_row(const struct PfRun *run, size_t index, struct PfRow *out);

/**
 * # Safety
 * `run` must be a live handle; `out` valid for one [`PfMetrics`].
 */
enum PfStatus pf_run_metrics(const struct PfRun *run, struct PfMetrics *out);

/**
 * # Safety
 * `run` must be NULL or a live handle from `pf_run_*`.
 */
void pf_run_free(struct PfRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATHFOLLOW_H */
