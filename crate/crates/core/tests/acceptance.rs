//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints its `criterion N ...: PASS|FAIL` line even under a
//! plain `cargo test`; the process fails if any criterion does.

use std::time::Instant;

use nalgebra::{Matrix2, Vector3};
use pathfollow::cli::{self, config::Scenario};
use pathfollow::control::{
    assemble_on_manifold, verify_immersion, verify_implicit_manifold, Controller, LtiIIController,
    VesselIIController,
};
use pathfollow::plants::{LtiPlant, PlantModel, PlantState, VesselParams, VesselPlant};
use pathfollow::sim::{rk4_step, tail_mean_radius, MetricsReport, SimError, Trajectory};
use pathfollow::target::TargetSpec;
use pathfollow::{ImplicitCurve, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, title: &str, ok: bool, detail: String) -> bool {
    println!("criterion {n} [{title}]: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    ok
}

fn builtin(name: &str) -> Scenario {
    cli::load_scenario(name).expect("builtin scenario")
}

fn run(scenario: &Scenario) -> (Trajectory, MetricsReport) {
    let out = cli::simulate(scenario).expect("closed-loop run");
    (out.trajectory, out.metrics)
}

fn circle_target(radius: f64, w: f64, r: f64) -> TargetSpec {
    TargetSpec::new(ImplicitCurve::circle(Point::zeros(), radius).unwrap())
        .with_speed(w)
        .unwrap()
        .with_scalar_damping(r)
        .unwrap()
}

fn lti_controller() -> LtiIIController {
    LtiIIController::new(LtiPlant::benchmark(1.0).unwrap(), circle_target(1.0, 0.5, 0.5), 2.0).unwrap()
}

fn vessel_controller() -> VesselIIController {
    let plant = VesselPlant::new(VesselParams::default()).unwrap();
    VesselIIController::new(plant, circle_target(100.0, 0.04, 1e-5), 0.1).unwrap()
}

fn criterion_1_oscillator_convergence() -> bool {
    let target = circle_target(1.0, 1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seeds = Vec::with_capacity(100);
    while seeds.len() < 100 {
        let p = Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        if target.curve().phi(&p).abs() <= 3.0 && p.norm() > 1e-3 {
            seeds.push(p);
        }
    }
    let start = Instant::now();
    let trajs = target.phase_portrait(&seeds, 20.0, 0.01).expect("portrait");
    let elapsed = start.elapsed().as_secs_f64();
    let worst = trajs.iter().map(|t| t.final_abs_phi()).fold(0.0, f64::max);
    verdict(
        1,
        "oscillator convergence",
        worst < 1e-6 && elapsed < 5.0,
        format!("worst final |Φ| = {worst:.2e} over 100 seeds, {elapsed:.2} s wall"),
    )
}

fn criterion_2_cassini_critical_set() -> bool {
    let curve = ImplicitCurve::cassini(1.0, 1.2).unwrap();
    let mut found = curve.find_critical_points().unwrap();
    found.sort_by(|a, b| a.x.total_cmp(&b.x));
    let expected = [Point::new(-1.0, 0.0), Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
    let exact = found.len() == 3 && found.iter().zip(&expected).all(|(a, b)| (a - b).norm() < 1e-8);

    let report = curve.check_assumption1().unwrap();
    let negative = report.values.iter().all(|v| *v < 0.0);

    let portrait = cli::simulate_portrait(&builtin("fig2-cassini"), 0).expect("portrait");
    let converged = portrait.report.converged;
    verdict(
        2,
        "cassini critical set",
        exact && report.holds && negative && portrait.report.seeds == 24 && converged >= 22,
        format!(
            "critical points {:?}, assumption holds = {}, values {:?}, {converged}/{} seeds converged",
            found.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
            report.holds,
            report.values,
            portrait.report.seeds
        ),
    )
}

fn criterion_3_exact_z_decay() -> bool {
    let (_, lti) = run(&builtin("fig3-lti"));
    let (_, vessel) = run(&builtin("fig4-vessel"));
    let lti_rate = lti.z_decay_rate.unwrap_or(f64::NAN);
    let vessel_rate = vessel.z_decay_rate.unwrap_or(f64::NAN);
    let ok = ((lti_rate - 2.0) / 2.0).abs() < 0.02 && ((vessel_rate - 0.1) / 0.1).abs() < 0.02;
    verdict(
        3,
        "exact z decay",
        ok,
        format!("fitted rate lti {lti_rate:.5} (k = 2), vessel {vessel_rate:.5} (k = 0.1)"),
    )
}

fn criterion_4_lti_scenario() -> bool {
    let (traj, m) = run(&builtin("fig3-lti"));
    let max_q3 = traj.rows.iter().map(|r| r.q[2].abs()).fold(0.0, f64::max);
    let max_q3_dot = traj.rows.iter().map(|r| r.qn_dot.abs()).fold(0.0, f64::max);
    let min_speed = m.min_speed_on_path.unwrap_or(0.0);
    let ok = m.final_time >= 30.0 - 1e-9
        && m.final_abs_phi < 1e-4
        && max_q3.is_finite()
        && max_q3 < 10.0
        && max_q3_dot < 10.0
        && min_speed > 0.0;
    verdict(
        4,
        "lti scenario",
        ok,
        format!(
            "final |Φ| = {:.2e} at t = {}, max|q3| = {max_q3:.3}, max|q3'| = {max_q3_dot:.3}, min speed on path = {min_speed:.3}",
            m.final_abs_phi, m.final_time
        ),
    )
}

fn orbit_radius(controller: &str, x: f64) -> f64 {
    let mut s = builtin(if controller == "comparison" { "fig3-comparison" } else { "fig3-lti" });
    let q = LtiPlant::benchmark(1.0).unwrap().config_from_output(&Point::new(x, 0.0), 0.0);
    let initial = s.initial.as_mut().unwrap();
    initial.q = [q[0], q[1], q[2]];
    initial.p = [0.0; 3];
    let (traj, _) = run(&s);
    tail_mean_radius(&traj, &Point::zeros(), 0.25)
}

fn criterion_5_comparison_ic_dependence() -> bool {
    let (c_far, c_near) = (orbit_radius("comparison", 1.5), orbit_radius("comparison", 0.5));
    let (i_far, i_near) = (orbit_radius("ii", 1.5), orbit_radius("ii", 0.5));
    let spread = (c_far - c_near).abs() / c_far.max(c_near);
    let agree = (i_far - i_near).abs() / i_far.max(i_near);
    let ok = spread > 0.05 && agree < 1e-3 && (i_far - 1.0).abs() < 1e-3 && (i_near - 1.0).abs() < 1e-3;
    verdict(
        5,
        "comparison law depends on initial condition",
        ok,
        format!(
            "comparison radii {c_far:.4} vs {c_near:.4} ({:.1}% apart); immersion law {i_far:.7} vs {i_near:.7}",
            100.0 * spread
        ),
    )
}

fn criterion_6_vessel_scenario() -> bool {
    let (traj, m) = run(&builtin("fig4-vessel"));
    let settle = m.settling_time;
    let after = settle.map_or(f64::INFINITY, |ts| {
        traj.rows.iter().filter(|r| r.t >= ts).map(|r| r.phi.abs()).fold(0.0, f64::max)
    });
    let min_k = m.min_gain_k.unwrap_or(f64::NAN);
    let ok = after / 1e4 < 1e-3
        && m.nonpositive_gain_samples == 0
        && min_k > 0.0
        && m.qn_dot_bound.is_finite()
        && m.qn_dot_bound < 1.0
        && !m.diverged;
    verdict(
        6,
        "vessel scenario",
        ok,
        format!(
            "settling {:?} s, max |Φ|/1e4 after = {:.2e}, min K = {min_k:.4}, nonpositive K samples = {}, max|q3'| = {:.4}",
            settle,
            after / 1e4,
            m.nonpositive_gain_samples,
            m.qn_dot_bound
        ),
    )
}

fn criterion_7_current_and_integral_action() -> bool {
    let (_, clean) = run(&builtin("fig4-vessel"));
    let (_, current) = run(&builtin("fig5-current"));
    let (traj, integral) = run(&builtin("fig6-integral"));
    let theta = traj.rows.last().and_then(|r| r.theta).unwrap_or([f64::NAN; 2]);
    let offset_ok = !current.diverged
        && current.tail_max_abs_phi.is_finite()
        && current.tail_mean_abs_phi > 10.0 * clean.tail_mean_abs_phi.max(f64::MIN_POSITIVE);
    let integral_ok = !integral.diverged && integral.tail_max_abs_phi / 1e4 < 1e-3;
    verdict(
        7,
        "current offset removed by integral action",
        offset_ok && integral_ok,
        format!(
            "steady |Φ|: no current {:.2e}, static law with current {:.2e}, integral law {:.2e} (θ → [{:.4}, {:.4}])",
            clean.tail_mean_abs_phi, current.tail_mean_abs_phi, integral.tail_max_abs_phi, theta[0], theta[1]
        ),
    )
}

fn criterion_8_manifold_verifiers() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lti = lti_controller();
    let vessel = vessel_controller();
    let cases: [(&dyn Controller, f64); 2] = [(&lti, 1.0), (&vessel, 100.0)];

    let mut worst_residual: f64 = 0.0;
    for (ctrl, scale) in cases {
        for _ in 0..100 {
            let xi = Point::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)) * scale;
            let qn = rng.gen_range(-3.0..3.0);
            let qn_dot = rng.gen_range(-0.5..0.5);
            worst_residual = worst_residual.max(verify_immersion(ctrl, &xi, qn, qn_dot).unwrap());
        }
    }

    let mut counterexamples = 0;
    let mut on_manifold = 0;
    for k in 0..1000 {
        let (ctrl, scale) = cases[k % 2];
        let plant = ctrl.plant();
        let target = ctrl.target();
        let xi = Point::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)) * scale;
        let qn = rng.gen_range(-3.0..3.0);
        let qn_dot = rng.gen_range(-0.5..0.5);
        let base = assemble_on_manifold(plant, target, &xi, qn, qn_dot).unwrap();
        let state = match k % 3 {
            0 => base,
            1 => {
                // shift the output velocity by a known amount
                let size = 10f64.powf(rng.gen_range(-3.0..0.0));
                let dir = rng.gen_range(0.0..std::f64::consts::TAU);
                let kappa = target.alpha(&xi, None) + Point::new(dir.cos(), dir.sin()) * size;
                let p = plant.momenta_for(&base.q, &kappa, qn_dot).unwrap();
                PlantState::new(base.q, p)
            }
            _ => {
                let p = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)).component_mul(&plant.mass().diagonal());
                PlantState::new(base.q, p)
            }
        };
        let check = verify_implicit_manifold(plant, target, &state).unwrap();
        let small_z = check.z_norm < 1e-9;
        let small_gap = check.reconstruction_gap < 1e-6 * check.gap_factor;
        on_manifold += usize::from(small_z);
        if small_z != small_gap {
            counterexamples += 1;
        }
    }
    verdict(
        8,
        "manifold verifiers",
        worst_residual < 1e-8 && counterexamples == 0,
        format!(
            "worst immersion residual {worst_residual:.2e} over 200 samples; {counterexamples} counterexamples in 1000 states ({on_manifold} on the manifold)"
        ),
    )
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let size = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / size.max(1e-8)
}

fn fd_gradient(f: impl Fn(&Point) -> f64, p: &Point, h: f64) -> [f64; 2] {
    let e = |i: usize| if i == 0 { Point::new(h, 0.0) } else { Point::new(0.0, h) };
    [0, 1].map(|i| (f(&(p + e(i))) - f(&(p - e(i)))) / (2.0 * h))
}

fn fd_jacobian2(f: impl Fn(&Point) -> Point, p: &Point, h: f64) -> Matrix2<f64> {
    let e = |i: usize| if i == 0 { Point::new(h, 0.0) } else { Point::new(0.0, h) };
    let cols = [0, 1].map(|i| (f(&(p + e(i))) - f(&(p - e(i)))) / (2.0 * h));
    Matrix2::from_columns(&cols)
}

fn rk4_error(h: f64) -> f64 {
    let f = |_t: f64, x: &[f64]| -> Result<Vec<f64>, SimError> { Ok(vec![x[1], -x[0]]) };
    let n = (1.0 / h).round() as usize;
    let mut x = vec![1.0, 0.0];
    for i in 0..n {
        x = rk4_step(f, i as f64 * h, &x, h).unwrap();
    }
    (x[0] - 1f64.cos()).hypot(x[1] + 1f64.sin())
}

fn criterion_9_numerics_hygiene() -> bool {
    let ratios = [rk4_error(0.1) / rk4_error(0.05), rk4_error(0.05) / rk4_error(0.025)];
    let order_ok = ratios.iter().all(|r| (14.0..18.0).contains(r));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let lti = lti_controller();
    let targets = [
        circle_target(1.0, 0.5, 0.5),
        TargetSpec::new(ImplicitCurve::cassini(1.0, 1.2).unwrap()).with_speed(1.0).unwrap(),
        circle_target(100.0, 0.04, 1e-5),
    ];
    for target in &targets {
        let scale = target.curve().scale();
        let h = 1e-5 * scale;
        let curve = target.curve();
        for _ in 0..100 {
            let p = Point::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)) * scale;
            let grad_vd = target.grad_vd(&p);
            let phi_grad = curve.grad(&p) * curve.phi(&p);
            worst = worst.max(rel_err(grad_vd.as_slice(), phi_grad.as_slice()));
            worst = worst.max(rel_err(grad_vd.as_slice(), &fd_gradient(|x| target.vd(x), &p, h)));
            worst = worst.max(rel_err(curve.grad(&p).as_slice(), &fd_gradient(|x| curve.phi(x), &p, h)));
            let hess_fd = fd_jacobian2(|x| curve.grad(x), &p, h);
            worst = worst.max(rel_err(curve.hess(&p).as_slice(), hess_fd.as_slice()));
            let jac_fd = fd_jacobian2(|x| target.alpha(x, None), &p, h);
            worst = worst.max(rel_err(target.alpha_jacobian(&p).unwrap().as_slice(), jac_fd.as_slice()));
        }
    }
    for _ in 0..100 {
        let q = Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        let h = 1e-5;
        let mut fd = nalgebra::Matrix2x3::zeros();
        for i in 0..3 {
            let e = Vector3::ith(i, h);
            fd.set_column(i, &((lti.l_map(&(q + e)) - lti.l_map(&(q - e))) / (2.0 * h)));
        }
        worst = worst.max(rel_err(lti.l_jacobian(&q).as_slice(), fd.as_slice()));
    }
    verdict(
        9,
        "numerics hygiene",
        order_ok && worst < 1e-5,
        format!("rk4 step-halving ratios {:.2}, {:.2}; worst relative derivative error {worst:.2e}", ratios[0], ratios[1]),
    )
}

fn main() {
    let checks: [fn() -> bool; 9] = [
        criterion_1_oscillator_convergence,
        criterion_2_cassini_critical_set,
        criterion_3_exact_z_decay,
        criterion_4_lti_scenario,
        criterion_5_comparison_ic_dependence,
        criterion_6_vessel_scenario,
        criterion_7_current_and_integral_action,
        criterion_8_manifold_verifiers,
        criterion_9_numerics_hygiene,
    ];
    let failed = checks.iter().filter(|check| !check()).count();
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
