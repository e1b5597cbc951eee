//! Scenario runner: `run`, `list` and `sweep`.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 configuration or
//! usage error, 3 divergence.

pub mod config;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::curves::Point;
use crate::sim::{compute_metrics, run_closed_loop, MetricsReport, SimError, Trajectory};
use crate::target::{TargetError, TargetTrajectory};
use config::{ClosedLoop, ControllerConfig, PlantConfig, Scenario, Seeding, SimSection};

pub const OUTPUT_DIR_ENV: &str = "OF_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse { origin: String, line: usize, column: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("`{0}` is neither a scenario file nor a builtin (see `list`)")]
    UnknownScenario(String),
    #[error("run diverged at t = {t}")]
    Diverged { t: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Config(_) | Self::UnknownScenario(_) => 2,
            Self::Diverged { .. } => 3,
            Self::Io(_) | Self::Sim(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Builtin {
    pub name: &'static str,
    pub description: &'static str,
    #[serde(skip)]
    pub source: &'static str,
}

macro_rules! builtin {
    ($name:literal, $desc:literal) => {
        Builtin { name: $name, description: $desc, source: include_str!(concat!("../../scenarios/", $name, ".toml")) }
    };
}

pub const BUILTINS: [Builtin; 6] = [
    builtin!("fig2-cassini", "Oscillator phase portrait on the Cassini oval (a0=1, b0=1.2)"),
    builtin!("fig3-lti", "LTI benchmark, I&I path-following law, unit circle"),
    builtin!("fig3-comparison", "LTI benchmark, orbital-stabilisation comparison law"),
    builtin!("fig4-vessel", "Surface vessel on a 100 m circle, static law, no current"),
    builtin!("fig5-current", "Surface vessel, static law, current (2, 1) m/s"),
    builtin!("fig6-integral", "Surface vessel, integral law, current (5, 1) m/s"),
];

/// A file path if one exists, else a builtin name.
pub fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        return Scenario::from_toml(&text, arg);
    }
    BUILTINS
        .iter()
        .find(|b| b.name == arg)
        .map(|b| Scenario::from_toml(b.source, b.name))
        .unwrap_or_else(|| Err(CliError::UnknownScenario(arg.to_string())))
}

/// Closed-loop result without any file output.
#[derive(Debug)]
pub struct ClosedLoopRun {
    pub setup: ClosedLoop,
    pub trajectory: Trajectory,
    pub metrics: MetricsReport,
}

pub fn simulate(scenario: &Scenario) -> Result<ClosedLoopRun, CliError> {
    let setup = scenario.build_closed_loop()?;
    let trajectory = run_closed_loop(setup.controller.as_ref(), &setup.sim, setup.x0, setup.theta0)?;
    let metrics = compute_metrics(&trajectory, setup.tol)?;
    Ok(ClosedLoopRun { setup, trajectory, metrics })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedReport {
    pub seed_id: usize,
    pub xi0: [f64; 2],
    pub final_abs_phi: Option<f64>,
    pub diverged_at: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PortraitReport {
    pub scenario: String,
    pub tol: f64,
    pub seeds: usize,
    pub converged: usize,
    pub diverged: usize,
    pub critical_points: Vec<[f64; 2]>,
    pub critical_values: Vec<f64>,
    pub assumption1_holds: bool,
    pub per_seed: Vec<SeedReport>,
}

#[derive(Debug)]
pub struct PortraitRun {
    pub report: PortraitReport,
    pub trajectories: Vec<(usize, TargetTrajectory)>,
    pub critical: Vec<Point>,
}

/// Grid seeds at cell centres of the seed box, row-major; or uniform random
/// seeds from `seed`.
pub fn portrait_seeds(scenario: &Scenario, seed: u64) -> Result<Vec<Point>, CliError> {
    let cfg = scenario.portrait.ok_or_else(|| CliError::Config("missing [portrait] section".into()))?;
    let curve = scenario.build_curve()?;
    let b = curve.bounding_box().scaled(cfg.extent);
    let (lo, span) = (Point::from(b.min), Point::from(b.max) - Point::from(b.min));
    Ok(match cfg.seeding {
        Seeding::Grid => {
            let [nx, ny] = cfg.grid;
            (0..ny)
                .flat_map(|j| {
                    (0..nx).map(move |i| {
                        lo + Point::new(
                            span.x * (i as f64 + 0.5) / nx as f64,
                            span.y * (j as f64 + 0.5) / ny as f64,
                        )
                    })
                })
                .collect()
        }
        Seeding::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..cfg.count)
                .map(|_| lo + Point::new(span.x * rng.gen::<f64>(), span.y * rng.gen::<f64>()))
                .collect()
        }
    })
}

pub fn simulate_portrait(scenario: &Scenario, seed: u64) -> Result<PortraitRun, CliError> {
    let cfg = scenario.portrait.ok_or_else(|| CliError::Config("missing [portrait] section".into()))?;
    if cfg.record_stride == 0 || cfg.tol <= 0.0 {
        return Err(CliError::Config("[portrait] record_stride and tol must be positive".into()));
    }
    let target = scenario.build_target()?;
    let seeds = portrait_seeds(scenario, seed)?;
    if seeds.is_empty() {
        return Err(CliError::Config("[portrait] produces no seeds".into()));
    }
    let results: Vec<Result<TargetTrajectory, TargetError>> =
        seeds.par_iter().map(|s| target.simulate(*s, cfg.horizon, cfg.step)).collect();

    let assumption = target
        .curve()
        .check_assumption1()
        .map_err(|e| CliError::Config(format!("[curve] {e}")))?;
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut trajectories = Vec::new();
    for (id, (s, r)) in seeds.iter().zip(results).enumerate() {
        match r {
            Ok(t) => {
                per_seed.push(SeedReport { seed_id: id, xi0: [s.x, s.y], final_abs_phi: Some(t.final_abs_phi()), diverged_at: None });
                trajectories.push((id, t));
            }
            Err(TargetError::Diverged { t }) => {
                per_seed.push(SeedReport { seed_id: id, xi0: [s.x, s.y], final_abs_phi: None, diverged_at: Some(t) });
            }
            Err(e) => return Err(CliError::Config(format!("[portrait] {e}"))),
        }
    }
    let converged = per_seed.iter().filter(|s| s.final_abs_phi.is_some_and(|v| v < cfg.tol)).count();
    let diverged = per_seed.iter().filter(|s| s.diverged_at.is_some()).count();
    let report = PortraitReport {
        scenario: scenario.scenario.name.clone(),
        tol: cfg.tol,
        seeds: seeds.len(),
        converged,
        diverged,
        critical_points: assumption.points.iter().map(|p| [p.x, p.y]).collect(),
        critical_values: assumption.values.clone(),
        assumption1_holds: assumption.holds,
        per_seed,
    };
    Ok(PortraitRun { report, trajectories, critical: assumption.points })
}

/// Files written and the divergence time, if any.
#[derive(Debug)]
pub struct RunSummary {
    pub name: String,
    pub files: Vec<PathBuf>,
    pub diverged_at: Option<f64>,
    pub summary: String,
}

fn write(files: &mut Vec<PathBuf>, path: PathBuf, contents: &str) -> Result<(), CliError> {
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

/// Runs a scenario and writes the requested artifacts to `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path, seed: u64) -> Result<RunSummary, CliError> {
    let name = scenario.scenario.name.clone();
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(CliError::Config(format!("[scenario] invalid name `{name}`")));
    }
    let outs = &scenario.outputs;
    fs::create_dir_all(out_dir)?;
    let base = |ext: &str| out_dir.join(format!("{name}.{ext}"));
    let mut files = Vec::new();

    if scenario.is_portrait() {
        let run = simulate_portrait(scenario, seed)?;
        let curve = scenario.build_curve()?;
        let header = output::header_block(scenario, &[("seed".into(), seed.to_string())]);
        let stride = scenario.portrait.map_or(1, |p| p.record_stride);
        if outs.csv {
            write(&mut files, base("csv"), &output::portrait_csv(&header, &curve, &run.trajectories, stride))?;
        }
        if outs.svg {
            let trajs: Vec<TargetTrajectory> = run.trajectories.iter().map(|(_, t)| t.clone()).collect();
            write(&mut files, base("svg"), &output::portrait_svg(&name, &curve, &trajs, &run.critical))?;
        }
        if outs.metrics {
            let json = serde_json::to_string_pretty(&run.report).expect("report serialises");
            write(&mut files, base("metrics.json"), &json)?;
        }
        let r = &run.report;
        let diverged_at = r.per_seed.iter().filter_map(|s| s.diverged_at).reduce(f64::min);
        let summary = format!(
            "{name}: {}/{} seeds reached |Φ| < {:e}; {} critical points; assumption 1 {}",
            r.converged,
            r.seeds,
            r.tol,
            r.critical_points.len(),
            if r.assumption1_holds { "holds" } else { "fails" }
        );
        return Ok(RunSummary { name, files, diverged_at, summary });
    }

    let run = simulate(scenario)?;
    let ctrl = run.setup.controller.as_ref();
    let gains = ctrl.gains();
    let mut extra: Vec<(String, String)> = vec![
        ("seed".into(), seed.to_string()),
        ("controller".into(), ctrl.name().into()),
        ("step".into(), run.setup.sim.step.to_string()),
        ("horizon".into(), run.setup.sim.horizon.to_string()),
    ];
    extra.extend(gains.iter().map(|(k, v)| (format!("gain.{k}"), v.to_string())));
    if outs.csv {
        let header = output::header_block(scenario, &extra);
        write(&mut files, base("csv"), &output::trajectory_csv(&header, &run.trajectory))?;
    }
    if outs.svg {
        let svg = output::closed_loop_svg(&name, ctrl.target().curve(), &run.trajectory);
        write(&mut files, base("svg"), &svg)?;
    }
    if outs.metrics {
        let report = output::RunMetrics {
            scenario: &name,
            controller: ctrl.name(),
            gains,
            tol: run.setup.tol,
            metrics: &run.metrics,
        };
        write(&mut files, base("metrics.json"), &serde_json::to_string_pretty(&report).expect("metrics serialise"))?;
    }
    let m = &run.metrics;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
    let summary = format!(
        "{name}: t = {}, final |Φ| = {:.3e}, settling = {}, z decay = {}, min on-path speed = {}",
        m.final_time,
        m.final_abs_phi,
        opt(m.settling_time),
        opt(m.z_decay_rate),
        opt(m.min_speed_on_path)
    );
    Ok(RunSummary { name, files, diverged_at: run.trajectory.diverged_at, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum SweepParam {
    #[value(name = "k")]
    K,
    #[value(name = "w")]
    W,
    #[value(name = "ell")]
    Ell,
    #[value(name = "k_p")]
    KP,
    #[value(name = "k_I")]
    KI,
    #[value(name = "step")]
    Step,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::K => "k",
            Self::W => "w",
            Self::Ell => "ell",
            Self::KP => "k_p",
            Self::KI => "k_I",
            Self::Step => "step",
        }
    }

    /// Copy of `base` with the parameter set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario, String> {
        let mut s = base.clone();
        let kind = s.controller.map_or("none", |c| c.kind());
        let inapplicable = || format!("{} does not apply to controller {kind}", self.name());
        match self {
            Self::K => match s.controller.as_mut() {
                Some(ControllerConfig::LtiIi { k } | ControllerConfig::VesselIi { k }) => *k = value,
                _ => return Err(inapplicable()),
            },
            Self::KP | Self::KI => match s.controller.as_mut() {
                Some(ControllerConfig::VesselIntegral { k_p, k_i }) => {
                    *(if self == Self::KP { k_p } else { k_i }) = value;
                }
                _ => return Err(inapplicable()),
            },
            Self::W => s.target.w = value,
            Self::Ell => match s.plant.as_mut() {
                Some(PlantConfig::Vessel(p)) => p.ell = value,
                _ => return Err("ell applies to the vessel plant only".into()),
            },
            Self::Step => {
                let sim = s.sim.get_or_insert_with(SimSection::default);
                sim.step = Some(value);
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: &'static str,
    pub reason: String,
    pub metrics: Option<MetricsReport>,
}

/// One row per value, in input order; runs execute in parallel.
pub fn sweep(base: &Scenario, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    if base.is_portrait() {
        return Err(CliError::Config("sweep needs a closed-loop scenario".into()));
    }
    base.build_closed_loop()?;
    Ok(values
        .par_iter()
        .map(|&value| {
            let rejected = |reason: String| SweepRow { value, status: "rejected", reason, metrics: None };
            let scenario = match param.apply(base, value) {
                Ok(s) => s,
                Err(reason) => return rejected(reason),
            };
            match simulate(&scenario) {
                Ok(run) => SweepRow {
                    value,
                    status: if run.trajectory.diverged() { "diverged" } else { "ok" },
                    reason: String::new(),
                    metrics: Some(run.metrics),
                },
                Err(CliError::Config(reason)) => rejected(reason),
                Err(e) => SweepRow { value, status: "error", reason: e.to_string(), metrics: None },
            }
        })
        .collect())
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), output::num);
    let mut out = format!(
        "{},status,reason,final_abs_phi,max_abs_state,settling_time,z_decay_rate,min_speed_on_path,invariance_drift,qn_dot_bound,min_gain_k,diverged_at\n",
        param.name()
    );
    for r in rows {
        let reason = r.reason.replace(['"', '\n'], "'");
        let cols = match &r.metrics {
            Some(m) => [
                output::num(m.final_abs_phi),
                output::num(m.max_abs_state),
                opt(m.settling_time),
                opt(m.z_decay_rate),
                opt(m.min_speed_on_path),
                opt(m.invariance_drift),
                output::num(m.qn_dot_bound),
                opt(m.min_gain_k),
                opt(m.diverged_at),
            ]
            .join(","),
            None => ",,,,,,,,".to_string(),
        };
        out.push_str(&format!("{},{},\"{reason}\",{cols}\n", output::num(r.value), r.status));
    }
    out
}

#[derive(Debug, Parser)]
#[command(name = "pathfollow", version, about = "Path-following scenarios for underactuated mechanical systems")]
struct Args {
    /// Seed for every random choice (phase-portrait seeds).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory; overrides OF_OUTPUT_DIR and the scenario file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file or builtin.
    Run { scenario: String },
    /// List builtin scenarios.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Re-run a scenario over values of one parameter.
    Sweep {
        scenario: String,
        #[arg(long)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
}

fn output_dir(flag: Option<PathBuf>, scenario: &Scenario) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&scenario.outputs.dir))
}

fn execute(args: Args, out: &mut dyn Write) -> Result<i32, CliError> {
    match args.command {
        Command::List { json } => {
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&BUILTINS).expect("builtins serialise"))?;
            } else {
                for b in &BUILTINS {
                    writeln!(out, "{:<16} {}", b.name, b.description)?;
                }
            }
            Ok(0)
        }
        Command::Run { scenario } => {
            let s = load_scenario(&scenario)?;
            let dir = output_dir(args.out_dir, &s);
            let r = run_scenario(&s, &dir, args.seed)?;
            writeln!(out, "{}", r.summary)?;
            for f in &r.files {
                writeln!(out, "wrote {}", f.display())?;
            }
            match r.diverged_at {
                Some(t) => Err(CliError::Diverged { t }),
                None => Ok(0),
            }
        }
        Command::Sweep { scenario, param, values } => {
            let s = load_scenario(&scenario)?;
            let rows = sweep(&s, param, &values)?;
            let table = sweep_csv(param, &rows);
            let dir = output_dir(args.out_dir, &s);
            fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}.sweep-{}.csv", s.scenario.name, param.name()));
            fs::write(&path, &table)?;
            write!(out, "{table}")?;
            writeln!(out, "wrote {}", path.display())?;
            Ok(0)
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return code;
        }
    };
    match execute(args, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
