//! Scenario files: TOML with fixed sections, unknown keys rejected.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::control::{
    Controller, LtiComparisonController, LtiIIController, VesselIIController, VesselIntegralController,
};
use crate::curves::{ImplicitCurve, Point};
use crate::plants::{LtiPlant, PlantState, VesselParams, VesselPlant};
use crate::sim::SimConfig;
use crate::target::TargetSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario: Meta,
    pub curve: CurveConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portrait: Option<PortraitConfig>,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CurveConfig {
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Cassini {
        a0: f64,
        b0: f64,
    },
}

/// Constant speed `w` and scalar damping `ℛ = r·I₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub w: f64,
    pub r: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { w: 1.0, r: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlantConfig {
    Lti(LtiConfig),
    Vessel(VesselParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LtiConfig {
    pub r3: f64,
}

impl Default for LtiConfig {
    fn default() -> Self {
        Self { r3: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ControllerConfig {
    #[serde(rename = "lti-ii")]
    LtiIi { k: f64 },
    #[serde(rename = "lti-comparison")]
    LtiComparison {},
    #[serde(rename = "vessel-ii")]
    VesselIi { k: f64 },
    #[serde(rename = "vessel-integral")]
    VesselIntegral {
        k_p: f64,
        #[serde(rename = "k_I")]
        k_i: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_bound: Option<f64>,
    /// On-path threshold on `|Φ|` used by the metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub q: [f64; 3],
    #[serde(default)]
    pub p: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Seeding {
    Grid,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortraitConfig {
    pub seeding: Seeding,
    /// Columns and rows of the seed grid.
    pub grid: [usize; 2],
    /// Number of seeds when `seeding = "random"`.
    pub count: usize,
    /// Seed box as a multiple of the curve's bounding box.
    pub extent: f64,
    pub horizon: f64,
    pub step: f64,
    pub record_stride: usize,
    pub tol: f64,
}

impl Default for PortraitConfig {
    fn default() -> Self {
        Self {
            seeding: Seeding::Grid,
            grid: [6, 4],
            count: 24,
            extent: 1.2,
            horizon: 20.0,
            step: 0.002,
            record_stride: 10,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsConfig {
    pub csv: bool,
    pub svg: bool,
    pub metrics: bool,
    pub dir: String,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { csv: true, svg: true, metrics: true, dir: "out".into() }
    }
}

/// Everything needed for one closed-loop run.
#[derive(Debug)]
pub struct ClosedLoop {
    pub controller: Box<dyn Controller>,
    pub sim: SimConfig,
    pub tol: f64,
    pub x0: PlantState,
    pub theta0: Option<Point>,
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_column(text, s.start))
                .unwrap_or((0, 0));
            CliError::Parse { origin: origin.to_string(), line, column, message: e.message().to_string() }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn is_portrait(&self) -> bool {
        self.portrait.is_some()
    }

    pub fn build_curve(&self) -> Result<ImplicitCurve, CliError> {
        let curve = match self.curve {
            CurveConfig::Circle { center, radius } => ImplicitCurve::circle(Point::from(center), radius),
            CurveConfig::Cassini { a0, b0 } => ImplicitCurve::cassini(a0, b0),
        };
        curve.map_err(|e| CliError::Config(format!("[curve] {e}")))
    }

    pub fn build_target(&self) -> Result<TargetSpec, CliError> {
        let invalid = |e| CliError::Config(format!("[target] {e}"));
        let target = TargetSpec::new(self.build_curve()?)
            .with_speed(self.target.w)
            .map_err(invalid)?
            .with_scalar_damping(self.target.r)
            .map_err(invalid)?;
        target.validate().map_err(invalid)?;
        Ok(target)
    }

    /// Validates the closed-loop sections and constructs the controller.
    pub fn build_closed_loop(&self) -> Result<ClosedLoop, CliError> {
        let missing = |s: &str| CliError::Config(format!("missing [{s}] section"));
        let plant = self.plant.as_ref().ok_or_else(|| missing("plant"))?;
        let ctrl = self.controller.ok_or_else(|| missing("controller"))?;
        let initial = self.initial.ok_or_else(|| missing("initial"))?;
        let target = self.build_target()?;
        let bad = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());

        let (controller, default_step, default_horizon): (Box<dyn Controller>, f64, f64) = match (plant, ctrl) {
            (PlantConfig::Lti(p), ControllerConfig::LtiIi { k }) => {
                let plant = LtiPlant::benchmark(p.r3).map_err(|e| bad(&e))?;
                (Box::new(LtiIIController::new(plant, target, k).map_err(|e| bad(&e))?), 0.01, 30.0)
            }
            (PlantConfig::Lti(p), ControllerConfig::LtiComparison {}) => {
                let plant = LtiPlant::benchmark(p.r3).map_err(|e| bad(&e))?;
                (Box::new(LtiComparisonController::new(plant, target)), 0.01, 30.0)
            }
            (PlantConfig::Vessel(params), ControllerConfig::VesselIi { k }) => {
                let plant = VesselPlant::new(*params).map_err(|e| bad(&e))?;
                (Box::new(VesselIIController::new(plant, target, k).map_err(|e| bad(&e))?), 0.05, 2000.0)
            }
            (PlantConfig::Vessel(params), ControllerConfig::VesselIntegral { k_p, k_i }) => {
                let plant = VesselPlant::new(*params).map_err(|e| bad(&e))?;
                let c = VesselIntegralController::new(plant, target, k_p, k_i).map_err(|e| bad(&e))?;
                (Box::new(c), 0.05, 2000.0)
            }
            (plant, ctrl) => {
                return Err(CliError::Config(format!(
                    "controller {} does not apply to plant {}",
                    ctrl.kind(),
                    plant.kind()
                )))
            }
        };

        let s = self.sim.unwrap_or_default();
        let sim = SimConfig {
            step: s.step.unwrap_or(default_step),
            horizon: s.horizon.unwrap_or(default_horizon),
            record_stride: s.record_stride.unwrap_or(1),
            divergence_bound: s.divergence_bound.unwrap_or(100.0),
        };
        sim.validate().map_err(|e| CliError::Config(format!("[sim] {e}")))?;
        let tol = s.tol.unwrap_or(1e-4);
        if !(tol > 0.0) {
            return Err(CliError::Config(format!("[sim] tol must be positive, got {tol}")));
        }

        let x0 = PlantState::new(Vector3::from(initial.q), Vector3::from(initial.p));
        if !x0.is_finite() {
            return Err(CliError::Config("[initial] state must be finite".into()));
        }
        let theta0 = controller
            .has_integrator()
            .then(|| Point::from(initial.theta.unwrap_or_default()));
        Ok(ClosedLoop { controller, sim, tol, x0, theta0 })
    }
}

impl ControllerConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::LtiIi { .. } => "lti-ii",
            Self::LtiComparison {} => "lti-comparison",
            Self::VesselIi { .. } => "vessel-ii",
            Self::VesselIntegral { .. } => "vessel-integral",
        }
    }
}

impl PlantConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Lti(_) => "lti",
            Self::Vessel(_) => "vessel",
        }
    }
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}
