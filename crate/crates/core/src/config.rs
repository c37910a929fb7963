//! Run configuration: one strict JSON document describing the model, cost,
//! scenario, synthesis and Monte-Carlo settings.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::DareOptions;
use crate::model::{
    build_cost, build_platoon_model, CostSpec, CostWeights, DragModel, FollowerWeights, LeadWeights,
    LinearPlatoonModel, OperatingPoint, VehicleParams,
};
use crate::sim::{MonteCarloOptions, ProfilePoint, Scenario};
use crate::synthesis::SynthesisOptions;
use crate::ExecMode;

pub type MatrixRows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingPointSection {
    pub v0: f64,
    pub tau: f64,
    /// Must equal `tau * v0` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d0: Option<f64>,
    pub ts: f64,
}

fn default_integrator_noise() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub vehicles: Vec<VehicleParams>,
    pub operating_point: OperatingPointSection,
    pub drag: DragModel,
    /// Process noise covariance `W`, row-major.
    pub noise_covariance: MatrixRows,
    /// Initial-state covariance `P0`; defaults to `W`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_covariance: Option<MatrixRows>,
    /// Noise variance of the lead integrator state.
    #[serde(default = "default_integrator_noise")]
    pub integrator_noise_variance: f64,
    /// Zero every coupling between vehicles in A, W, P0, Q and Q0.
    #[serde(default)]
    pub decouple: bool,
    /// Replace the linearized A (before decoupling and augmentation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_override: Option<MatrixRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_override: Option<MatrixRows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub lead: LeadWeights,
    pub followers: Vec<FollowerWeights>,
    /// Weight on the lead integrator state.
    #[serde(default)]
    pub w_integral: f64,
}

impl CostSection {
    pub fn weights(&self) -> CostWeights {
        CostWeights { lead: self.lead, followers: self.followers.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub tol: f64,
    pub max_iter: usize,
    /// Horizon for finite-horizon synthesis.
    pub horizon: usize,
    #[serde(default)]
    pub experimental: bool,
}

impl SynthesisSection {
    pub fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            dare: DareOptions { tol: self.tol, max_iter: self.max_iter },
            experimental: self.experimental,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub runs: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl MonteCarloSection {
    pub fn options(&self, exec: ExecMode) -> MonteCarloOptions {
        MonteCarloOptions { runs: self.runs, steps: self.steps, burn_in: self.burn_in, seed: self.seed, exec }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub cost: CostSection,
    pub scenario: Scenario,
    pub synthesis: SynthesisSection,
    pub monte_carlo: MonteCarloSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Model and cost ready for synthesis.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: LinearPlatoonModel,
    pub cost: CostSpec,
    pub operating_point: OperatingPoint,
    pub vehicles: Vec<VehicleParams>,
}

impl Problem {
    pub fn v0(&self) -> f64 {
        self.operating_point.v0
    }
}

fn matrix(rows: &MatrixRows, name: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{name} must be a non-empty rectangular matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Rows of a matrix, for writing configs and gain files.
pub fn matrix_rows(a: &DMatrix<f64>) -> MatrixRows {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Correlated noise covariance for a chain `[v1, d12, v2, ...]`.
///
/// Speeds of adjacent vehicles correlate with `rho_v`, adjacent gaps with
/// `rho_d`, and each gap correlates with `+cross` with the vehicle in front
/// and `-cross` with the vehicle behind (both as correlation coefficients).
/// Correlations decay geometrically with distance along the chain.
pub fn chain_noise_covariance(
    vehicles: usize,
    var_v: f64,
    var_d: f64,
    rho_v: f64,
    rho_d: f64,
    cross: f64,
) -> DMatrix<f64> {
    let n = 2 * vehicles - 1;
    // even index 2i: speed of vehicle i; odd index 2i-1: gap in front of vehicle i
    let position = |s: usize| s as f64 / 2.0;
    DMatrix::from_fn(n, n, |r, c| {
        let (sv_r, sv_c) = (r % 2 == 0, c % 2 == 0);
        let dist = (position(r) - position(c)).abs();
        match (sv_r, sv_c) {
            (true, true) => var_v * rho_v.powf(dist),
            (false, false) => var_d * rho_d.powf(dist),
            _ => {
                let (gap, speed) = if sv_r { (c, r) } else { (r, c) };
                let scale = (var_v * var_d).sqrt();
                if speed + 1 == gap {
                    scale * cross
                } else if speed == gap + 1 {
                    -scale * cross
                } else {
                    0.0
                }
            }
        }
    })
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural checks that do not need the model.
    pub fn validate(&self) -> Result<()> {
        let op = &self.model.operating_point;
        if let Some(d0) = op.d0 {
            if (d0 - op.tau * op.v0).abs() > 1e-9 * d0.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "operating_point.d0 = {d0} must equal tau * v0 = {}",
                    op.tau * op.v0
                )));
            }
        }
        if self.synthesis.horizon < 2 {
            return Err(Error::Config("synthesis.horizon must be at least 2".into()));
        }
        if !(self.synthesis.tol > 0.0) || self.synthesis.max_iter == 0 {
            return Err(Error::Config("synthesis.tol and synthesis.max_iter must be positive".into()));
        }
        if self.monte_carlo.runs < 2 || self.monte_carlo.steps == 0 {
            return Err(Error::Config("monte_carlo needs runs >= 2 and steps >= 1".into()));
        }
        self.scenario.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Build the model and cost this configuration describes.
    ///
    /// Order: linearize, apply overrides, decouple, then add the lead
    /// integrator when the scenario asks for integral action.
    pub fn build(&self) -> Result<Problem> {
        self.validate()?;
        let ms = &self.model;
        let op = OperatingPoint::new(ms.operating_point.v0, ms.operating_point.tau, ms.operating_point.ts, ms.drag)?;
        let w = matrix(&ms.noise_covariance, "noise_covariance")?;
        let p0 = match &ms.initial_covariance {
            Some(rows) => matrix(rows, "initial_covariance")?,
            None => w.clone(),
        };
        let mut model = build_platoon_model(&ms.vehicles, &op, w, p0)?;
        if let Some(rows) = &ms.a_override {
            let a = matrix(rows, "a_override")?;
            if a.shape() != model.a.shape() {
                return Err(Error::Config(format!("a_override must be {}x{}", model.n(), model.n())));
            }
            model.a = a;
        }
        if let Some(rows) = &ms.b_override {
            let b = matrix(rows, "b_override")?;
            if b.shape() != model.b.shape() {
                return Err(Error::Config(format!("b_override must be {}x{}", model.n(), model.m())));
            }
            model.b = b;
        }
        let mut cost = build_cost(&self.cost.weights(), op.tau, &model.partition)?;
        if ms.decouple {
            model = model.decoupled()?;
            cost = cost.decoupled(&model.partition);
        }
        if self.scenario.integral_action {
            model = model.with_lead_integrator(ms.integrator_noise_variance)?;
            let at = model.integrator.expect("integrator was just added");
            cost = cost.with_lead_integrator(at, self.cost.w_integral)?;
        } else if !self.scenario.is_flat(op.v0) {
            return Err(Error::Scenario(
                "a non-flat speed profile needs scenario.integral_action = true".into(),
            ));
        }
        Ok(Problem { model, cost, operating_point: op, vehicles: ms.vehicles.clone() })
    }

    /// The shipped default: three trucks, flat profile, no integrator.
    pub fn default_platoon() -> Self {
        let truck = |mass_kg: f64| VehicleParams {
            mass_kg,
            k_u: 8000.0,
            k_d: 3.6,
            k_b: 1.0,
            k_fr: 2000.0,
            k_g: mass_kg * 9.81,
            max_engine_input: 2.5,
            max_brake_input: 60.0,
        };
        let follower = FollowerWeights { w_tau: 10.0, w_dv: 5.0, w_d: 0.1, w_v: 0.1, w_u: 1.0 };
        let w = chain_noise_covariance(3, 4e-4, 2.5e-5, 0.9, 0.2, 0.1);
        RunConfig {
            model: ModelSection {
                vehicles: vec![truck(30000.0), truck(40000.0), truck(30000.0)],
                operating_point: OperatingPointSection { v0: 19.44, tau: 0.25, d0: Some(4.86), ts: 0.1 },
                drag: DragModel { alpha1: 0.5, alpha2: 30.0, beta1: 0.4, beta2: 5.0 },
                noise_covariance: matrix_rows(&w),
                initial_covariance: None,
                integrator_noise_variance: default_integrator_noise(),
                decouple: false,
                a_override: None,
                b_override: None,
            },
            cost: CostSection {
                lead: LeadWeights { w_v: 50.0, w_u: 1.0 },
                followers: vec![follower, follower],
                w_integral: 2.0,
            },
            scenario: Scenario {
                horizon: 1000,
                seed: 42,
                profile: Vec::new(),
                noise_scale: 1.0,
                integral_action: false,
            },
            synthesis: SynthesisSection { tol: 1e-12, max_iter: 1_000_000, horizon: 50, experimental: false },
            monte_carlo: MonteCarloSection { runs: 20, steps: 5000, burn_in: 500, seed: 7 },
            output: OutputSection::default(),
        }
    }

    /// Default platoon driving the 70 -> 60 -> 70 -> 80 km/h profile with
    /// lead integral action.
    pub fn fig2_platoon() -> Self {
        let mut cfg = Self::default_platoon();
        cfg.scenario = Scenario {
            horizon: 1200,
            seed: 42,
            profile: vec![
                ProfilePoint { time_s: 10.0, speed_mps: 16.67 },
                ProfilePoint { time_s: 40.0, speed_mps: 19.44 },
                ProfilePoint { time_s: 70.0, speed_mps: 22.22 },
            ],
            noise_scale: 0.2,
            integral_action: true,
        };
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_builds_five_states() {
        let p = RunConfig::default_platoon().build().unwrap();
        assert_eq!((p.model.n(), p.model.m()), (5, 3));
        assert_eq!(p.model.labels, ["v1", "d12", "v2", "d23", "v3"]);
    }

    #[test]
    fn fig2_adds_integrator_after_lead_speed() {
        let p = RunConfig::fig2_platoon().build().unwrap();
        assert_eq!(p.model.n(), 6);
        assert_eq!(p.model.integrator, Some(1));
        assert_eq!(p.model.labels[1], "z1");
        assert_eq!(p.cost.q[(1, 1)], 2.0);
    }

    #[test]
    fn chain_covariance_is_positive_definite() {
        let w = chain_noise_covariance(3, 4e-4, 2.5e-5, 0.9, 0.2, 0.1);
        assert_eq!(w, w.transpose());
        assert!(w.cholesky().is_some());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let mut v = serde_json::to_value(RunConfig::default_platoon()).unwrap();
        v["model"]["colour"] = serde_json::json!("red");
        let text = serde_json::to_string_pretty(&v).unwrap();
        match RunConfig::from_json_str(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("colour") && msg.contains("line")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_lead_input_weight_is_rejected() {
        let mut cfg = RunConfig::default_platoon();
        cfg.cost.lead.w_u = 0.0;
        assert!(matches!(cfg.build(), Err(Error::Parameter(_))));
    }

    #[test]
    fn profile_without_integrator_is_rejected() {
        let mut cfg = RunConfig::fig2_platoon();
        cfg.scenario.integral_action = false;
        assert!(matches!(cfg.build(), Err(Error::Scenario(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::fig2_platoon();
        let back = RunConfig::from_json_str(&cfg.to_json_pretty().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
