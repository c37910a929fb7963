//! Closed-loop simulation `x(k+1) = A x(k) + B u(k) + w(k) + c(k)`.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostSpec, LinearPlatoonModel};
use crate::runtime::{ActiveController, ControllerKind};
use crate::sim::noise::{run_rng, GaussianSampler};
use crate::sim::scenario::{scenario_injection, Scenario};
use crate::synthesis::DelayedGains;

/// Everything a simulation needs besides the scenario.
#[derive(Debug, Clone, Copy)]
pub struct Plant<'a> {
    pub model: &'a LinearPlatoonModel,
    pub cost: &'a CostSpec,
    pub gains: &'a DelayedGains,
    /// Nominal speed the model was linearized at.
    pub v0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Abort when `|x|_inf` exceeds this.
    pub guard: f64,
    /// Keep `zeta(k)` and `xi(k)` in the trace (monolithic controllers only).
    pub record_estimates: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { guard: 1e6, record_estimates: true }
    }
}

/// View of one simulated step.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub k: usize,
    pub x: &'a DVector<f64>,
    pub u: &'a DVector<f64>,
    /// `w(k)`, entering `x(k+1)`.
    pub w: &'a DVector<f64>,
    pub stage_cost: f64,
    /// `(zeta(k), xi(k))` as used to compute `u(k)`.
    pub estimates: Option<(&'a DVector<f64>, &'a DVector<f64>)>,
}

fn quad(x: &DVector<f64>, q: &nalgebra::DMatrix<f64>) -> f64 {
    x.dot(&(q * x))
}

/// Run one realization and hand every step to `observe`.
///
/// Noise comes from stream `run` of `scenario.seed`: first `x(0)` from `P0`,
/// then `w(0), w(1), ...` from `W`, all scaled by `scenario.noise_scale`.
/// Every controller sees the same draws for the same `(seed, run)`.
pub fn simulate_run<F>(
    plant: Plant<'_>,
    kind: ControllerKind,
    scenario: &Scenario,
    run: u64,
    opts: SimOptions,
    mut observe: F,
) -> Result<DVector<f64>>
where
    F: FnMut(&StepRecord<'_>),
{
    scenario.validate()?;
    let model = plant.model;
    if scenario.integral_action != model.integrator.is_some() {
        return Err(Error::Scenario(format!(
            "scenario integral_action = {} but the model {} an integrator",
            scenario.integral_action,
            if model.integrator.is_some() { "has" } else { "lacks" }
        )));
    }
    let noise = GaussianSampler::from_covariance(&model.w)?;
    let initial = GaussianSampler::from_psd(&model.p0)?;
    let mut rng = run_rng(scenario.seed, run);
    let mut controller = ActiveController::new(kind, model, plant.gains)?;
    let mut x = initial.sample(&mut rng, scenario.noise_scale);
    for k in 0..scenario.horizon {
        let norm = x.amax();
        if !(norm <= opts.guard) {
            return Err(Error::Instability { step: k, norm, guard: opts.guard });
        }
        let c = scenario_injection(model, scenario, plant.v0, k)?;
        let estimates = if opts.record_estimates {
            controller.estimates().map(|(z, xi)| (z.clone(), xi.clone()))
        } else {
            None
        };
        let u = controller.step(&x, &c)?;
        let w = noise.sample(&mut rng, scenario.noise_scale);
        let stage_cost = quad(&x, &plant.cost.q) + quad(&u, &plant.cost.r);
        observe(&StepRecord {
            k,
            x: &x,
            u: &u,
            w: &w,
            stage_cost,
            estimates: estimates.as_ref().map(|(z, xi)| (z, xi)),
        });
        x = &model.a * &x + &model.b * &u + &w + &c;
    }
    Ok(x)
}

/// Full record of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub controller: ControllerKind,
    pub seed: u64,
    pub run: u64,
    pub scenario: Scenario,
    pub ts: f64,
    pub labels: Vec<String>,
    pub integrator: Option<usize>,
    /// `x(0), ..., x(T-1)`.
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub stage_cost: Vec<f64>,
    pub cumulative_cost: Vec<f64>,
    pub zeta: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    pub x_final: DVector<f64>,
    /// Diagonal of R, for input energy.
    pub input_weights: Vec<f64>,
}

/// Run one realization and keep everything.
pub fn run_closed_loop(
    plant: Plant<'_>,
    kind: ControllerKind,
    scenario: &Scenario,
    opts: SimOptions,
) -> Result<SimTrace> {
    let steps = scenario.horizon;
    let mut trace = SimTrace {
        controller: kind,
        seed: scenario.seed,
        run: 0,
        scenario: scenario.clone(),
        ts: plant.model.ts,
        labels: plant.model.labels.clone(),
        integrator: plant.model.integrator,
        x: Vec::with_capacity(steps),
        u: Vec::with_capacity(steps),
        w: Vec::with_capacity(steps),
        stage_cost: Vec::with_capacity(steps),
        cumulative_cost: Vec::with_capacity(steps),
        zeta: Vec::new(),
        xi: Vec::new(),
        x_final: DVector::zeros(0),
        input_weights: plant.cost.r.diagonal().iter().copied().collect(),
    };
    let mut total = 0.0;
    trace.x_final = simulate_run(plant, kind, scenario, 0, opts, |rec| {
        total += rec.stage_cost;
        trace.x.push(rec.x.clone());
        trace.u.push(rec.u.clone());
        trace.w.push(rec.w.clone());
        trace.stage_cost.push(rec.stage_cost);
        trace.cumulative_cost.push(total);
        if let Some((z, xi)) = rec.estimates {
            trace.zeta.push(z.clone());
            trace.xi.push(xi.clone());
        }
    })?;
    Ok(trace)
}

/// Aggregates reported next to a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub controller: ControllerKind,
    pub seed: u64,
    pub steps: usize,
    pub total_cost: f64,
    pub mean_stage_cost: f64,
    /// Mean of `w_u u_i^2` per vehicle.
    pub input_energy: Vec<f64>,
    /// `(E_i - E_1) / E_1 * 100`.
    pub input_energy_vs_lead_pct: Vec<f64>,
    pub max_abs_input: Vec<f64>,
}

pub(crate) fn relative_to_first(values: &[f64]) -> Vec<f64> {
    match values.first() {
        Some(&first) if first != 0.0 => values.iter().map(|v| (v - first) / first * 100.0).collect(),
        _ => vec![0.0; values.len()],
    }
}

impl SimTrace {
    pub fn steps(&self) -> usize {
        self.x.len()
    }

    /// `x_i` over time for the state labelled `label`.
    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let i = self.labels.iter().position(|l| l == label)?;
        Some(self.x.iter().map(|x| x[i]).collect())
    }

    pub fn summary(&self) -> SimSummary {
        let steps = self.steps();
        let m = self.input_weights.len();
        let mut energy = vec![0.0; m];
        let mut max_abs = vec![0.0f64; m];
        for u in &self.u {
            for j in 0..m {
                energy[j] += self.input_weights[j] * u[j] * u[j];
                max_abs[j] = max_abs[j].max(u[j].abs());
            }
        }
        let denom = steps.max(1) as f64;
        energy.iter_mut().for_each(|e| *e /= denom);
        let total_cost = self.cumulative_cost.last().copied().unwrap_or(0.0);
        SimSummary {
            controller: self.controller,
            seed: self.seed,
            steps,
            total_cost,
            mean_stage_cost: total_cost / denom,
            input_energy_vs_lead_pct: relative_to_first(&energy),
            input_energy: energy,
            max_abs_input: max_abs,
        }
    }

    /// CSV columns: `k, t_s`, the plant states without the integrator,
    /// `u1..um`, `stage_cost, cum_cost`, and the integrator last when present.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let state_cols: Vec<usize> =
            (0..self.labels.len()).filter(|&i| Some(i) != self.integrator).collect();
        let m = self.input_weights.len();
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string(), "t_s".to_string()];
        header.extend(state_cols.iter().map(|&i| self.labels[i].clone()));
        header.extend((1..=m).map(|j| format!("u{j}")));
        header.push("stage_cost".into());
        header.push("cum_cost".into());
        if let Some(z) = self.integrator {
            header.push(self.labels[z].clone());
        }
        wtr.write_record(&header)?;
        for k in 0..self.steps() {
            let mut row = vec![k.to_string(), format!("{}", k as f64 * self.ts)];
            row.extend(state_cols.iter().map(|&i| format!("{}", self.x[k][i])));
            row.extend(self.u[k].iter().map(|v| format!("{v}")));
            row.push(format!("{}", self.stage_cost[k]));
            row.push(format!("{}", self.cumulative_cost[k]));
            if let Some(z) = self.integrator {
                row.push(format!("{}", self.x[k][z]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
