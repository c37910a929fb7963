//! Analytic and Monte-Carlo comparison of the three controllers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{try_map_indices, ExecMode};
use crate::runtime::ControllerKind;
use crate::sim::closed_loop::{relative_to_first, simulate_run, Plant, SimOptions};
use crate::sim::scenario::Scenario;
use crate::synthesis::DelayedGains;

/// Steady-state per-step cost rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticRates {
    /// `Tr{X W}`.
    pub j_cent: f64,
    /// `Tr{X W}` plus the penalty of the optimal structured gains.
    pub j_dist: f64,
    /// `Tr{X W}` plus the penalty of `F = M = 0`.
    pub j_delayed: f64,
}

impl AnalyticRates {
    pub fn from_gains(gains: &DelayedGains) -> Self {
        Self {
            j_cent: gains.noise_rate,
            j_dist: gains.noise_rate + gains.delay_penalty_rate,
            j_delayed: gains.noise_rate + gains.delayed_baseline_rate,
        }
    }

    pub fn of(&self, kind: ControllerKind) -> f64 {
        match kind {
            ControllerKind::Centralized => self.j_cent,
            ControllerKind::Distributed | ControllerKind::DistributedPerVehicle => self.j_dist,
            ControllerKind::DelayedCentralized => self.j_delayed,
        }
    }

    pub fn gaps(&self) -> Gaps {
        let pct = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den * 100.0 };
        Gaps {
            dist_vs_cent_pct: pct(self.j_dist - self.j_cent, self.j_cent),
            dist_vs_delayed_pct: pct(self.j_delayed - self.j_dist, self.j_delayed),
        }
    }
}

/// Percentage gaps between the analytic rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaps {
    /// How much more the distributed controller costs than the centralized one.
    pub dist_vs_cent_pct: f64,
    /// How much less it costs than delayed centralized control.
    pub dist_vs_delayed_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub runs: usize,
    /// Steps averaged per run, after the burn-in.
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self { runs: 20, steps: 5_000, burn_in: 500, seed: 1, exec: ExecMode::Parallel }
    }
}

impl MonteCarloOptions {
    fn validate(&self) -> Result<()> {
        if self.runs < 2 || self.steps == 0 {
            return Err(Error::Parameter(format!(
                "Monte Carlo needs at least 2 runs and 1 step, got {} runs of {} steps",
                self.runs, self.steps
            )));
        }
        Ok(())
    }

    /// Flat stationary scenario covering burn-in plus averaging window.
    pub fn scenario(&self, integral_action: bool) -> Scenario {
        Scenario { integral_action, ..Scenario::flat(self.burn_in + self.steps, self.seed) }
    }
}

/// Mean and standard error from independent per-run values.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub controller: ControllerKind,
    pub mean_stage_cost: f64,
    pub std_error: f64,
    pub analytic_rate: f64,
    /// `(mean - analytic) / std_error`.
    pub z_score: f64,
    pub runs: usize,
    pub steps_per_run: usize,
    /// Mean `w_u u_i^2` per vehicle.
    pub input_energy: Vec<f64>,
    pub input_energy_vs_lead_pct: Vec<f64>,
}

/// Average stage cost of `kind` over independent stationary runs.
pub fn monte_carlo(plant: Plant<'_>, kind: ControllerKind, opts: &MonteCarloOptions) -> Result<MonteCarloEstimate> {
    opts.validate()?;
    let scenario = opts.scenario(plant.model.integrator.is_some());
    let sim = SimOptions { record_estimates: false, ..SimOptions::default() };
    let m = plant.model.m();
    let weights: Vec<f64> = plant.cost.r.diagonal().iter().copied().collect();
    let per_run = try_map_indices(opts.runs, opts.exec, |run| -> Result<(f64, Vec<f64>)> {
        let mut cost = 0.0;
        let mut energy = vec![0.0; m];
        simulate_run(plant, kind, &scenario, run as u64, sim, |rec| {
            if rec.k >= opts.burn_in {
                cost += rec.stage_cost;
                for j in 0..m {
                    energy[j] += weights[j] * rec.u[j] * rec.u[j];
                }
            }
        })?;
        let n = opts.steps as f64;
        Ok((cost / n, energy.into_iter().map(|e| e / n).collect()))
    })?;
    let costs: Vec<f64> = per_run.iter().map(|(c, _)| *c).collect();
    let (mean, se) = mean_and_std_error(&costs);
    let mut energy = vec![0.0; m];
    for (_, e) in &per_run {
        for j in 0..m {
            energy[j] += e[j] / opts.runs as f64;
        }
    }
    let analytic = AnalyticRates::from_gains(plant.gains).of(kind);
    Ok(MonteCarloEstimate {
        controller: kind,
        mean_stage_cost: mean,
        std_error: se,
        analytic_rate: analytic,
        z_score: (mean - analytic) / se,
        runs: opts.runs,
        steps_per_run: opts.steps,
        input_energy_vs_lead_pct: relative_to_first(&energy),
        input_energy: energy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub analytic: AnalyticRates,
    pub gaps: Gaps,
    pub monte_carlo: Vec<MonteCarloEstimate>,
}

impl ComparisonReport {
    pub fn estimate(&self, kind: ControllerKind) -> Option<&MonteCarloEstimate> {
        self.monte_carlo.iter().find(|e| e.controller == kind)
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let a = &self.analytic;
        let mut s = String::new();
        s.push_str(&format!("{:<22}{:>16}{:>16}{:>12}{:>9}\n", "controller", "analytic rate", "MC mean", "MC s.e.", "z"));
        for e in &self.monte_carlo {
            s.push_str(&format!(
                "{:<22}{:>16.6}{:>16.6}{:>12.2e}{:>9.2}\n",
                e.controller.label(),
                e.analytic_rate,
                e.mean_stage_cost,
                e.std_error,
                e.z_score
            ));
        }
        if self.monte_carlo.is_empty() {
            for (label, v) in [("centralized", a.j_cent), ("distributed", a.j_dist), ("delayed-centralized", a.j_delayed)] {
                s.push_str(&format!("{label:<22}{v:>16.6}\n"));
            }
        }
        s.push_str(&format!(
            "gap distributed vs centralized:         {:.6}%\n",
            self.gaps.dist_vs_cent_pct
        ));
        s.push_str(&format!(
            "gap distributed vs delayed centralized: {:.6}%\n",
            self.gaps.dist_vs_delayed_pct
        ));
        s
    }
}

/// Analytic rates plus Monte-Carlo confirmation for all three controllers.
/// `opts = None` skips the simulation.
pub fn compare_controllers(plant: Plant<'_>, opts: Option<&MonteCarloOptions>) -> Result<ComparisonReport> {
    let analytic = AnalyticRates::from_gains(plant.gains);
    let monte_carlo = match opts {
        Some(opts) => [
            ControllerKind::Centralized,
            ControllerKind::Distributed,
            ControllerKind::DelayedCentralized,
        ]
        .into_iter()
        .map(|kind| monte_carlo(plant, kind, opts))
        .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(ComparisonReport { analytic, gaps: analytic.gaps(), monte_carlo })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se_of_constant_sample() {
        let (m, se) = mean_and_std_error(&[2.0, 2.0, 2.0]);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn gaps_degenerate_to_zero() {
        let r = AnalyticRates { j_cent: 3.0, j_dist: 3.0, j_delayed: 3.0 };
        assert_eq!(r.gaps(), Gaps { dist_vs_cent_pct: 0.0, dist_vs_delayed_pct: 0.0 });
        let z = AnalyticRates { j_cent: 0.0, j_dist: 0.0, j_delayed: 0.0 };
        assert_eq!(z.gaps().dist_vs_cent_pct, 0.0);
    }
}
