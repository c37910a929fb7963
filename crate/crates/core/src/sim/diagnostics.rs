//! Checks on the estimator structure of the distributed controller.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::try_map_indices;
use crate::runtime::ControllerKind;
use crate::sim::closed_loop::{simulate_run, Plant, SimOptions, SimTrace};
use crate::sim::compare::{mean_and_std_error, MonteCarloOptions};

/// Largest deviations from
/// `x(k) - zeta(k) = w(k-1)` and `x(k) - xi(k) = w(k-1) + (A+BF) w(k-2)`,
/// with `x(0)` standing in for `w(-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResiduals {
    pub zeta_max: f64,
    pub xi_max: f64,
    pub steps: usize,
}

pub fn estimator_identity_residuals(plant: Plant<'_>, trace: &SimTrace) -> Result<IdentityResiduals> {
    if trace.zeta.len() != trace.steps() {
        return Err(Error::Parameter(
            "trace carries no estimator states; run a monolithic controller with estimates recorded".into(),
        ));
    }
    let closed = &plant.model.a + &plant.model.b * &plant.gains.f;
    let mut zeta_max = 0.0f64;
    let mut xi_max = 0.0f64;
    for k in 1..trace.steps() {
        let w1 = &trace.w[k - 1];
        let w2 = if k >= 2 { &trace.w[k - 2] } else { &trace.x[0] };
        let x = &trace.x[k];
        zeta_max = zeta_max.max((x - &trace.zeta[k] - w1).amax());
        xi_max = xi_max.max((x - &trace.xi[k] - w1 - &closed * w2).amax());
    }
    Ok(IdentityResiduals { zeta_max, xi_max, steps: trace.steps() })
}

/// Sample cross-covariance of `xi(k)` and `x(k) - xi(k)` with standard errors
/// from independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    pub cross_covariance: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    /// Largest `|cov| / se` over all entries.
    pub max_abs_z: f64,
    pub samples: usize,
}

pub fn orthogonality_check(plant: Plant<'_>, opts: &MonteCarloOptions) -> Result<OrthogonalityReport> {
    if opts.runs < 2 {
        return Err(Error::Parameter("orthogonality check needs at least 2 runs".into()));
    }
    let n = plant.model.n();
    let scenario = opts.scenario(plant.model.integrator.is_some());
    let per_run = try_map_indices(opts.runs, opts.exec, |run| -> Result<DMatrix<f64>> {
        let mut sum_xi = nalgebra::DVector::zeros(n);
        let mut sum_e = nalgebra::DVector::zeros(n);
        let mut sum_prod = DMatrix::zeros(n, n);
        simulate_run(plant, ControllerKind::Distributed, &scenario, run as u64, SimOptions::default(), |rec| {
            if rec.k < opts.burn_in {
                return;
            }
            let (_, xi) = rec.estimates.expect("monolithic controller records estimates");
            let e = rec.x - xi;
            sum_prod += xi * e.transpose();
            sum_xi += xi;
            sum_e += e;
        })?;
        let t = opts.steps as f64;
        Ok(sum_prod / t - (sum_xi / t) * (sum_e / t).transpose())
    })?;
    let mut cov = DMatrix::zeros(n, n);
    let mut se = DMatrix::zeros(n, n);
    let mut max_abs_z = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let values: Vec<f64> = per_run.iter().map(|m| m[(r, c)]).collect();
            let (mean, s) = mean_and_std_error(&values);
            cov[(r, c)] = mean;
            se[(r, c)] = s;
            max_abs_z = max_abs_z.max(mean.abs() / s);
        }
    }
    Ok(OrthogonalityReport {
        cross_covariance: cov,
        std_error: se,
        max_abs_z,
        samples: opts.runs * opts.steps,
    })
}
