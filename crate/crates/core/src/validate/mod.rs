//! Self-checks of the algebra, the synthesis and the controller runtime.
//!
//! Every check is deterministic for a given seed, so repeated runs produce
//! identical reports.

pub mod oracle;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Problem, RunConfig};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::lqr::{riccati_recursion, solve_dare, solve_dare_from, spectral_radius, DareOptions};
use crate::runtime::bus::{DistributedPlatoon, Withhold};
use crate::runtime::{ControllerKind, Realization};
use crate::sim::closed_loop::{run_closed_loop, simulate_run, Plant, SimOptions};
use crate::sim::diagnostics::estimator_identity_residuals;
use crate::sim::noise::run_rng;
use crate::sim::scenario::Scenario;
use crate::structured::{
    embed, is_positive_definite, kron, submatrix, unvec, vec, vec_star, IndexSet, SparsityMask,
};
use crate::synthesis::{build_quadratic_steady, structured_gains, synthesize_finite, synthesize_steady, DelayedGains, SynthesisOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub seed: u64,
    /// Random instances per algebraic identity.
    pub samples: usize,
    /// Steps of the recorded-noise run for the estimator identities.
    pub identity_steps: usize,
    /// Steps compared between per-vehicle and monolithic execution.
    pub equivalence_steps: usize,
    /// Horizon of the finite-horizon oracle comparison.
    pub oracle_horizon: usize,
    /// Test hook: synthesize with `-L` so the oracle comparison must fail.
    pub flip_l_sign: bool,
    pub exec: ExecMode,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            samples: 100,
            identity_steps: 10_000,
            equivalence_steps: 1_000,
            oracle_horizon: 4,
            flip_l_sign: false,
            exec: ExecMode::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (an error, a margin or a count, see `detail`).
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    fn above(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: value > threshold, value, threshold, detail: detail.into() }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self { name: name.into(), passed: false, value: f64::NAN, threshold: f64::NAN, detail: err.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{:<4} {:<28} value {:>12.4e}  limit {:>10.3e}  {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold,
                c.detail
            ));
        }
        s
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `G G' + shift I` for a random square `G`.
fn random_pd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let g = gaussian(rng, n, n);
    &g * g.transpose() + DMatrix::identity(n, n) * shift
}

fn rel_err(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).amax() / want.amax().max(1.0)
}

/// Worst relative residual of each vectorization identity over random draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KroneckerResiduals {
    /// `vec(AXB) = (B' (x) A) vec(X)`.
    pub vec_product: f64,
    /// `(A (x) B)(C (x) D) = AC (x) BD`.
    pub mixed_product: f64,
    /// `(A (x) B)' = A' (x) B'`.
    pub transpose: f64,
    /// `Tr{A X B X'} = vec(X)' (B' (x) A) vec(X)`.
    pub trace_form: f64,
    /// `(A (x) B)^{-1} = A^{-1} (x) B^{-1}`.
    pub inverse: f64,
    /// `v*' [Y]_SS v* = vec' Y vec` when `vec = embed(v*)`.
    pub embed_consistency: f64,
    pub samples: usize,
}

impl KroneckerResiduals {
    pub fn max(&self) -> f64 {
        [self.vec_product, self.mixed_product, self.transpose, self.trace_form, self.inverse, self.embed_consistency]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn kronecker_identities(seed: u64, samples: usize) -> Result<KroneckerResiduals> {
    let mut rng = run_rng(seed, 1);
    let mut out = KroneckerResiduals {
        vec_product: 0.0,
        mixed_product: 0.0,
        transpose: 0.0,
        trace_form: 0.0,
        inverse: 0.0,
        embed_consistency: 0.0,
        samples,
    };
    let dim = |rng: &mut ChaCha8Rng| rng.random_range(1..=5usize);
    for _ in 0..samples {
        let (p, q, r, s) = (dim(&mut rng), dim(&mut rng), dim(&mut rng), dim(&mut rng));

        let a = gaussian(&mut rng, p, q);
        let x = gaussian(&mut rng, q, r);
        let b = gaussian(&mut rng, r, s);
        let lhs = vec(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vec(&x);
        out.vec_product = out.vec_product.max((&lhs - &rhs).amax() / rhs.amax().max(1.0));

        let t = dim(&mut rng);
        let c = gaussian(&mut rng, q, t);
        let bb = gaussian(&mut rng, r, s);
        let d = gaussian(&mut rng, s, p);
        let lhs = kron(&a, &bb) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&bb * &d));
        out.mixed_product = out.mixed_product.max(rel_err(&lhs, &rhs));

        out.transpose = out.transpose.max(rel_err(&kron(&a, &bb).transpose(), &kron(&a.transpose(), &bb.transpose())));

        let sa = gaussian(&mut rng, p, p);
        let sb = gaussian(&mut rng, q, q);
        let xs = gaussian(&mut rng, p, q);
        let lhs = (&sa * &xs * &sb * xs.transpose()).trace();
        let vx = vec(&xs);
        let rhs = (vx.transpose() * kron(&sb.transpose(), &sa) * &vx)[(0, 0)];
        out.trace_form = out.trace_form.max((lhs - rhs).abs() / rhs.abs().max(1.0));

        let ia = gaussian(&mut rng, p, p) + DMatrix::identity(p, p) * (p as f64 + 1.0);
        let ib = gaussian(&mut rng, q, q) + DMatrix::identity(q, q) * (q as f64 + 1.0);
        let (inv_a, inv_b, inv_k) = match (
            ia.clone().try_inverse(),
            ib.clone().try_inverse(),
            kron(&ia, &ib).try_inverse(),
        ) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(Error::Factorization("random test matrix is singular".into())),
        };
        out.inverse = out.inverse.max(rel_err(&inv_k, &kron(&inv_a, &inv_b)));

        let mask = SparsityMask::from_fn(p, q, |_, _| rng.random_bool(0.5));
        let dense = gaussian(&mut rng, p, q);
        let structured = mask.project(&dense);
        let vs = vec_star(&structured, &mask)?;
        let full = embed(&vs, &mask)?;
        let unvec_back = unvec(&full, p, q)?;
        let y = random_pd(&mut rng, p * q, 0.1);
        let set = mask.index_set();
        let reduced = if set.is_empty() {
            0.0
        } else {
            (vs.transpose() * submatrix(&y, &set)? * &vs)[(0, 0)]
        };
        let whole = (full.transpose() * &y * &full)[(0, 0)];
        let err = (reduced - whole).abs() / whole.abs().max(1.0) + (unvec_back - structured).amax();
        out.embed_consistency = out.embed_consistency.max(err);
    }
    Ok(out)
}

/// Smallest eigenvalues of `Y` and `[Y]_SS` over random draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessSweep {
    pub min_eig_full: f64,
    pub min_eig_reduced: f64,
    /// Draws where either matrix failed to be positive definite.
    pub failures: usize,
    pub samples: usize,
}

pub fn hessian_definiteness_sweep(seed: u64, samples: usize) -> Result<DefinitenessSweep> {
    let mut rng = run_rng(seed, 2);
    let mut out = DefinitenessSweep {
        min_eig_full: f64::INFINITY,
        min_eig_reduced: f64::INFINITY,
        failures: 0,
        samples,
    };
    for _ in 0..samples {
        let n = rng.random_range(1..=5usize);
        let m = rng.random_range(1..=3usize);
        let w = random_pd(&mut rng, n, 0.05);
        let h = random_pd(&mut rng, m, 0.05);
        let a = gaussian(&mut rng, n, n);
        let b = gaussian(&mut rng, n, m);
        let l = gaussian(&mut rng, m, n);
        let quad = match build_quadratic_steady(&a, &b, &w, &h, &l) {
            Ok(q) => q,
            Err(Error::Synthesis(_)) => {
                out.failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut picks: Vec<usize> = (1..=quad.y.nrows()).filter(|_| rng.random_bool(0.5)).collect();
        if picks.is_empty() {
            picks.push(1);
        }
        let set = IndexSet::new(picks)?;
        let full = is_positive_definite(&quad.y)?;
        let reduced = is_positive_definite(&submatrix(&quad.y, &set)?)?;
        if !full.positive_definite || !reduced.positive_definite {
            out.failures += 1;
        }
        out.min_eig_full = out.min_eig_full.min(full.min_eigenvalue);
        out.min_eig_reduced = out.min_eig_reduced.min(reduced.min_eigenvalue);
    }
    Ok(out)
}

/// Scalar DARE with `a = b = q = r = 1`: `(X, L, rho(a + bL))`.
pub fn golden_ratio_dare() -> Result<(f64, f64, f64)> {
    let one = DMatrix::from_element(1, 1, 1.0);
    let sol = solve_dare(&one, &one, &one, &one, DareOptions::default())?;
    let closed = &one + &one * &sol.l;
    Ok((sol.x[(0, 0)], sol.l[(0, 0)], spectral_radius(&closed)))
}

/// Largest relative difference between synthesized and reference gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMatch {
    pub rel_err_f: f64,
    pub rel_err_m: f64,
    pub free_entries: usize,
}

impl OracleMatch {
    pub fn max(&self) -> f64 {
        self.rel_err_f.max(self.rel_err_m)
    }
}

fn flip_if(l: &DMatrix<f64>, flip: bool) -> DMatrix<f64> {
    if flip {
        -l
    } else {
        l.clone()
    }
}

/// Steady-state gains against the finite-difference reference.
pub fn oracle_match_steady(problem: &Problem, opts: SynthesisOptions, flip_l_sign: bool) -> Result<OracleMatch> {
    let (model, cost) = (&problem.model, &problem.cost);
    let sol = solve_dare_from(&model.a, &model.b, &cost.q, &cost.r, &cost.q0, opts.dare)?;
    let used = flip_if(&sol.l, flip_l_sign);
    let gains = structured_gains(model, &sol.x, &sol.h, &used)?;
    let (f_ref, m_ref) = oracle::steady_gains(model, &sol.h, &sol.l)?;
    Ok(OracleMatch {
        rel_err_f: rel_err(&gains.f, &f_ref),
        rel_err_m: rel_err(&gains.m, &m_ref),
        free_entries: gains.index_set().len(),
    })
}

/// Finite-horizon schedule against the finite-difference reference.
pub fn oracle_match_finite(
    problem: &Problem,
    horizon: usize,
    opts: SynthesisOptions,
    exec: ExecMode,
) -> Result<OracleMatch> {
    let (model, cost) = (&problem.model, &problem.cost);
    let schedule = synthesize_finite(model, cost, horizon, opts, exec)?;
    let fh = riccati_recursion(&model.a, &model.b, &cost.q, &cost.r, &cost.q0, horizon)?;
    let (f_ref, m_ref) = oracle::finite_gains(model, &fh.h, &fh.l)?;
    let worst = |got: &[DMatrix<f64>], want: &[DMatrix<f64>]| {
        got.iter().zip(want).map(|(g, w)| rel_err(g, w)).fold(0.0, f64::max)
    };
    let free = oracle::local_entries(&model.partition).len() * horizon
        + oracle::neighbor_entries(&model.partition).len() * (horizon - 1);
    Ok(OracleMatch {
        rel_err_f: worst(&schedule.f, &f_ref),
        rel_err_m: worst(&schedule.m, &m_ref),
        free_entries: free,
    })
}

/// Worst `|u_per_vehicle(k) - u_monolithic(k)|_inf` over a noisy run.
pub fn distributed_equivalence(plant: Plant<'_>, steps: usize, seed: u64) -> Result<f64> {
    let scenario = Scenario { integral_action: plant.model.integrator.is_some(), ..Scenario::flat(steps, seed) };
    let opts = SimOptions { record_estimates: false, ..SimOptions::default() };
    let collect = |kind| -> Result<Vec<DVector<f64>>> {
        let mut us = Vec::with_capacity(steps);
        simulate_run(plant, kind, &scenario, 0, opts, |rec| us.push(rec.u.clone()))?;
        Ok(us)
    };
    let mono = collect(ControllerKind::Distributed)?;
    let per_vehicle = collect(ControllerKind::DistributedPerVehicle)?;
    Ok(mono.iter().zip(&per_vehicle).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max))
}

/// Withhold each delayed state in turn; returns `(rules tried, rules that
/// raised an information violation)`.
pub fn withholding_violations(problem: &Problem, gains: &DelayedGains, seed: u64) -> Result<(usize, usize)> {
    let model = &problem.model;
    let p = &model.partition;
    let origin_step = 3;
    let mut rng = run_rng(seed, 3);
    let xs: Vec<DVector<f64>> = (0..origin_step + 4)
        .map(|_| DVector::from_fn(model.n(), |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let c = DVector::zeros(model.n());
    let mut tried = 0;
    let mut raised = 0;
    for receiver in 0..p.len() {
        for origin in (0..p.len()).filter(|&o| o != receiver) {
            tried += 1;
            let mut platoon = DistributedPlatoon::new(Realization::distributed(model, gains)?, gains, p)?;
            platoon.bus_mut().withhold(Withhold { receiver, origin, origin_step });
            for x in &xs {
                match platoon.step(x, &c) {
                    Ok(_) => {}
                    Err(Error::InformationViolation { vehicle, .. }) if vehicle == receiver + 1 => {
                        raised += 1;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok((tried, raised))
}

/// Run every check on the configured problem.
pub fn run_validation(config: &RunConfig, opts: &ValidationOptions) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let samples = opts.samples;

    match kronecker_identities(opts.seed, samples) {
        Ok(k) => checks.push(CheckResult::at_most(
            "kronecker-identities",
            k.max(),
            1e-10,
            format!("{samples} random instances per identity"),
        )),
        Err(e) => checks.push(CheckResult::failed("kronecker-identities", &e)),
    }

    match hessian_definiteness_sweep(opts.seed, samples) {
        Ok(s) => {
            let margin = if s.failures == 0 { s.min_eig_full.min(s.min_eig_reduced) } else { f64::NEG_INFINITY };
            checks.push(CheckResult::above(
                "hessian-positive-definite",
                margin,
                0.0,
                format!("{} draws, {} failures; smallest eigenvalue of Y and [Y]_SS", s.samples, s.failures),
            ))
        }
        Err(e) => checks.push(CheckResult::failed("hessian-positive-definite", &e)),
    }

    match golden_ratio_dare() {
        Ok((x, l, rho)) => {
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            let err = (x - phi).abs().max((l + 1.0 / phi).abs());
            let mut c = CheckResult::at_most(
                "golden-ratio-dare",
                err,
                1e-6,
                format!("X = {x:.9}, L = {l:.9}, rho = {rho:.6}"),
            );
            c.passed &= rho < 1.0;
            checks.push(c);
        }
        Err(e) => checks.push(CheckResult::failed("golden-ratio-dare", &e)),
    }

    let problem = config.build()?;
    let synth = config.synthesis.options();

    match oracle_match_steady(&problem, synth, opts.flip_l_sign) {
        Ok(o) => checks.push(CheckResult::at_most(
            "oracle-steady-gains",
            o.max(),
            1e-6,
            format!("{} free entries", o.free_entries),
        )),
        Err(e) => checks.push(CheckResult::failed("oracle-steady-gains", &e)),
    }
    match oracle_match_finite(&problem, opts.oracle_horizon, synth, opts.exec) {
        Ok(o) => checks.push(CheckResult::at_most(
            "oracle-finite-gains",
            o.max(),
            1e-6,
            format!("N = {}, {} free entries", opts.oracle_horizon, o.free_entries),
        )),
        Err(e) => checks.push(CheckResult::failed("oracle-finite-gains", &e)),
    }

    let (gains, _) = synthesize_steady(&problem.model, &problem.cost, synth)?;
    let plant = Plant { model: &problem.model, cost: &problem.cost, gains: &gains, v0: problem.v0() };

    let scenario = Scenario {
        integral_action: problem.model.integrator.is_some(),
        ..Scenario::flat(opts.identity_steps, opts.seed)
    };
    let identities = run_closed_loop(plant, ControllerKind::Distributed, &scenario, SimOptions::default())
        .and_then(|trace| estimator_identity_residuals(plant, &trace));
    match identities {
        Ok(r) => checks.push(CheckResult::at_most(
            "estimator-identities",
            r.zeta_max.max(r.xi_max),
            1e-10,
            format!("{} steps; zeta {:.2e}, xi {:.2e}", r.steps, r.zeta_max, r.xi_max),
        )),
        Err(e) => checks.push(CheckResult::failed("estimator-identities", &e)),
    }

    match distributed_equivalence(plant, opts.equivalence_steps, opts.seed) {
        Ok(d) => checks.push(CheckResult::at_most(
            "distributed-equivalence",
            d,
            1e-12,
            format!("{} steps, per-vehicle vs monolithic", opts.equivalence_steps),
        )),
        Err(e) => checks.push(CheckResult::failed("distributed-equivalence", &e)),
    }

    match withholding_violations(&problem, &gains, opts.seed) {
        Ok((tried, raised)) => checks.push(CheckResult {
            name: "withheld-message-detected".into(),
            passed: tried > 0 && raised == tried,
            value: raised as f64,
            threshold: tried as f64,
            detail: format!("{raised} of {tried} withheld states raised an information violation"),
        }),
        Err(e) => checks.push(CheckResult::failed("withheld-message-detected", &e)),
    }

    Ok(ValidationReport { seed: opts.seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_passes_and_sign_flip_fails() {
        let cfg = RunConfig::default_platoon();
        let opts = ValidationOptions { samples: 20, identity_steps: 500, equivalence_steps: 200, ..Default::default() };
        let report = run_validation(&cfg, &opts).unwrap();
        assert!(report.all_passed(), "{}", report.table());
        let flipped = run_validation(&cfg, &ValidationOptions { flip_l_sign: true, ..opts }).unwrap();
        assert!(!flipped.check("oracle-steady-gains").unwrap().passed);
        let others = flipped.checks.iter().filter(|c| c.name != "oracle-steady-gains");
        assert!(others.into_iter().all(|c| c.passed));
    }

    #[test]
    fn report_is_deterministic() {
        let a = kronecker_identities(5, 10).unwrap();
        let b = kronecker_identities(5, 10).unwrap();
        assert_eq!(a, b);
        let s = hessian_definiteness_sweep(5, 10).unwrap();
        assert_eq!(s, hessian_definiteness_sweep(5, 10).unwrap());
    }
}
