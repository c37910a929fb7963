//! Simulator behavior: noise statistics, determinism, traces and guards.

use nalgebra::DMatrix;

use platoon_core::config::{Problem, RunConfig};
use platoon_core::runtime::ControllerKind;
use platoon_core::sim::{
    monte_carlo, run_closed_loop, run_rng, GaussianSampler, MonteCarloOptions, Plant, Scenario, SimOptions,
};
use platoon_core::synthesis::{synthesize_steady, DelayedGains, SynthesisOptions};
use platoon_core::{Error, ExecMode};

fn setup(cfg: &RunConfig) -> (Problem, DelayedGains) {
    let problem = cfg.build().unwrap();
    let (gains, _) = synthesize_steady(&problem.model, &problem.cost, SynthesisOptions::default()).unwrap();
    (problem, gains)
}

fn plant<'a>(problem: &'a Problem, gains: &'a DelayedGains) -> Plant<'a> {
    Plant { model: &problem.model, cost: &problem.cost, gains, v0: problem.v0() }
}

#[test]
fn sampled_noise_matches_its_covariance() {
    let problem = RunConfig::default_platoon().build().unwrap();
    let w = &problem.model.w;
    let sampler = GaussianSampler::from_covariance(w).unwrap();
    let mut rng = run_rng(3, 0);
    let count = 200_000;
    let mut cov = DMatrix::zeros(w.nrows(), w.ncols());
    for _ in 0..count {
        let s = sampler.sample(&mut rng, 1.0);
        cov += &s * s.transpose();
    }
    cov /= count as f64;
    for r in 0..w.nrows() {
        for c in 0..w.ncols() {
            // standard error of a sample second moment
            let se = ((w[(r, r)] * w[(c, c)] + w[(r, c)] * w[(r, c)]) / count as f64).sqrt();
            assert!((cov[(r, c)] - w[(r, c)]).abs() <= 5.0 * se, "({r},{c}): {} vs {}", cov[(r, c)], w[(r, c)]);
        }
    }
}

#[test]
fn identical_seeds_give_identical_traces() {
    let (problem, gains) = setup(&RunConfig::fig2_platoon());
    let p = plant(&problem, &gains);
    let scenario = RunConfig::fig2_platoon().scenario;
    let a = run_closed_loop(p, ControllerKind::Distributed, &scenario, SimOptions::default()).unwrap();
    let b = run_closed_loop(p, ControllerKind::Distributed, &scenario, SimOptions::default()).unwrap();
    assert_eq!(a, b);
    let other = Scenario { seed: scenario.seed + 1, ..scenario };
    let c = run_closed_loop(p, ControllerKind::Distributed, &other, SimOptions::default()).unwrap();
    assert_ne!(a.x, c.x);
}

#[test]
fn all_controllers_see_the_same_noise() {
    let (problem, gains) = setup(&RunConfig::default_platoon());
    let p = plant(&problem, &gains);
    let scenario = Scenario::flat(50, 8);
    let traces: Vec<_> = [ControllerKind::Centralized, ControllerKind::Distributed, ControllerKind::DelayedCentralized]
        .into_iter()
        .map(|k| run_closed_loop(p, k, &scenario, SimOptions::default()).unwrap())
        .collect();
    assert_eq!(traces[0].w, traces[1].w);
    assert_eq!(traces[1].w, traces[2].w);
    assert_eq!(traces[0].x[0], traces[2].x[0]);
}

#[test]
fn monte_carlo_is_independent_of_execution_mode() {
    let (problem, gains) = setup(&RunConfig::default_platoon());
    let p = plant(&problem, &gains);
    let opts = MonteCarloOptions { runs: 4, steps: 300, burn_in: 50, seed: 2, exec: ExecMode::Sequential };
    let seq = monte_carlo(p, ControllerKind::Distributed, &opts).unwrap();
    let par = monte_carlo(p, ControllerKind::Distributed, &MonteCarloOptions { exec: ExecMode::Parallel, ..opts }).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn noiseless_flat_run_stays_at_zero() {
    let (problem, gains) = setup(&RunConfig::default_platoon());
    let p = plant(&problem, &gains);
    let scenario = Scenario { noise_scale: 0.0, ..Scenario::flat(40, 1) };
    for kind in [ControllerKind::Distributed, ControllerKind::DistributedPerVehicle, ControllerKind::Centralized] {
        let trace = run_closed_loop(p, kind, &scenario, SimOptions::default()).unwrap();
        assert!(trace.x.iter().chain(&trace.u).all(|v| v.amax() == 0.0));
        assert_eq!(trace.summary().total_cost, 0.0);
    }
}

#[test]
fn per_vehicle_and_monolithic_csv_are_identical() {
    let (problem, gains) = setup(&RunConfig::fig2_platoon());
    let p = plant(&problem, &gains);
    let scenario = Scenario { horizon: 400, ..RunConfig::fig2_platoon().scenario };
    let opts = SimOptions { record_estimates: false, ..SimOptions::default() };
    let mut csv = Vec::new();
    for kind in [ControllerKind::Distributed, ControllerKind::DistributedPerVehicle] {
        let mut buf = Vec::new();
        run_closed_loop(p, kind, &scenario, opts).unwrap().write_csv(&mut buf).unwrap();
        csv.push(buf);
    }
    assert_eq!(csv[0], csv[1]);
    let text = String::from_utf8(csv.swap_remove(0)).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "k,t_s,v1,d12,v2,d23,v3,u1,u2,u3,stage_cost,cum_cost,z1");
    assert_eq!(text.lines().count(), 401);
}

#[test]
fn diverging_loop_hits_the_guard() {
    let (mut problem, gains) = setup(&RunConfig::default_platoon());
    problem.model.a *= 3.0;
    let p = plant(&problem, &gains);
    let err = run_closed_loop(p, ControllerKind::Centralized, &Scenario::flat(10_000, 1), SimOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::Instability { guard, .. } if guard == 1e6));
}

#[test]
fn integral_action_mismatch_is_rejected() {
    let (problem, gains) = setup(&RunConfig::default_platoon());
    let p = plant(&problem, &gains);
    let scenario = Scenario { integral_action: true, ..Scenario::flat(10, 1) };
    assert!(matches!(
        run_closed_loop(p, ControllerKind::Distributed, &scenario, SimOptions::default()),
        Err(Error::Scenario(_))
    ));
}

#[test]
fn summary_reports_energy_relative_to_lead() {
    let (problem, gains) = setup(&RunConfig::default_platoon());
    let p = plant(&problem, &gains);
    let trace = run_closed_loop(p, ControllerKind::Distributed, &Scenario::flat(500, 4), SimOptions::default()).unwrap();
    let s = trace.summary();
    assert_eq!(s.input_energy.len(), 3);
    assert_eq!(s.input_energy_vs_lead_pct[0], 0.0);
    let expected = (s.input_energy[1] - s.input_energy[0]) / s.input_energy[0] * 100.0;
    assert!((s.input_energy_vs_lead_pct[1] - expected).abs() < 1e-12);
    assert!((s.mean_stage_cost * 500.0 - s.total_cost).abs() < 1e-9 * s.total_cost);
}
