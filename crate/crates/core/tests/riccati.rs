//! Riccati recursion against dynamic-programming brute force, and the
//! finite-horizon gains against their steady-state limit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use platoon_core::config::RunConfig;
use platoon_core::lqr::{riccati_recursion, solve_dare_from, DareOptions};
use platoon_core::sim::run_rng;
use platoon_core::synthesis::{synthesize_finite, synthesize_steady, SynthesisOptions};
use platoon_core::ExecMode;

/// `min_u sum_{k<N} x'Qx + u'Ru + x(N)'Q0 x(N)` for `w = 0`, by stacking all
/// inputs and solving the normal equations.
fn brute_force_cost(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q0: &DMatrix<f64>,
    x0: &DVector<f64>,
    horizon: usize,
) -> f64 {
    let (n, m) = (a.nrows(), b.ncols());
    let dim = m * horizon;
    // x(k) = free(k) + forced(k) * U
    let mut free = vec![x0.clone()];
    let mut forced = vec![DMatrix::zeros(n, dim)];
    for k in 0..horizon {
        let mut next = a * &forced[k];
        // u(k) first enters x(k+1)
        next.columns_mut(k * m, m).copy_from(b);
        forced.push(next);
        free.push(a * &free[k]);
    }
    let mut hess = DMatrix::zeros(dim, dim);
    let mut lin = DVector::zeros(dim);
    let mut constant = 0.0;
    for k in 0..=horizon {
        let weight = if k == horizon { q0 } else { q };
        hess += forced[k].transpose() * weight * &forced[k];
        lin += forced[k].transpose() * weight * &free[k];
        constant += free[k].dot(&(weight * &free[k]));
        if k < horizon {
            let mut block = hess.view_mut((k * m, k * m), (m, m));
            block += r;
        }
    }
    let u = hess.clone().lu().solve(&(-&lin)).expect("convex problem");
    u.dot(&(&hess * &u)) + 2.0 * lin.dot(&u) + constant
}

#[test]
fn recursion_value_matches_brute_force_on_tiny_instances() {
    for seed in 0..20u64 {
        let mut rng = run_rng(seed, 0);
        let n = 1 + (seed as usize % 2);
        let m = 1 + (seed as usize / 2 % 2);
        let horizon = 1 + (seed as usize % 3);
        let mut draw = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = draw(n, n);
        let b = draw(n, m);
        let g = draw(n, n);
        let q = &g * g.transpose();
        let g = draw(m, m);
        let r = &g * g.transpose() + DMatrix::identity(m, m) * 0.3;
        let g = draw(n, n);
        let q0 = &g * g.transpose();
        let x0 = DVector::from_column_slice(draw(n, 1).as_slice());
        let fh = riccati_recursion(&a, &b, &q, &r, &q0, horizon).unwrap();
        let dp = x0.dot(&(&fh.x[0] * &x0));
        let bf = brute_force_cost(&a, &b, &q, &r, &q0, &x0, horizon);
        assert!((dp - bf).abs() <= 1e-8 * bf.abs().max(1.0), "seed {seed}: {dp} vs {bf}");
    }
}

#[test]
fn dare_tail_steps_do_not_increase() {
    let problem = RunConfig::default_platoon().build().unwrap();
    let (m, c) = (&problem.model, &problem.cost);
    let sol = solve_dare_from(&m.a, &m.b, &c.q, &c.r, &c.q0, DareOptions::default()).unwrap();
    assert!(sol.stabilizing && sol.spectral_radius < 1.0);
    let tail = &sol.tail_steps[sol.tail_steps.len().saturating_sub(10)..];
    assert!(tail.len() >= 10);
    assert!(tail.windows(2).all(|w| w[1] <= w[0]), "{tail:?}");
}

#[test]
fn long_horizon_gains_converge_to_steady_state() {
    let problem = RunConfig::default_platoon().build().unwrap();
    let (model, cost) = (&problem.model, &problem.cost);
    let (steady, _) = synthesize_steady(model, cost, SynthesisOptions::default()).unwrap();
    let schedule = synthesize_finite(model, cost, 500, SynthesisOptions::default(), ExecMode::Parallel).unwrap();
    assert_eq!(schedule.horizon(), 500);
    assert_eq!(schedule.m.len(), 499);
    assert!((&schedule.f[0] - &steady.f).amax() <= 1e-8);
    assert!((schedule.m_at(1).unwrap() - &steady.m).amax() <= 1e-8);
}

#[test]
fn finite_schedule_is_independent_of_execution_mode() {
    let problem = RunConfig::default_platoon().build().unwrap();
    let opts = SynthesisOptions::default();
    let seq = synthesize_finite(&problem.model, &problem.cost, 30, opts, ExecMode::Sequential).unwrap();
    let par = synthesize_finite(&problem.model, &problem.cost, 30, opts, ExecMode::Parallel).unwrap();
    assert_eq!(seq.f, par.f);
    assert_eq!(seq.m, par.m);
}

#[test]
fn zero_dynamics_give_zero_schedule() {
    let mut problem = RunConfig::default_platoon().build().unwrap();
    problem.model.a.fill(0.0);
    let schedule =
        synthesize_finite(&problem.model, &problem.cost, 5, SynthesisOptions::default(), ExecMode::Sequential).unwrap();
    assert!(schedule.f.iter().chain(&schedule.m).all(|g| g.amax() == 0.0));
}
