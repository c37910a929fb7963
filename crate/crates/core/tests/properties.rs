//! Randomized invariants of the algebra, the synthesis and the runtime.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use platoon_core::config::RunConfig;
use platoon_core::lqr::{riccati_step, spectral_radius};
use platoon_core::model::{CostSpec, LinearPlatoonModel, SubsystemPartition};
use platoon_core::runtime::{ActiveController, ControllerKind};
use platoon_core::sim::run_rng;
use platoon_core::structured::vec_star;
use platoon_core::synthesis::{build_quadratic_steady, delay_penalty, synthesize_steady, SynthesisOptions};
use platoon_core::validate::{hessian_definiteness_sweep, kronecker_identities, oracle};

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn pd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let g = gaussian(rng, n, n, 1.0);
    (&g * g.transpose() + DMatrix::identity(n, n) * 0.5) * scale
}

/// A random chain model with the platoon partition: `A` couples adjacent
/// vehicles only, each vehicle actuates its own states.
fn random_chain(seed: u64) -> (LinearPlatoonModel, CostSpec) {
    let mut rng = run_rng(seed, 0);
    let p = SubsystemPartition::platoon(3).unwrap();
    let (n, m) = (p.n(), p.m());
    let a = p.mask_blocks(&(DMatrix::identity(n, n) * 0.9 + gaussian(&mut rng, n, n, 0.15)), |i, j| i.abs_diff(j) <= 1);
    let mut b = DMatrix::zeros(n, m);
    for i in 0..p.len() {
        for r in p.state_range(i) {
            for c in p.input_range(i) {
                b[(r, c)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let w = pd(&mut rng, n, 0.1);
    let model = LinearPlatoonModel::from_parts(a, b, w.clone(), w, p, 0.1).unwrap();
    let base = RunConfig::default_platoon().build().unwrap().cost;
    let q = pd(&mut rng, n, 1.0);
    let r = pd(&mut rng, m, 1.0);
    let cost = CostSpec { q0: q.clone(), q, r, weights: base.weights };
    (model, cost)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn vectorization_identities_hold(seed in any::<u64>()) {
        let k = kronecker_identities(seed, 5).unwrap();
        prop_assert!(k.max() <= 1e-10, "{k:?}");
    }

    #[test]
    fn delay_hessian_and_principal_submatrices_are_pd(seed in any::<u64>()) {
        let s = hessian_definiteness_sweep(seed, 5).unwrap();
        prop_assert_eq!(s.failures, 0);
        prop_assert!(s.min_eig_full > 0.0 && s.min_eig_reduced > 0.0);
    }

    #[test]
    fn riccati_step_preserves_symmetry_and_psd(seed in any::<u64>(), n in 1usize..5, m in 1usize..4) {
        let mut rng = run_rng(seed, 0);
        let a = gaussian(&mut rng, n, n, 1.0);
        let b = gaussian(&mut rng, n, m, 1.0);
        let g = gaussian(&mut rng, n, n, 1.0);
        let q = &g * g.transpose();
        let r = pd(&mut rng, m, 1.0);
        let g = gaussian(&mut rng, n, n, 1.0);
        let x_next = &g * g.transpose();
        let step = riccati_step(&x_next, &a, &b, &q, &r).unwrap();
        prop_assert_eq!(&step.x, &step.x.transpose());
        let min = step.x.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min >= -1e-10 * step.x.amax().max(1.0), "min eigenvalue {min}");
    }

    #[test]
    fn structured_gains_are_optimal_and_ordered(seed in any::<u64>()) {
        let (model, cost) = random_chain(seed);
        let Ok((gains, sol)) = synthesize_steady(&model, &cost, SynthesisOptions::default()) else {
            // not every draw is stabilizable within the iteration budget
            return Ok(());
        };
        prop_assert!(spectral_radius(&(&model.a + &model.b * &sol.l)) < 1.0);
        prop_assert!(gains.mask_f.conforms(&gains.f) && gains.mask_m.conforms(&gains.m));

        let quad = build_quadratic_steady(&model.a, &model.b, &model.w, &gains.h, &gains.l).unwrap();
        let mut d = DMatrix::zeros(model.m(), 2 * model.n());
        d.columns_mut(0, model.n()).copy_from(&gains.f);
        d.columns_mut(model.n(), model.n()).copy_from(&gains.m);
        let mask_d = gains.mask_f.hconcat(&gains.mask_m).unwrap();
        let ds = vec_star(&d, &mask_d).unwrap();
        let grad = quad.reduced_gradient(&mask_d.index_set(), &ds).unwrap();
        let scale = quad.b.amax().max(1.0);
        prop_assert!(grad.amax() <= 1e-9 * scale, "gradient {:e}", grad.amax());

        prop_assert!(gains.delay_penalty_rate >= -1e-12);
        prop_assert!(gains.delay_penalty_rate <= gains.delayed_baseline_rate + 1e-12);

        let (f_ref, m_ref) = oracle::steady_gains(&model, &gains.h, &gains.l).unwrap();
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / b.amax().max(1.0);
        prop_assert!(rel(&gains.f, &f_ref) <= 1e-6 && rel(&gains.m, &m_ref) <= 1e-6);
        let pen = delay_penalty(&model.a, &model.b, &model.w, &gains.h, &gains.l, &gains.f, &gains.m);
        let oracle_pen = oracle::steady_objective(&model, &gains.h, &gains.l, &gains.f, &gains.m);
        prop_assert!((pen - oracle_pen).abs() <= 1e-10 * oracle_pen.abs().max(1.0));
    }

    #[test]
    fn decoupled_models_reach_the_centralized_gain(seed in any::<u64>()) {
        let (model, cost) = random_chain(seed);
        let model = model.decoupled().unwrap();
        let cost = cost.decoupled(&model.partition);
        let Ok((gains, _)) = synthesize_steady(&model, &cost, SynthesisOptions::default()) else {
            return Ok(());
        };
        let closed = &model.a + &model.b * &gains.l;
        prop_assert!((&gains.f - &gains.l).amax() <= 1e-9 * gains.l.amax().max(1.0));
        prop_assert!((&gains.m - &gains.l * closed).amax() <= 1e-9 * gains.l.amax().max(1.0));
        prop_assert!(gains.delay_penalty_rate.abs() <= 1e-12 * gains.noise_rate.max(1.0));
    }

    #[test]
    fn per_vehicle_execution_matches_monolithic(seed in any::<u64>()) {
        let (model, cost) = random_chain(seed);
        let Ok((gains, _)) = synthesize_steady(&model, &cost, SynthesisOptions::default()) else {
            return Ok(());
        };
        let mut mono = ActiveController::new(ControllerKind::Distributed, &model, &gains).unwrap();
        let mut split = ActiveController::new(ControllerKind::DistributedPerVehicle, &model, &gains).unwrap();
        let mut rng = run_rng(seed, 1);
        let mut x = DVector::from_fn(model.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
        for _ in 0..60 {
            let c = DVector::from_fn(model.n(), |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
            let u1 = mono.step(&x, &c).unwrap();
            let u2 = split.step(&x, &c).unwrap();
            prop_assert!((&u1 - &u2).amax() <= 1e-12 * u1.amax().max(1.0));
            let w = DVector::from_fn(model.n(), |_, _| rng.sample::<f64, _>(StandardNormal));
            x = &model.a * &x + &model.b * &u1 + w + c;
        }
    }
}
