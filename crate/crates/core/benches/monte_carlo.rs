use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use platoon_core::config::RunConfig;
use platoon_core::runtime::ControllerKind;
use platoon_core::sim::{monte_carlo, MonteCarloOptions, Plant};
use platoon_core::synthesis::{synthesize_finite, synthesize_steady, SynthesisOptions};
use platoon_core::ExecMode;

fn bench_monte_carlo(c: &mut Criterion) {
    let problem = RunConfig::default_platoon().build().unwrap();
    let (gains, _) = synthesize_steady(&problem.model, &problem.cost, SynthesisOptions::default()).unwrap();
    let plant = Plant { model: &problem.model, cost: &problem.cost, gains: &gains, v0: problem.v0() };

    let mut group = c.benchmark_group("monte_carlo_16x2000");
    group.sample_size(10);
    for (label, exec) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        let opts = MonteCarloOptions { runs: 16, steps: 2_000, burn_in: 200, seed: 1, exec };
        group.bench_with_input(BenchmarkId::from_parameter(label), &opts, |b, opts| {
            b.iter(|| monte_carlo(plant, ControllerKind::Distributed, opts).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("finite_horizon_200");
    group.sample_size(10);
    for (label, exec) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        group.bench_function(label, |b| {
            b.iter(|| synthesize_finite(&problem.model, &problem.cost, 200, SynthesisOptions::default(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_monte_carlo);
criterion_main!(benches);
