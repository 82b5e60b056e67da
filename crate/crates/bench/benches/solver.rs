use std::hint::black_box;

use bregvr::baselines::{find_saddle, OracleMethod};
use bregvr::certificates::RateConstants;
use bregvr::solver::{IterateState, StageCarry};
use bregvr::{builtin, AnchorState, EstimatorKind, Instance, SamplingMode, SamplingScheme, Solver, SolverConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const INSTANCES: [&str; 3] = ["lasso-saddle", "strongly-convex-quad", "entropy-game-20"];

fn load(name: &str) -> Instance {
    builtin(name).unwrap().build().unwrap()
}

fn carry(instance: &Instance) -> StageCarry {
    StageCarry {
        iterates: IterateState::at(instance.x0.clone(), instance.v0.clone()),
        x_bar: instance.x0.clone(),
        v_bar: instance.v0.clone(),
    }
}

fn estimator_draw(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimator_draw");
    for name in INSTANCES {
        let instance = load(name);
        let scheme = SamplingScheme::new(&instance.problem, SamplingMode::LipschitzProportional);
        let anchor = AnchorState::new(&instance.problem, instance.x0.clone(), instance.v0.clone()).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| scheme.estimate_primal(instance.problem.h(), &anchor, black_box(&instance.x0), 0))
        });
    }
    group.finish();
}

fn inner_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("inner_step");
    for name in INSTANCES {
        let instance = load(name);
        let scheme = SamplingScheme::new(&instance.problem, SamplingMode::Uniform);
        let gamma = 0.9 * RateConstants::from_problem(&instance.problem, &scheme).max_ergodic_step();
        for estimator in [EstimatorKind::VarianceReduced, EstimatorKind::Exact] {
            let solver = Solver::with_estimator(
                &instance.problem,
                &scheme,
                SolverConfig::ergodic(gamma, 1, 1, 0),
                estimator,
            )
            .unwrap();
            let state = solver.start_stage(1, carry(&instance)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            group.bench_with_input(BenchmarkId::new(format!("{estimator:?}"), name), &state, |b, state| {
                b.iter_batched_ref(
                    || state.clone(),
                    |s| solver.inner_step(s, 0, &mut rng).unwrap(),
                    criterion::BatchSize::SmallInput,
                )
            });
        }
    }
    group.finish();
}

fn stage(c: &mut Criterion) {
    let mut group = c.benchmark_group("stage_m50");
    for name in INSTANCES {
        let instance = load(name);
        let scheme = SamplingScheme::new(&instance.problem, SamplingMode::Uniform);
        let gamma = 0.9 * RateConstants::from_problem(&instance.problem, &scheme).max_ergodic_step();
        let solver = Solver::new(&instance.problem, &scheme, SolverConfig::ergodic(gamma, 50, 1, 0)).unwrap();
        let start = carry(&instance);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        group.bench_function(name, |b| b.iter(|| solver.run_stage(1, start.clone(), &mut rng).unwrap()));
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    for (name, method) in [
        ("strongly-convex-quad", OracleMethod::ClosedForm),
        ("lasso-saddle", OracleMethod::HighAccuracyDeterministic),
    ] {
        let instance = load(name);
        group.bench_function(name, |b| b.iter(|| find_saddle(&instance.problem, method).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, estimator_draw, inner_step, stage, oracle);
criterion_main!(benches);
