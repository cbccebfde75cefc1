use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spgr::data::{normalize_features, synth_classification, NormMode, SynthSpec};
use spgr::estimators::{BatchSchedule, Setting};
use spgr::model::{Dataset, Objective, SmoothLoss};
use spgr::par::{self, Exec};
use spgr::prox::Regularizer;
use spgr::solver::{self, Algorithm, SolverConfig};

fn instance(n: usize, d: usize) -> Dataset {
    let mut s = SynthSpec::new(n, d);
    s.noise = 0.1;
    normalize_features(&synth_classification(&s).expect("valid spec").data, NormMode::UnitRowNorm)
}

fn full_gradient(c: &mut Criterion) {
    let ds = instance(20_000, 100);
    let reg = Regularizer::l0(1e-4).expect("lambda >= 0");
    let x: Vec<f64> = (0..ds.dim()).map(|j| 0.01 * j as f64).collect();
    let mut group = c.benchmark_group("full_gradient");
    for exec in [Exec::Sequential, Exec::Parallel] {
        let obj = Objective::new(SmoothLoss::NllsSigmoid, reg.clone(), &ds).expect("valid objective").with_exec(exec);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &obj, |b, obj| {
            b.iter(|| black_box(obj.full_gradient(black_box(&x))))
        });
    }
    group.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let ds = instance(2_000, 50);
    let reg = Regularizer::l0(1e-4).expect("lambda >= 0");
    let obj = Objective::new(SmoothLoss::NllsSigmoid, reg, &ds).expect("valid objective");
    let cfg = SolverConfig::new(Algorithm::Spgr, Setting::Online)
        .with_schedule(BatchSchedule::SpgrOnline { s1: 256, s2: 16, q: 16 })
        .with_iterations(200)
        .with_residual_every(50);
    let mut group = c.benchmark_group("spgr_seed_sweep");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| {
                par::map_indexed(exec, 8, |s| {
                    solver::run(&obj, &cfg.clone().with_seed(s as u64)).expect("run succeeds").grad_evals()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, full_gradient, seed_sweep);
criterion_main!(benches);
