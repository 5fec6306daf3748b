use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use csal_core::evaluation::{excess_risk, passive_baseline, stream_rng};
use csal_core::problems::{make_hard_instance, make_smooth_problem, CostFamily, HardInstanceParams, Marginal, SmoothSpec};
use csal_core::{learner, BoundParams, NoiseModel, PartitionGeometry, Problem};

fn ramp(dim: usize) -> impl Problem {
    let spec = SmoothSpec {
        dim,
        family: CostFamily::Ramp { slope: 1.0, flat_width: 0.0, center: 0.4, center_jitter: 0.0 },
        marginal: Marginal::Uniform,
    };
    make_smooth_problem(spec, NoiseModel::Bernoulli).unwrap()
}

fn params(p: &dyn Problem, n: u64, smoothness: f64) -> BoundParams {
    BoundParams::new(n, p.num_labels(), 1.0, smoothness, PartitionGeometry::dyadic(p.dim()).unwrap()).unwrap()
}

fn learner_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("active_run");
    for dim in [1, 2] {
        let p = ramp(dim);
        for n in [1u64 << 10, 1 << 13, 1 << 16] {
            g.bench_with_input(BenchmarkId::new(format!("ramp_d{dim}"), n), &n, |b, &n| {
                b.iter(|| learner::run(params(&p, n, 1.0), &p, black_box(1)).unwrap())
            });
        }
    }
    let hard = make_hard_instance(HardInstanceParams::default()).unwrap();
    g.bench_function("hard_instance_8192", |b| {
        b.iter(|| learner::run(params(&hard, 8192, 2.0), &hard, black_box(1)).unwrap())
    });
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let p = ramp(1);
    let (_, clf, _) = learner::run(params(&p, 1 << 14, 1.0), &p, 3).unwrap();
    c.bench_function("excess_risk_1e5", |b| {
        b.iter(|| excess_risk(&clf, &p, 100_000, &mut stream_rng(black_box(4), 1)).unwrap())
    });
    let geometry = PartitionGeometry::dyadic(1).unwrap();
    c.bench_function("passive_baseline_2^14", |b| {
        b.iter(|| passive_baseline(1 << 14, &p, 1.0, &geometry, &mut stream_rng(black_box(5), 2)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = learner_runs, evaluation
}
criterion_main!(benches);
