use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand_distr::{Distribution, StandardNormal};

use seirsl_core::abc::{PriorSpec, Scenario};
use seirsl_core::seed;
use seirsl_core::{
    compute_vector, estimate_moments, integrate_seir, knn_entropy, NoiseModel, ObservedSeries, ParameterVector,
    SubsetMask, SynLikTarget,
};

fn truth() -> ParameterVector {
    ParameterVector::new(0.4, 0.2, 1.0 / 17.0).unwrap()
}

fn ode(c: &mut Criterion) {
    let scenario = Scenario::baseline(NoiseModel::None);
    let theta = truth();
    c.bench_function("integrate_seir/100_days", |b| {
        b.iter(|| integrate_seir(black_box(&theta), &scenario.init, &scenario.grid).unwrap())
    });
}

fn synthetic_likelihood(c: &mut Criterion) {
    let mask = SubsetMask::from_names(&["mean_E", "mean_I", "final_size_R"]).unwrap();
    let exact = Scenario::baseline(NoiseModel::None);
    let traj = integrate_seir(&truth(), &exact.init, &exact.grid).unwrap();
    let s_obs = compute_vector(&ObservedSeries::exact(&traj), mask).unwrap();
    let target = SynLikTarget::new(
        s_obs,
        Scenario::baseline(NoiseModel::Poisson),
        200,
        0,
        PriorSpec::default(),
    )
    .unwrap();
    let theta = truth();
    let mut seed = 0u64;
    c.bench_function("estimate_moments/poisson_200_reps", |b| {
        b.iter(|| {
            seed += 1;
            estimate_moments(black_box(&theta), &target, seed).unwrap()
        })
    });
}

fn entropy(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_entropy");
    let mut rng = seed::stream(1);
    for n in [200usize, 1000] {
        let sample: Vec<[f64; 3]> = (0..n)
            .map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut rng)))
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &sample, |b, s| {
            b.iter(|| knn_entropy(black_box(s), 4).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, ode, synthetic_likelihood, entropy);
criterion_main!(benches);
