use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use pclpv::galerkin::{build_tensors, default_rule};
use pclpv::orthopoly::{make_basis, ParameterDistribution};
use pclpv::plant::{missile_quasi_lpv, MissileConfig, UncertainLinearSystem};
use pclpv::simulate::validate_galerkin;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn tensors(c: &mut Criterion) {
    let sys = missile_quasi_lpv(&MissileConfig::reference(), (-20.0, 20.0)).unwrap();
    let (q, r) = (DMatrix::identity(2, 2) * 0.2, DMatrix::identity(1, 1));
    let mut group = c.benchmark_group("build_tensors");
    group.sample_size(10);
    for order in [3, 5] {
        let basis = make_basis(sys.distribution(), order).unwrap();
        let rule = default_rule(&sys, &basis, None).unwrap();
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, order), &order, |b, _| {
                b.iter(|| pool.install(|| black_box(build_tensors(&sys, &basis, &q, &r, &rule).unwrap())))
            });
        }
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let dist = ParameterDistribution::uniform(-1.0, 1.0).unwrap();
    let sys = UncertainLinearSystem::new(1, 1, dist, |d| DMatrix::from_element(1, 1, -(1.0 + 0.5 * d)), |_| {
        DMatrix::from_element(1, 1, 0.0)
    })
    .unwrap();
    let basis = make_basis(dist, 3).unwrap();
    let mut group = c.benchmark_group("galerkin_monte_carlo");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            b.iter(|| pool.install(|| black_box(validate_galerkin(&sys, &basis, &[1.0], 1.0, 20_000, 0).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, tensors, monte_carlo);
criterion_main!(benches);
