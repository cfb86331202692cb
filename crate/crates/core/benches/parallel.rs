//! Compares the data-parallel sampling passes against the always-sequential
//! baseline. With `--no-default-features` the "parallel" side degrades to
//! sequential, which is the point of the comparison.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use entropic_ricci::chain::builtin;
use entropic_ricci::curvature::b_a_with_gradients;
use entropic_ricci::parallel::{map_indexed, map_indexed_seq};
use entropic_ricci::sample::{gauge_potential, interior_density, stream_rng};
use entropic_ricci::MarkovChain;

fn margin_sample(chain: &MarkovChain, kappa: f64, seed: u64, i: usize) -> f64 {
    let mut rng = stream_rng(seed, i as u64);
    let rho = interior_density(chain, &mut rng, 1.0, 1e-6);
    let psi = gauge_potential(chain, &mut rng);
    let g = b_a_with_gradients(chain, &rho, &psi);
    g.b - kappa * g.a
}

fn bench_curvature_sampling(c: &mut Criterion) {
    let chain = builtin("hypercube:3").unwrap();
    let mut group = c.benchmark_group("curvature-margin-sampling");
    for &count in &[2_000usize, 20_000] {
        group.bench_with_input(BenchmarkId::new("parallel", count), &count, |b, &count| {
            b.iter(|| {
                let v = map_indexed(count, |i| margin_sample(&chain, 2.0 / 3.0, 42, i));
                black_box(v.iter().cloned().fold(f64::INFINITY, f64::min))
            })
        });
        group.bench_with_input(BenchmarkId::new("sequential", count), &count, |b, &count| {
            b.iter(|| {
                let v = map_indexed_seq(count, |i| margin_sample(&chain, 2.0 / 3.0, 42, i));
                black_box(v.iter().cloned().fold(f64::INFINITY, f64::min))
            })
        });
    }
    group.finish();
}

fn bench_entropy_fisher_pass(c: &mut Criterion) {
    let chain = builtin("torus:3x3").unwrap();
    let mut group = c.benchmark_group("entropy-fisher-pass");
    let body = |i: usize| {
        let mut rng = stream_rng(7, i as u64);
        let rho = interior_density(&chain, &mut rng, 1.0, 1e-9);
        entropic_ricci::analysis::entropy(&chain, &rho)
            + entropic_ricci::analysis::fisher(&chain, &rho).min(1e12)
    };
    let count = 2_000usize;
    group.bench_with_input(BenchmarkId::new("parallel", count), &count, |b, &count| {
        b.iter(|| black_box(map_indexed(count, body).iter().sum::<f64>()))
    });
    group.bench_with_input(BenchmarkId::new("sequential", count), &count, |b, &count| {
        b.iter(|| black_box(map_indexed_seq(count, body).iter().sum::<f64>()))
    });
    group.finish();
}

criterion_group!(benches, bench_curvature_sampling, bench_entropy_fisher_pass);
criterion_main!(benches);
