use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use fk_bench::{circle_measure, orbit_pair, random_matrix, random_weights, rotation_suspension};
use fk_core::matching::{compat_matrix, max_matching, max_matching_size, slope_constrained_matching};
use fk_core::measures::prokhorov;
use fk_core::partitions::assignment_max;

fn discrete(c: &mut Criterion) {
    let mut g = c.benchmark_group("discrete_matching");
    for n in [256, 1024, 4096] {
        let m = random_matrix(n, 0.02, 1);
        g.bench_with_input(BenchmarkId::new("size", n), &m, |b, m| b.iter(|| max_matching_size(m)));
        g.bench_with_input(BenchmarkId::new("traced", n), &m, |b, m| b.iter(|| max_matching(m).unwrap()));
    }
    g.finish();
}

fn grid_dp(c: &mut Criterion) {
    let s = rotation_suspension();
    let mut g = c.benchmark_group("grid_dp");
    g.sample_size(10);
    for t in [25.0, 50.0, 100.0] {
        let (ox, oy) = orbit_pair(&s, t, 0.05, 2);
        g.bench_with_input(BenchmarkId::new("eps_0.2", t), &(ox, oy), |b, (ox, oy)| {
            b.iter(|| slope_constrained_matching(&s, ox, oy, 0.1, 0.2).unwrap())
        });
    }
    g.finish();
}

fn compat(c: &mut Criterion) {
    let s = rotation_suspension();
    let (ox, oy) = orbit_pair(&s, 100.0, 0.05, 3);
    c.bench_function("compat_matrix_t100", |b| b.iter(|| compat_matrix(&ox, &oy, 0.05).unwrap()));
}

fn prokhorov_flow(c: &mut Criterion) {
    let mut g = c.benchmark_group("prokhorov");
    g.sample_size(10);
    for n in [100, 500, 2000] {
        let (mu, nu) = (circle_measure(n, 4), circle_measure(n, 5));
        g.bench_with_input(BenchmarkId::new("atoms", n), &(mu, nu), |b, (mu, nu)| b.iter(|| prokhorov(mu, nu).unwrap()));
    }
    g.finish();
}

fn assignment(c: &mut Criterion) {
    let mut g = c.benchmark_group("assignment");
    for n in [8, 64, 256] {
        let w = random_weights(n, 6);
        g.bench_with_input(BenchmarkId::new("cells", n), &w, |b, w| b.iter(|| assignment_max(w)));
    }
    g.finish();
}

criterion_group!(benches, discrete, grid_dp, compat, prokhorov_flow, assignment);
criterion_main!(benches);
