//! Benchmarks for the panel construction, the wild-bootstrap pass, and the
//! closed-form limit laws.
//!
//! The panel target pins the all-k cost at p = 1e5 (one sort plus prefix
//! sums); the bootstrap targets pin the per-replicate O(np + p log p) cost
//! and its independence from the grid size.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use lstat::limits::{joint_topk_cdf, sth_max_cdf};
use lstat::{wild_bootstrap, KGrid, RngStream, TStatPanel};
use lstat_bench::{normal_matrix, normal_vector};

fn panel_all_k(c: &mut Criterion) {
    let t = normal_vector(100_000, 1);
    c.bench_function("panel_from_t_p1e5_all_k", |b| {
        b.iter_batched(
            || t.clone(),
            |t| {
                let panel = TStatPanel::from_t_values(t);
                let mut acc = 0.0;
                for k in 1..=panel.p() {
                    acc += panel.l_statistic(k).unwrap();
                }
                black_box(acc)
            },
            BatchSize::LargeInput,
        )
    });
}

fn bootstrap_pass(c: &mut Criterion) {
    let x = normal_matrix(100, 100, 2);
    let single = KGrid::new(vec![50], 100).unwrap();
    let table1 = KGrid::new(vec![1, 5, 25, 50, 100], 100).unwrap();
    c.bench_function("wild_bootstrap_n100_p100_B500_grid1", |b| {
        b.iter(|| black_box(wild_bootstrap(&x, &single, 500, RngStream::new(3)).unwrap()))
    });
    c.bench_function("wild_bootstrap_n100_p100_B500_grid5", |b| {
        b.iter(|| black_box(wild_bootstrap(&x, &table1, 500, RngStream::new(3)).unwrap()))
    });
}

fn limit_laws(c: &mut Criterion) {
    c.bench_function("sth_max_cdf_s5", |b| {
        b.iter(|| black_box(sth_max_cdf(black_box(0.37), 5).unwrap()))
    });
    let xs = [2.5, 2.0, 1.4, 0.9, 0.1, -0.4, -1.2, -2.0];
    c.bench_function("joint_topk_cdf_k8", |b| {
        b.iter(|| black_box(joint_topk_cdf(black_box(&xs)).unwrap()))
    });
}

criterion_group!(benches, panel_all_k, bootstrap_pass, limit_laws);
criterion_main!(benches);
