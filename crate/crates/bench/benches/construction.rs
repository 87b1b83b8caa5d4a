use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mrc_align::alignment::plan_alignment;
use mrc_align::dof::achievable_improved;
use mrc_align::linalg::nullspace_basis;
use mrc_align::pipeline::{build, BuildOptions};
use mrc_align::rng::{complex_gaussian_matrix, trial_rng};
use mrc_align::Tolerance;

fn nullspace(c: &mut Criterion) {
    let tol = Tolerance::default();
    let mut group = c.benchmark_group("nullspace");
    for (rows, cols) in [(12, 16), (33, 36), (64, 96)] {
        let a = complex_gaussian_matrix(&mut trial_rng(1, 0), rows, cols);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{rows}x{cols}")), &a, |b, a| {
            b.iter(|| nullspace_basis(black_box(a), &tol).unwrap())
        });
    }
    group.finish();
}

fn formulas(c: &mut Criterion) {
    c.bench_function("improved_dof_grid_k8", |b| {
        b.iter(|| {
            let mut acc = 0i64;
            for n in 1..=48u64 {
                for m in 1..=n {
                    acc += *achievable_improved(m, n, black_box(8)).unwrap().d_user.numer();
                }
            }
            acc
        })
    });
    c.bench_function("plan_k5_2_5", |b| b.iter(|| plan_alignment(black_box(2), 5, 5, false).unwrap()));
}

fn full_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build");
    group.sample_size(10);
    for (m, n, k) in [(2, 3, 3), (7, 12, 4), (3, 4, 5)] {
        group.bench_function(format!("k{k}_{m}_{n}"), |b| b.iter(|| build(&BuildOptions::new(m, n, k, black_box(0))).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, nullspace, formulas, full_build);
criterion_main!(benches);
