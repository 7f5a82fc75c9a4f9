use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nsplab_bench::{gaussian_matrix, gaussian_vector, sparse_system, unit_norm_dictionary};
use nsplab_core::nsp::certify_nsp;
use nsplab_core::numerics::RngStream;
use nsplab_core::solver::{solve_bp_lp, solve_l1_synthesis, AdmmParams, RecoveryProblem};
use nsplab_core::width::{project_onto_cone, project_onto_cone_exact, width_ds_gamma_mc, ConeParams};

fn bench_certify(c: &mut Criterion) {
    let mut group = c.benchmark_group("certify_nsp");
    group.sample_size(10);
    for &(m, n, s) in &[(6, 10, 1), (10, 14, 1), (8, 12, 2)] {
        let a = gaussian_matrix(m, n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{n}_s{s}")), &a, |bch, a| {
            bch.iter(|| certify_nsp(black_box(a), s, 1e-9).unwrap())
        });
    }
    group.finish();
}

fn bench_projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("cone_projection");
    for &n in &[16, 128] {
        let cone = ConeParams::new(0.5, 2, n).unwrap();
        let mut h: Vec<f64> = gaussian_vector(n, 3).iter().map(|v| v.abs()).collect();
        h.sort_by(|a, b| b.total_cmp(a));
        group.bench_with_input(BenchmarkId::new("exact", n), &h, |bch, h| {
            bch.iter(|| project_onto_cone_exact(black_box(h), &cone).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dykstra", n), &h, |bch, h| {
            bch.iter(|| project_onto_cone(black_box(h), &cone, 1e-10).unwrap())
        });
    }
    group.finish();
}

fn bench_width(c: &mut Criterion) {
    let dict = unit_norm_dictionary(32, 64, 5);
    let cone = ConeParams::new(0.5, 2, 64).unwrap();
    let rng = RngStream::new(1, 1);
    c.bench_function("width_mc_64_1e4", |bch| {
        bch.iter(|| width_ds_gamma_mc(&dict, &cone, 10_000, &rng).unwrap())
    });
}

fn bench_solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("basis_pursuit_20x40");
    group.sample_size(20);
    let (b, y) = sparse_system(20, 40, 3, 11);
    let problem = RecoveryProblem::new(b.clone(), y.clone(), 0.0, None).unwrap();
    let params = AdmmParams::default();
    group.bench_function("admm", |bch| {
        bch.iter(|| solve_l1_synthesis(black_box(&problem), &params).unwrap())
    });
    group.bench_function("simplex", |bch| {
        bch.iter(|| solve_bp_lp(black_box(&b), &y, 1e-9).unwrap())
    });
    group.finish();
}

criterion_group!(kernels, bench_certify, bench_projection, bench_width, bench_solvers);
criterion_main!(kernels);
