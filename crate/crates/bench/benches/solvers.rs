use std::hint::black_box;

use armdp::constrained::{quick_blp, solve_occupancy_lp, three_layer_solve, ConstrainedConfig};
use armdp::sim::{simulate_epochs, SimConfig, SimPolicy};
use armdp::unconstrained::{bisec_tau_rvi, one_pdsi, tau_rvi, SolverConfig};
use armdp::{make_delay, DelayKind, PrimalMdp};
use armdp_bench::benchmark_instance;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn unconstrained(c: &mut Criterion) {
    let mut g = c.benchmark_group("unconstrained");
    for z_max in [10u32, 20, 40] {
        let l = benchmark_instance(0.3, 11, z_max);
        g.bench_with_input(BenchmarkId::new("tau_rvi", z_max), &l, |b, l| {
            b.iter(|| tau_rvi(l, black_box(18.0), 0.5, 10_000, 1e-10).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("one_pdsi", z_max), &l, |b, l| {
            b.iter(|| one_pdsi(l, 0.9, 100_000, 1e-10).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("bisec_tau_rvi", z_max), &l, |b, l| {
            b.iter(|| bisec_tau_rvi(l, 1e-9, 0.5, &SolverConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn constrained(c: &mut Criterion) {
    let l = benchmark_instance(0.3, 11, 40);
    let cfg = ConstrainedConfig::default();
    let mut g = c.benchmark_group("constrained");
    g.sample_size(20);
    g.bench_function("quick_blp_f0.05", |b| b.iter(|| quick_blp(&l, black_box(0.05), &cfg).unwrap()));
    g.bench_function("three_layer_f0.05", |b| b.iter(|| three_layer_solve(&l, black_box(0.05), &cfg).unwrap()));
    g.bench_function("occupancy_lp_f0.05", |b| b.iter(|| solve_occupancy_lp(&l, black_box(0.05)).unwrap()));
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let m = PrimalMdp::benchmark_two_state();
    let d = make_delay(&DelayKind::Binary { p: 0.3, y_max: 11 }).unwrap();
    let l = benchmark_instance(0.3, 11, 22);
    let policy = SimPolicy::Lifted(one_pdsi(&l, 0.9, 100_000, 1e-10).unwrap().policy.into());
    let cfg = SimConfig {
        horizon: 100_000,
        burn_in: 1_000,
        ..SimConfig::default()
    };
    let mut g = c.benchmark_group("simulation");
    g.sample_size(20);
    g.bench_function("epochs_1e5_slots", |b| b.iter(|| simulate_epochs(&m, &d, &policy, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, unconstrained, constrained, simulation);
criterion_main!(benches);
