use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use triggerline::analytic::{grid, sweep_table, AnalyticParams};
use triggerline::engine::count_receptions;
use triggerline::{PerCurve, Position};
use triggerline_bench::{receivers, short_scenario};

fn analytic(c: &mut Criterion) {
    let curve = PerCurve::default_calibration();
    let base = AnalyticParams::new(&curve, 10.0, 0.0, 30.0, 0.6, 0.104);
    let distances = grid(-300.0, 500.0, 20.0);
    c.bench_function("analytic_sweep_123", |b| {
        b.iter(|| sweep_table(&base, &curve, black_box(&[10.0, 20.0, 30.0]), &distances))
    });
}

fn per_lookup(c: &mut Criterion) {
    let curve = PerCurve::default_calibration();
    let profile = curve.at_density(20.0);
    let distances: Vec<f64> = (0..1024).map(|i| i as f64 * 1.7).collect();
    c.bench_function("per_profile_1024", |b| {
        b.iter(|| {
            distances
                .iter()
                .map(|&d| profile.per(black_box(d)))
                .sum::<f64>()
        })
    });
    c.bench_function("per_curve_1024", |b| {
        b.iter(|| {
            distances
                .iter()
                .map(|&d| curve.per(black_box(d), 20.0))
                .sum::<f64>()
        })
    });
}

fn broadcast(c: &mut Criterion) {
    let profile = PerCurve::default_calibration().at_density(30.0);
    let mut group = c.benchmark_group("bsm_broadcast");
    for n in [1000, 3000] {
        let rx = receivers(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &rx, |b, rx| {
            b.iter(|| count_receptions(Position::default(), rx.iter().copied(), &profile, &mut rng))
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let quiet = short_scenario(120, 20.0, false);
    group.bench_function("120s_no_bsm", |b| {
        b.iter(|| triggerline::run(black_box(&quiet)).unwrap())
    });
    let busy = short_scenario(30, 10.0, true);
    group.bench_function("30s_bsm", |b| {
        b.iter(|| triggerline::run(black_box(&busy)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, analytic, per_lookup, broadcast, simulation);
criterion_main!(benches);
