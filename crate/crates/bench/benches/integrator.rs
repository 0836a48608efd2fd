use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use nsfde_core::integrator::{simulate_ensemble, EnsembleOptions, PathSimulator, SchemeConfig};
use nsfde_core::lab::empirical_dl;
use nsfde_core::{ConstantLedger, EpsChoice, ExampleConstants, InitialData, NeutralModel, Segment};

fn example() -> NeutralModel {
    NeutralModel::example5(450.0, 2f64.sqrt(), 1.0, 0.25, ExampleConstants::Stated).unwrap()
}

fn single_path(c: &mut Criterion) {
    let model = example();
    let mut group = c.benchmark_group("path");
    for h in [0.02, 0.01, 0.005] {
        let cfg = SchemeConfig::new(h, 4.0, 1);
        let xi = cfg.initial_segment(&model, &InitialData::constant(&[1.0])).unwrap();
        let sim = PathSimulator::new(&model, &xi, &cfg).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(h), &sim, |b, sim| {
            b.iter(|| black_box(sim.run_index(0).unwrap()))
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let model = example();
    let cfg = SchemeConfig::new(0.01, 2.0, 1);
    let xi = cfg.initial_segment(&model, &InitialData::constant(&[1.0])).unwrap();
    let opts = EnsembleOptions::at(&[1.0, 2.0]);
    c.bench_function("ensemble_256", |b| {
        b.iter(|| black_box(simulate_ensemble(&model, &xi, 256, &cfg, &opts).unwrap()))
    });
}

fn ledger(c: &mut Criterion) {
    let model = example();
    c.bench_function("ledger_search", |b| {
        b.iter(|| black_box(ConstantLedger::compute(&model, EpsChoice::Search, None).unwrap()))
    });
}

fn dl(c: &mut Criterion) {
    let a: Vec<Segment> = (0..200)
        .map(|i| Segment::from_scalar_fn(0.05, 256, |t| (t + i as f64 * 0.01).sin()).unwrap())
        .collect();
    let b: Vec<Segment> = a.iter().map(|s| s.scaled(0.9)).collect();
    c.bench_function("empirical_dl_200x200_f1000", |bch| {
        bch.iter(|| black_box(empirical_dl(&a, &b, 0.25, 1000, 3).unwrap()))
    });
}

criterion_group!(benches, single_path, ensemble, ledger, dl);
criterion_main!(benches);
