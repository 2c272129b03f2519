use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hapc_bench::query_points;
use hapc_core::fatigue::ActivationKernel;
use hapc_core::harness::compare::all_variants;
use hapc_core::{
    banded_error, compare_variants, fit_fatigue, run_scenario, FatigueParams, MuscleState, ReferencePath,
    ScenarioConfig,
};
use hapc_core::identification::{fatigue_protocol_trace, FatigueProtocol, FitOptions, FitProtocol};

fn projection(c: &mut Criterion) {
    let path = ReferencePath::default_gait();
    let queries = query_points(1000);
    c.bench_function("banded_error_1000_queries", |b| {
        b.iter(|| {
            for q in &queries {
                black_box(banded_error(&path, *q, 0.035, 0.1));
            }
        })
    });
}

fn muscle(c: &mut Criterion) {
    let p = FatigueParams::RIGHT_QUADRICEPS;
    let kernel = ActivationKernel::new(&p, 0.01).unwrap();
    c.bench_function("activation_step_100_ticks", |b| {
        b.iter(|| {
            let mut s = MuscleState::rested();
            for i in 0..100 {
                s = kernel.step(s, if i % 20 < 10 { 1.0 } else { 0.0 });
            }
            black_box(s)
        })
    });
}

fn scenario(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    let cfg = ScenarioConfig {
        n_cycles: 16,
        record_trace: false,
        ..Default::default()
    };
    group.bench_function("hapc_16_cycles", |b| b.iter(|| black_box(run_scenario(&cfg).unwrap())));
    let cfgs = all_variants(&cfg);
    group.bench_function("compare_16_cycles", |b| b.iter(|| black_box(compare_variants(&cfgs).unwrap())));
    group.finish();
}

fn identification(c: &mut Criterion) {
    let mut group = c.benchmark_group("identification");
    group.sample_size(10);
    let p = FatigueParams::LEFT_HAMSTRING;
    let trace = fatigue_protocol_trace(&p, 100.0, &FatigueProtocol::default(), 0.01).unwrap();
    let opts = FitOptions {
        starts: 1,
        ..Default::default()
    };
    group.bench_function("fit_left_hamstring_single_start", |b| {
        b.iter(|| black_box(fit_fatigue(&trace, &FitProtocol::default(), &p, &opts).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, projection, muscle, scenario, identification);
criterion_main!(benches);
