use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use spheroid_bench::cell_ball;
use spheroid_core::measure::{measure_snapshot, MeasureConfig};
use spheroid_core::mechanics::{step_positions, StepContext};
use spheroid_core::metabolism::{integrate, Clamp};
use spheroid_core::stats::{select_and_run, GroupedSamples, ALPHA};
use spheroid_core::surrogate::{latin_hypercube, FitOptions, GpModel, TrainingSet};
use spheroid_core::{
    MechanicalParams, MetabolicState, RngStream, SimConfig, SpheroidGroup, SupplyConfig,
};

fn mechanics(c: &mut Criterion) {
    let params = MechanicalParams::default();
    let mut g = c.benchmark_group("step_positions");
    for n in [100, 1000, 5000] {
        let cells = cell_ball(n, 1);
        let ctx = StepContext {
            dt: 0.1,
            time: 0.0,
            step: 0,
            domain_half_extent: 1000.0,
            locomotion_scale: 1.0,
            locomotion_persistence: 10.0,
            rng: RngStream::new(1),
        };
        g.bench_with_input(BenchmarkId::from_parameter(n), &cells, |b, cells| {
            b.iter_batched_ref(
                || cells.clone(),
                |cells| step_positions(cells, &params, &ctx).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

fn metabolism(c: &mut Criterion) {
    let supply = SupplyConfig::default();
    let k = SpheroidGroup::Large.parameters().metabolic;
    let s = MetabolicState::initial(&supply, 770.0);
    c.bench_function("integrate 6 min at 0.1", |b| {
        b.iter(|| integrate(black_box(&s), &k, 6.0, 0.1, Some(Clamp::from(&supply))).unwrap())
    });
}

fn measurement(c: &mut Criterion) {
    let cells: Vec<_> = cell_ball(1000, 2)
        .iter()
        .map(|a| spheroid_core::lifecycle::CellRecord {
            id: a.id,
            position: a.position,
            state: a.state,
            atp: a.metabolic.atp,
        })
        .collect();
    let cfg = MeasureConfig::for_radius(6.0);
    c.bench_function("measure 1000 cells", |b| {
        b.iter(|| measure_snapshot(black_box(&cells), 6.0, &cfg))
    });
}

fn surrogate(c: &mut Criterion) {
    let bounds = vec![(0.0, 1.0); 4];
    let x = latin_hypercube(128, &bounds, &RngStream::new(4));
    let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| v.sin()).sum()).collect();
    let names: Vec<String> = (0..4).map(|i| format!("x{i}")).collect();
    let data = TrainingSet::new(names, x, y, bounds, None).unwrap();
    let model = GpModel::fit(&data, &FitOptions::default()).unwrap();
    let q = [0.3, 0.6, 0.1, 0.8];
    c.bench_function("gp predict n=128 d=4", |b| {
        b.iter(|| model.predict(black_box(&q)))
    });
    let mut g = c.benchmark_group("gp fit");
    g.sample_size(10);
    g.bench_function("n=128 d=4", |b| {
        b.iter(|| GpModel::fit(&data, &FitOptions::default()).unwrap())
    });
    g.finish();
}

fn statistics(c: &mut Criterion) {
    let groups = GroupedSamples::new(
        (0..3)
            .map(|k| {
                let v = (0..10).map(|i| ((i * 37 + k * 11) % 17) as f64).collect();
                (format!("g{k}"), v)
            })
            .collect(),
    )
    .unwrap();
    c.bench_function("select_and_run 3x10", |b| {
        b.iter(|| select_and_run(black_box(&groups), ALPHA).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let cfg = SimConfig {
        duration: 2.0 * 1440.0,
        ..SimConfig::desk_scale()
    };
    let params = SpheroidGroup::Large.parameters();
    let mut g = c.benchmark_group("simulation");
    g.sample_size(10);
    g.bench_function("2 days desk scale", |b| {
        b.iter(|| spheroid_core::run_simulation(&cfg, &params).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    mechanics,
    metabolism,
    measurement,
    surrogate,
    statistics,
    simulation
);
criterion_main!(benches);
