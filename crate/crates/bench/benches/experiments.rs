use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use slice_arena::{experiment, simulate, CalibrationParams, Granularity};

fn short_runs(c: &mut Criterion) {
    let params = CalibrationParams::default();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for id in [1, 5] {
        let mut cfg = experiment(id).unwrap();
        cfg.run_length_s = 120.0;
        g.bench_function(format!("exp{id}_120s"), |b| {
            b.iter(|| black_box(simulate(&cfg, &params, 0, 42).unwrap().audit))
        });
    }
    let mut cfg = experiment(1).unwrap();
    cfg.run_length_s = 30.0;
    cfg.workload.traffic.granularity = Granularity::Packet;
    g.bench_function("exp1_30s_packet", |b| {
        b.iter(|| black_box(simulate(&cfg, &params, 0, 42).unwrap().audit))
    });
    g.finish();
}

criterion_group!(benches, short_runs);
criterion_main!(benches);
