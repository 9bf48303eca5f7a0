use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use mutable_core::detect::{detect_all, DetectorConfig};
use mutable_core::discretize::Binning;
use mutable_core::instrument::DrumLayout;
use mutable_core::pipeline::{run, PipelineConfig};
use mutable_core::scenarios;
use mutable_core::trace::generate;
use mutable_core::transport::{decode_raw, decode_tap, encode_raw, encode_tap, RawAccelMessage, TapMessage};
use mutable_core::Policy;

fn detector(c: &mut Criterion) {
    let layout = DrumLayout::default();
    let imu = generate(&scenarios::moving(100, &layout, 0.7, 1), &layout).unwrap().imu();
    let cfg = DetectorConfig::default();
    let bin = Binning::default();
    c.bench_function("detect_all/70s", |b| b.iter(|| detect_all(black_box(&imu), &cfg, &bin).unwrap()));
}

fn policies(c: &mut Criterion) {
    let layout = DrumLayout::default();
    let trace = generate(&scenarios::same_spot(200, 2, 0.7, 1), &layout).unwrap().records;
    let mut g = c.benchmark_group("run/200taps");
    for (name, policy) in [("continuous", Policy::Continuous), ("adaptive", Policy::Adaptive)] {
        let cfg = PipelineConfig { policy, ..Default::default() };
        g.bench_function(name, |b| b.iter(|| run(black_box(&trace), &cfg, 7).unwrap()));
    }
    g.finish();
}

fn wire(c: &mut Criterion) {
    let tap = TapMessage { version: 1, seq: 42, t: 1_234_567, intensity: 1.25, level: 3, movement_flag: true };
    let raw = RawAccelMessage { t: 1_234_567, ax: 0.0123, ay: -0.5, az: 0.9812 };
    c.bench_function("wire/tap_round_trip", |b| b.iter(|| decode_tap(&encode_tap(black_box(&tap))).unwrap()));
    c.bench_function("wire/raw_round_trip", |b| {
        b.iter_batched(|| raw, |m| decode_raw(&encode_raw(&m).unwrap()).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, detector, policies, wire);
criterion_main!(benches);
