//! Benchmarks for the hot paths: resampling, supervised estimation, and
//! Viterbi decoding, all on the desk-scale synthetic preset.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use gapmark_core::hmm::{estimate, viterbi_decode};
use gapmark_core::paradigms::{apply_paradigm, Paradigm};
use gapmark_core::sampling::{assign_labels, build_sensor_map, resample};
use gapmark_core::synth::{aruba_like, generate};

fn bench_pipeline(c: &mut Criterion) {
    let out = generate(&aruba_like(20_000, 7)).unwrap();
    let stream = &out.stream;
    let map = build_sensor_map(stream).unwrap();
    let intervals = gapmark_core::events::build_annotation_intervals(stream).unwrap();

    c.bench_function("resample_20k", |b| {
        b.iter(|| {
            let series = resample(stream, &map, 7.0).unwrap();
            assign_labels(&series, &intervals).unwrap()
        })
    });

    let (train, space) = apply_paradigm(&out.gapped, Paradigm::P3, &[]).unwrap();
    c.bench_function("estimate_p3_20k", |b| {
        b.iter(|| estimate(&train, &space, 0.01).unwrap())
    });

    let model = estimate(&train, &space, 0.01).unwrap();
    let obs = out.gapped.codes();
    c.bench_function("viterbi_20k", |b| {
        b.iter_batched(
            || obs.clone(),
            |obs| viterbi_decode(&model, &obs).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
