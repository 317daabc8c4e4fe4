use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use isac_bench::{channels, config, workload};
use isac_core::detect::ca_cfar;
use isac_core::glrt::{local_refine, ml_full_search, vectorize};
use isac_core::radar::{pipeline, radar_fft, DcfBank};
use isac_core::tx::{optimize, TxOptions};

fn imaging(c: &mut Criterion) {
    let mut g = c.benchmark_group("radar_fft");
    for (n_c, n_sym) in [(256, 64), (2048, 64)] {
        let w = workload(n_c, n_sym);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{n_c}x{n_sym}")), &w, |b, w| {
            b.iter(|| radar_fft(black_box(&w.bundle.frame), &w.bundle.s_ref).unwrap())
        });
    }
    g.finish();

    let w = workload(256, 64);
    let bank = DcfBank::default_for(&w.cfg);
    c.bench_function("dcf_pipeline/256x64x3", |b| {
        b.iter(|| pipeline(black_box(&w.bundle.frame), &bank, &w.bundle.s_ref, &w.cfg).unwrap())
    });
}

fn detection(c: &mut Criterion) {
    let mut g = c.benchmark_group("ca_cfar");
    for (n_c, n_sym) in [(256, 64), (2048, 64)] {
        let w = workload(n_c, n_sym);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{n_c}x{n_sym}")), &w, |b, w| {
            b.iter(|| ca_cfar(black_box(&w.map.mag), 2, 8, 1e-3).unwrap())
        });
    }
    g.finish();
}

fn refinement(c: &mut Criterion) {
    let w = workload(256, 64);
    let y = vectorize(&w.bundle.frame.y);
    let cell = w.map.peak();
    c.bench_function("local_refine/256x64", |b| {
        b.iter(|| local_refine(black_box(&y), cell, &w.bundle.s_ref.s, &w.cfg).unwrap())
    });
    let mut g = c.benchmark_group("ml_full_search");
    g.sample_size(10);
    g.bench_function("256x64/1", |b| {
        b.iter(|| ml_full_search(black_box(&w.bundle.frame.y), &w.bundle.s_ref.s, &w.cfg, 1).unwrap())
    });
    g.finish();
}

fn beamforming(c: &mut Criterion) {
    let mut g = c.benchmark_group("tx_optimize");
    g.sample_size(10);
    for users in [2, 4] {
        let cfg = config(16, 16);
        let ch = channels(&cfg, users);
        g.bench_with_input(BenchmarkId::new("16sc", users), &ch, |b, ch| {
            b.iter(|| optimize(black_box(ch), &cfg, &[0.0], &TxOptions::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, imaging, detection, refinement, beamforming);
criterion_main!(benches);
