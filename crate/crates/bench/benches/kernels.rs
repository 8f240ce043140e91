use std::hint::black_box;

use cogsim_bench::bipolar_pairs;
use cogsim_core::sim::ConvJob;
use cogsim_core::{circ_conv, ArrayConfig, ArraySim, SimMode};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn reference(c: &mut Criterion) {
    let mut g = c.benchmark_group("circ_conv");
    for d in [256, 1024, 4096] {
        let pairs = bipolar_pairs(1, d, 1);
        let (a, b) = &pairs[0];
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |bench, _| {
            bench.iter(|| circ_conv(black_box(a), black_box(b)).unwrap())
        });
    }
    g.finish();
}

fn functional_tiles(c: &mut Criterion) {
    let mut g = c.benchmark_group("pe_array_functional");
    g.sample_size(10);
    for (k, d) in [(4, 256), (32, 512), (8, 1024)] {
        let pairs = bipolar_pairs(k, d, 2);
        g.bench_with_input(BenchmarkId::new(format!("k{k}"), d), &d, |bench, _| {
            bench.iter(|| {
                let mut sim = ArraySim::<i32>::new(ArrayConfig::default(), SimMode::Functional).unwrap();
                sim.circconv_batch(ConvJob::Data(black_box(&pairs)), None).unwrap()
            })
        });
    }
    g.finish();
}

fn timing_only(c: &mut Criterion) {
    let mut g = c.benchmark_group("pe_array_timing");
    for (k, d) in [(210, 1024), (1, 8192), (64, 4096)] {
        g.bench_with_input(BenchmarkId::new(format!("k{k}"), d), &d, |bench, _| {
            let mut sim = ArraySim::<i32>::new(ArrayConfig::default(), SimMode::TimingOnly).unwrap();
            bench.iter(|| sim.circconv_batch(ConvJob::Shape { k, d }, None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, reference, functional_tiles, timing_only);
criterion_main!(benches);
