//! Sequential vs. rayon execution for the data-parallel stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parzc::dataset::{split, synth_generate_with, SynthBenchConfig, ZcDataset};
use parzc::gbdt::{gbdt_fit_with, GbdtConfig};
use parzc::mabn::{init_params, MabnConfig};
use parzc::par::Exec;
use parzc::train::score_features;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn synth(c: &mut Criterion) {
    let cfg = SynthBenchConfig {
        n_archs: 200,
        ..SynthBenchConfig::default()
    };
    let mut g = c.benchmark_group("synth_generate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| synth_generate_with(&cfg, e).unwrap())
        });
    }
    g.finish();
}

fn scoring(c: &mut Criterion) {
    let bench = synth_generate_with(&SynthBenchConfig::default(), Exec::Parallel).unwrap();
    let ds = ZcDataset::from_records(bench.records, None, "synthetic", 7).unwrap();
    let params = init_params(&MabnConfig::desk(ds.x.cols), 0).unwrap();
    let mut g = c.benchmark_group("score_1000");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| score_features(&params, &ds.x, 50, 0, e).unwrap())
        });
    }
    g.finish();
}

fn gbdt(c: &mut Criterion) {
    let bench = synth_generate_with(&SynthBenchConfig::default(), Exec::Parallel).unwrap();
    let ds = split(
        ZcDataset::from_records(bench.records, None, "synthetic", 7).unwrap(),
        0.8,
        42,
    )
    .unwrap();
    let cfg = GbdtConfig {
        n_estimators: 50,
        ..GbdtConfig::default()
    };
    let mut g = c.benchmark_group("gbdt_fit_50");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| gbdt_fit_with(&ds.x, &ds.y, &cfg, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, synth, scoring, gbdt);
criterion_main!(benches);
