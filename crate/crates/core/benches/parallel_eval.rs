//! Sequential vs rayon fan-out for fixture-backed prediction batches and
//! the fused-tensor inner loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sarcue::backend::fixture::FixtureBackend;
use sarcue::cues::CuePool;
use sarcue::data::{synthetic_dataset, Demonstrations, Sample, Split};
use sarcue::parallel::map_items;
use sarcue::prompts::PromptSet;
use sarcue::strategies::{run_boc, run_coc, BocOptions, StrategyContext};
use sarcue::toc::fuse;

fn prediction_batch(c: &mut Criterion) {
    let dataset = synthetic_dataset("bench", 0, 0, 64, 9);
    let samples: Vec<Sample> = dataset.split(Split::Test).into_iter().cloned().collect();
    let backend = FixtureBackend::synthetic("bench-model", 8);
    let prompts = PromptSet::bundled();
    let pool = CuePool::standard();
    let demos = Demonstrations::empty();

    let mut group = c.benchmark_group("boc_batch");
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &parallel| {
            b.iter(|| {
                let ctx = StrategyContext::new(&backend, &prompts);
                let options = BocOptions { t: 5, q: 3, seed: 7, prompt_away: None };
                map_items(&samples, parallel, |s| {
                    run_boc(s, ctx, &pool, &options, &demos).unwrap().0
                })
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("coc_batch");
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &parallel| {
            b.iter(|| {
                let ctx = StrategyContext::new(&backend, &prompts);
                map_items(&samples, parallel, |s| {
                    run_coc(s, ctx, &demos).unwrap().0
                })
            })
        });
    }
    group.finish();
}

fn fuse_batch(c: &mut Criterion) {
    let vectors: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..512)
        .map(|i| {
            let v = |offset: usize| {
                (0..7).map(|j| ((i + j + offset) as f64).sin()).collect::<Vec<f64>>()
            };
            (v(0), v(7), v(14))
        })
        .collect();

    let mut group = c.benchmark_group("fuse_batch");
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &parallel, |b, &parallel| {
            b.iter(|| {
                map_items(&vectors, parallel, |(l, c, e)| fuse(l, c, e).values.len())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, prediction_batch, fuse_batch);
criterion_main!(benches);
