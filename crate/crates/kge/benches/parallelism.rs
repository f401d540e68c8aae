//! Compares the rayon-parallel evaluation and gradient paths against their
//! sequential twins on the built-in synthetic dataset. Negative sampling is
//! done outside the timed region so both paths measure identical work.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use kge::eval::{evaluate, evaluate_serial, EvalConfig};
use kge::graph::{DatasetStats, Split};
use kge::models::{MarginLossConfig, ModelFamily, ModelParams};
use kge::optim::{batch_gradients, batch_gradients_serial};
use kge::rng;
use kge::samplers::{CorruptSampler, NegativeBatch, NegativeSampler};

const DIM: usize = 64;
const SEED: u64 = 7;

fn bench_evaluate(c: &mut Criterion) {
    let kg = kge::synth::synthetic_typed_kg(SEED);
    let store = kg.store;
    let stats = DatasetStats::compute(&store);
    let params = ModelParams::init(
        ModelFamily::TransE,
        DIM,
        store.n_entities(),
        store.n_relations(),
        SEED,
    );
    let cfg = EvalConfig::default();

    let mut group = c.benchmark_group("evaluate_test_split");
    group.bench_function(BenchmarkId::new("parallel", DIM), |b| {
        b.iter(|| evaluate(black_box(&params), &store, Split::Test, &stats, &cfg).unwrap())
    });
    group.bench_function(BenchmarkId::new("serial", DIM), |b| {
        b.iter(|| evaluate_serial(black_box(&params), &store, Split::Test, &stats, &cfg).unwrap())
    });
    group.finish();
}

fn bench_batch_gradients(c: &mut Criterion) {
    let kg = kge::synth::synthetic_typed_kg(SEED);
    let store = kg.store;
    let params = ModelParams::init(
        ModelFamily::TransE,
        DIM,
        store.n_entities(),
        store.n_relations(),
        SEED,
    );
    let loss_cfg = MarginLossConfig::default();
    let positives = store.split(Split::Train).to_vec();
    let mut sampler_rng = rng::stream(SEED, rng::STREAM_SAMPLER);
    let negatives: Vec<NegativeBatch> = positives
        .iter()
        .map(|&p| CorruptSampler::default().sample(&store, p, 10, &mut sampler_rng))
        .collect();

    let mut group = c.benchmark_group("batch_gradients_train_split");
    group.bench_function(BenchmarkId::new("parallel", positives.len()), |b| {
        b.iter(|| batch_gradients(black_box(&params), &positives, &negatives, &loss_cfg))
    });
    group.bench_function(BenchmarkId::new("serial", positives.len()), |b| {
        b.iter(|| batch_gradients_serial(black_box(&params), &positives, &negatives, &loss_cfg))
    });
    group.finish();
}

criterion_group!(benches, bench_evaluate, bench_batch_gradients);
criterion_main!(benches);
