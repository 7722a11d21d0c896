//! Hot kernels on the default rayon pool versus a one-thread pool.
//! Build with `--no-default-features` to time the plain sequential path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use titlegen_core::model::{Example, ModelParams};
use titlegen_core::numerics::Rng;
use titlegen_core::par;
use titlegen_core::retrieval::{build_index, exact_topk, LshConfig};
use titlegen_core::synthetic::{copy_corpus, random_index, random_unit_vectors, toy_config, toy_vocabs};
use titlegen_core::model::Checkpoint;
use titlegen_core::training::batch_loss_and_grad;

fn modes() -> [(&'static str, bool); 2] {
    [("pool", false), ("single", true)]
}

fn run<R: Send>(single: bool, f: impl FnOnce() -> R + Send) -> R {
    if single {
        par::single_threaded(f)
    } else {
        f()
    }
}

fn bench_exact_topk(c: &mut Criterion) {
    let emb = random_index(10_000, 128, 1);
    let q: Vec<f32> = random_unit_vectors(1, 128, 2)[0].iter().map(|&x| x as f32).collect();
    let mut g = c.benchmark_group("exact_topk_10k");
    for (name, single) in modes() {
        g.bench_function(name, |b| b.iter(|| run(single, || exact_topk(black_box(&q), &emb, 5))));
    }
    g.finish();
}

fn toy_checkpoint(n: usize) -> (Vec<titlegen_core::corpus::PairRecord>, Checkpoint) {
    let pairs = copy_corpus(n, 3);
    let (cv, tv) = toy_vocabs(&pairs).unwrap();
    let cfg = toy_config(&cv, &tv);
    let params = ModelParams::init(&cfg, &mut Rng::new(1));
    let ck = Checkpoint::new(cfg, params, cv, tv).unwrap();
    (pairs, ck)
}

fn bench_batch_gradient(c: &mut Criterion) {
    let (pairs, ck) = toy_checkpoint(64);
    let exs: Vec<Example> = pairs
        .iter()
        .map(|p| Example::from_pair(p, &ck.code_vocab, &ck.title_vocab))
        .collect();
    let mut g = c.benchmark_group("batch_gradient");
    g.sample_size(20);
    for bs in [8usize, 32] {
        let idx: Vec<usize> = (0..bs).collect();
        for (name, single) in modes() {
            g.bench_with_input(BenchmarkId::new(name, bs), &idx, |b, idx| {
                b.iter(|| run(single, || batch_loss_and_grad(&exs, idx, &ck.params, &ck.config, 1.0, None).unwrap()))
            });
        }
    }
    g.finish();
}

fn bench_index_build(c: &mut Criterion) {
    let (pairs, ck) = toy_checkpoint(256);
    let mut g = c.benchmark_group("index_build_256");
    g.sample_size(10);
    for (name, single) in modes() {
        g.bench_function(name, |b| {
            b.iter(|| run(single, || build_index(&pairs, &ck, LshConfig::default(), 1).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_exact_topk, bench_batch_gradient, bench_index_build);
criterion_main!(benches);
