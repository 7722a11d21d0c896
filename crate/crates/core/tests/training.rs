use proptest::prelude::*;
use titlegen_core::corpus::{build_vocab_for, Side};
use titlegen_core::model::{Checkpoint, Example, ModelConfig, ModelParams};
use titlegen_core::numerics::Rng;
use titlegen_core::synthetic::{copy_corpus, toy_config, toy_vocabs};
use titlegen_core::training::{
    batch_loss_and_grad, clip_global_norm, make_batches, train, validate, TrainConfig,
};

fn setup(n: usize, seed: u64) -> (Vec<Example>, ModelConfig, Checkpoint) {
    let pairs = copy_corpus(n, seed);
    let (cv, tv) = toy_vocabs(&pairs).unwrap();
    let cfg = ModelConfig {
        emb_dim: 8,
        enc_hidden: 8,
        dec_hidden: 12,
        attn_dim: 8,
        ..toy_config(&cv, &tv)
    };
    let exs: Vec<Example> = pairs.iter().map(|p| Example::from_pair(p, &cv, &tv)).collect();
    let params = ModelParams::init(&cfg, &mut Rng::new(seed));
    let ck = Checkpoint::new(cfg.clone(), params, cv, tv).unwrap();
    (exs, cfg, ck)
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs,
        learning_rate: 1e-2,
        early_stop_patience: epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn batches_partition_the_corpus() {
    let one = make_batches(&[20], 32, 0).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].indices, vec![0]);
    let lens = vec![20; 10];
    let sizes: Vec<usize> = make_batches(&lens, 3, 0).unwrap().iter().map(|b| b.len()).collect();
    assert_eq!(sizes, vec![3, 3, 3, 1]);
    assert_eq!(make_batches(&lens, 3, 9).unwrap(), make_batches(&lens, 3, 9).unwrap());
    assert!(make_batches(&[], 3, 0).is_err());
}

#[test]
fn same_seed_gives_identical_runs() {
    let (exs, cfg, _) = setup(12, 3);
    let a = train(&exs, &exs, &cfg, &quick(4), |_| {}).unwrap();
    let b = train(&exs, &exs, &cfg, &quick(4), |_| {}).unwrap();
    let losses = |o: &titlegen_core::training::TrainOutcome| {
        o.metrics.iter().map(|m| (m.train_loss, m.valid_ppl)).collect::<Vec<_>>()
    };
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(a.params, b.params);
}

#[test]
fn loss_falls_from_the_first_epoch() {
    let (exs, cfg, _) = setup(12, 4);
    let mut seen = Vec::new();
    let out = train(&exs, &exs, &cfg, &quick(8), |m| seen.push(m.clone())).unwrap();
    assert_eq!(seen, out.metrics);
    let best = &out.metrics[out.best_epoch - 1];
    assert!(out.metrics[0].train_loss > best.train_loss);
    assert!(out.metrics.iter().all(|m| m.valid_ppl >= best.valid_ppl));
    let ppl = validate(&exs, &out.params, &cfg).unwrap();
    assert_eq!(ppl, best.valid_ppl);
}

#[test]
fn early_stopping_respects_patience() {
    let (exs, cfg, _) = setup(8, 5);
    let tc = TrainConfig {
        early_stop_patience: 1,
        learning_rate: 0.5,
        ..quick(30)
    };
    let out = train(&exs, &exs, &cfg, &tc, |_| {}).unwrap();
    let n = out.metrics.len();
    assert!(n < 30, "no early stop in {n} epochs");
    assert!(n - out.best_epoch <= 1);
}

#[test]
fn generation_only_uniform_model_has_perplexity_near_vocab_size() {
    let pairs = copy_corpus(16, 6);
    // every title token in vocabulary, so no target needs the copy path
    let cv = build_vocab_for(&pairs, Side::Code, 5000, 1).unwrap();
    let tv = build_vocab_for(&pairs, Side::Title, 5000, 1).unwrap();
    let cfg = toy_config(&cv, &tv);
    let exs: Vec<Example> = pairs.iter().map(|p| Example::from_pair(p, &cv, &tv)).collect();
    let mut params = ModelParams::init(&cfg, &mut Rng::new(6)).zeros_like();
    // gate saturated toward generation; all logits equal
    params.gen_b.data_mut()[0] = 40.0;
    let ppl = validate(&exs, &params, &cfg).unwrap();
    // PAD and BOS are never predicted, so the support is V - 2
    let v = cfg.title_vocab_size as f64;
    assert!((ppl - (v - 2.0)).abs() < 1e-6 * v, "{ppl} vs {v}");
    assert!((ppl / v - 1.0).abs() < 0.2);
}

#[test]
fn perplexity_does_not_depend_on_batching() {
    let (exs, cfg, ck) = setup(10, 7);
    let reference = validate(&exs, &ck.params, &cfg).unwrap();
    let total: usize = exs.iter().map(|e| e.target_ids.len()).sum();
    for bs in [1, 3, 4, 10] {
        let idx: Vec<usize> = (0..exs.len()).collect();
        let mut nll = 0.0;
        for chunk in idx.chunks(bs) {
            let tokens: usize = chunk.iter().map(|&i| exs[i].target_ids.len()).sum();
            let (loss, _) = batch_loss_and_grad(&exs, chunk, &ck.params, &cfg, 0.0, None).unwrap();
            nll += loss * tokens as f64;
        }
        let ppl = (nll / total as f64).exp();
        assert!((ppl - reference).abs() < 1e-10 * reference, "batch {bs}: {ppl} vs {reference}");
    }
}

#[test]
fn reloaded_checkpoint_validates_identically() {
    let (exs, cfg, _) = setup(10, 8);
    let out = train(&exs, &exs, &cfg, &quick(2), |_| {}).unwrap();
    let pairs = copy_corpus(10, 8);
    let (cv, tv) = toy_vocabs(&pairs).unwrap();
    let ck = Checkpoint::new(cfg.clone(), out.params.clone(), cv, tv).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.q2q");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(
        validate(&exs, &back.params, &back.config).unwrap(),
        validate(&exs, &out.params, &cfg).unwrap()
    );
    // identical inputs give the same bytes
    let again = train(&exs, &exs, &cfg, &quick(2), |_| {}).unwrap();
    let ck2 = Checkpoint::new(cfg, again.params, ck.code_vocab.clone(), ck.title_vocab.clone()).unwrap();
    assert_eq!(ck.to_bytes(), ck2.to_bytes());
}

#[test]
fn coverage_warmup_schedule() {
    let tc = TrainConfig {
        epochs: 10,
        warmup_fraction: 0.5,
        ..TrainConfig::default()
    };
    let w: Vec<f64> = (0..10).map(|e| tc.coverage_weight_at(e, 1.0)).collect();
    assert_eq!(w, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    assert!(TrainConfig { warmup_fraction: 1.5, ..tc.clone() }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..tc }.validate().is_err());
}

#[test]
fn dropout_changes_the_gradient_but_not_determinism() {
    let (exs, cfg, ck) = setup(6, 9);
    let cfg = ModelConfig {
        dropout_rate: 0.2,
        ..cfg
    };
    let idx: Vec<usize> = (0..exs.len()).collect();
    let plain = batch_loss_and_grad(&exs, &idx, &ck.params, &cfg, 1.0, None).unwrap();
    let a = batch_loss_and_grad(&exs, &idx, &ck.params, &cfg, 1.0, Some((1, 0))).unwrap();
    let b = batch_loss_and_grad(&exs, &idx, &ck.params, &cfg, 1.0, Some((1, 0))).unwrap();
    let c = batch_loss_and_grad(&exs, &idx, &ck.params, &cfg, 1.0, Some((1, 1))).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_ne!(a.0, plain.0);
    assert_ne!(a.0, c.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clipped_norm_is_bounded(seed in 0u64..1000, scale in 0.01f64..100.0, max in 0.1f64..10.0) {
        let (_, cfg, ck) = setup(4, 1);
        let mut rng = Rng::new(seed);
        let mut g = ck.params.zeros_like();
        let flat: Vec<f64> = (0..g.num_values()).map(|_| rng.uniform(-scale, scale)).collect();
        g.assign_flat(&flat);
        let before = clip_global_norm(&mut g, max);
        prop_assert!(g.global_norm() <= max + 1e-6);
        if before <= max {
            prop_assert_eq!(g.to_flat(), flat);
        }
        let _ = cfg;
    }

    #[test]
    fn every_example_appears_once_per_epoch(
        lens in prop::collection::vec(1usize..200, 1..60),
        bs in 1usize..9,
        seed in 0u64..50,
    ) {
        let batches = make_batches(&lens, bs, seed).unwrap();
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= bs));
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..lens.len()).collect::<Vec<_>>());
    }
}
