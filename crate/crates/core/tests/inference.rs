use std::sync::OnceLock;

use titlegen_core::corpus::{PairRecord, TokenSequence, Vocabulary, BOS, END, UNK};
use titlegen_core::inference::{
    beam_search, detokenize, generate, greedy_decode, BeamConfig, BeamHypothesis,
};
use titlegen_core::model::{
    decode_step, feed_id, init_decoder, prepare_source, Checkpoint, Example,
};
use titlegen_core::numerics::Rng;
use titlegen_core::synthetic::{copy_corpus, toy_config, toy_vocabs, train_toy};
use titlegen_core::training::TrainConfig;

fn model() -> &'static (Vec<PairRecord>, Checkpoint) {
    static M: OnceLock<(Vec<PairRecord>, Checkpoint)> = OnceLock::new();
    M.get_or_init(|| {
        let pairs = copy_corpus(20, 7);
        let vocabs = toy_vocabs(&pairs).unwrap();
        let cfg = toy_config(&vocabs.0, &vocabs.1);
        let tc = TrainConfig {
            batch_size: 4,
            epochs: 80,
            learning_rate: 1e-2,
            early_stop_patience: 80,
            ..TrainConfig::default()
        };
        let (ck, _) = train_toy(&pairs, &pairs, cfg, &tc, vocabs).unwrap();
        (pairs, ck)
    })
}

fn source(ck: &Checkpoint, code: &TokenSequence) -> Example {
    Example::source_only(code, &ck.code_vocab, &ck.title_vocab)
}

fn random_code(vocab: &Vocabulary, rng: &mut Rng) -> TokenSequence {
    let n = 3 + rng.below(20);
    let toks = (0..n)
        .map(|_| {
            if rng.bernoulli(0.2) {
                format!("ident_{}", rng.below(1000))
            } else {
                vocab.tokens()[6 + rng.below(vocab.len() - 6)].clone()
            }
        })
        .collect();
    TokenSequence::new(toks).unwrap()
}

/// Replays a hypothesis and sums the per-step log-probabilities.
fn replay(ex: &Example, ck: &Checkpoint, hyp: &BeamHypothesis) -> f64 {
    let src = prepare_source(ex, &ck.params, &ck.config).unwrap();
    let mut state = init_decoder(&src.enc, &ck.params);
    let mut total = 0.0;
    for w in hyp.ext_token_ids.windows(2) {
        let prev = feed_id(w[0], ck.config.title_vocab_size);
        let out = decode_step(prev, &state, &src, &ck.params, &ck.config).unwrap();
        total += out.dist[w[1] as usize].ln();
        state = out.new_state;
    }
    total
}

#[test]
fn beam_of_one_is_greedy() {
    let (_, ck) = model();
    let mut rng = Rng::new(21);
    for _ in 0..30 {
        let ex = source(ck, &random_code(&ck.code_vocab, &mut rng));
        for min_len in [1, 4] {
            let opts = BeamConfig {
                beam: 1,
                k: 1,
                min_len,
                max_len: 16,
            };
            let top = &beam_search(&ex, &ck.params, &ck.config, &opts).unwrap()[0];
            let beam_ids: Vec<u32> = top.ext_token_ids[1..]
                .iter()
                .copied()
                .filter(|&id| id != END)
                .collect();
            let greedy = greedy_decode(&ex, &ck.params, &ck.config, min_len, 16).unwrap();
            assert_eq!(beam_ids, greedy);
        }
    }
}

#[test]
fn hypotheses_are_ranked_bounded_and_consistent() {
    let (pairs, ck) = model();
    let mut rng = Rng::new(5);
    let opts = BeamConfig {
        beam: 5,
        k: 5,
        min_len: 4,
        max_len: 10,
    };
    let mut codes: Vec<TokenSequence> = pairs.iter().take(5).map(|p| p.code.clone()).collect();
    codes.extend((0..5).map(|_| random_code(&ck.code_vocab, &mut rng)));
    for code in codes {
        let ex = source(ck, &code);
        let hyps = beam_search(&ex, &ck.params, &ck.config, &opts).unwrap();
        assert!(!hyps.is_empty() && hyps.len() <= opts.k);
        for w in hyps.windows(2) {
            assert!(w[0].normalized_score() >= w[1].normalized_score());
        }
        for h in &hyps {
            assert_eq!(h.ext_token_ids[0], BOS);
            assert!(h.finished);
            assert!((opts.min_len..=opts.max_len).contains(&h.title_len()));
            let ended = *h.ext_token_ids.last().unwrap() == END;
            assert!(ended || h.title_len() == opts.max_len);
            assert!(h.log_prob <= 0.0);
            assert!((replay(&ex, ck, h) - h.log_prob).abs() < 1e-9);
        }
    }
}

#[test]
fn no_end_means_max_len_titles() {
    let (pairs, ck) = model();
    let mut ck = ck.clone();
    // END unreachable: never generated, never in the source
    ck.params.out_b.data_mut()[END as usize] = -1e4;
    let opts = BeamConfig {
        beam: 3,
        k: 3,
        min_len: 1,
        max_len: 5,
    };
    let ex = source(&ck, &pairs[0].code);
    let hyps = beam_search(&ex, &ck.params, &ck.config, &opts).unwrap();
    assert_eq!(hyps.len(), 3);
    for h in hyps {
        assert!(h.finished);
        assert_eq!(h.title_len(), 5);
        assert_ne!(*h.ext_token_ids.last().unwrap(), END);
    }
}

#[test]
fn greedy_is_deterministic_and_bounded() {
    let (_, ck) = model();
    let mut rng = Rng::new(8);
    for max_len in [1, 3, 16] {
        let ex = source(ck, &random_code(&ck.code_vocab, &mut rng));
        let a = greedy_decode(&ex, &ck.params, &ck.config, 0, max_len).unwrap();
        assert_eq!(a, greedy_decode(&ex, &ck.params, &ck.config, 0, max_len).unwrap());
        assert!(a.len() <= max_len);
    }
    let ex = source(ck, &random_code(&ck.code_vocab, &mut rng));
    assert!(greedy_decode(&ex, &ck.params, &ck.config, 0, 0).is_err());
}

#[test]
fn copies_source_only_identifiers() {
    let (pairs, ck) = model();
    let mut copied = 0;
    for p in pairs {
        // identifiers occur once, so the title vocabulary never holds them
        let ident = p.title.tokens()[3].clone();
        assert!(ck.title_vocab.id_of(&ident).is_none());
        let ex = source(ck, &p.code);
        let ids = greedy_decode(&ex, &ck.params, &ck.config, 4, 16).unwrap();
        let title = detokenize(&ids, &ck.title_vocab, &ex.ext).unwrap();
        copied += title.iter().any(|t| t == ident) as usize;
    }
    assert!(copied >= 15, "copied {copied}/20");
}

#[test]
fn detokenize_maps_base_and_extended_ids() {
    let (pairs, ck) = model();
    let tv = &ck.title_vocab;
    let how = tv.id_of("how").unwrap();
    let to = tv.id_of("to").unwrap();
    let ex = source(ck, &pairs[0].code);
    let empty = detokenize(&[BOS, END], tv, &ex.ext).unwrap();
    assert!(empty.is_empty());
    let t = detokenize(&[BOS, how, to, END], tv, &ex.ext).unwrap();
    assert_eq!(t.tokens(), ["how", "to"]);
    let v = tv.len() as u32;
    let first_oov = ex.ext.oov_tokens()[0].clone();
    assert_eq!(detokenize(&[v], tv, &ex.ext).unwrap().tokens(), [first_oov]);
    assert!(detokenize(&[v + ex.ext.n_oov() as u32], tv, &ex.ext).is_err());
    assert_eq!(feed_id(v, tv.len()), UNK);
}

#[test]
fn generate_returns_ranked_titles() {
    let (pairs, ck) = model();
    let out = generate(ck, &pairs[3].code, &BeamConfig::default()).unwrap();
    assert_eq!(out.len(), 3);
    for w in out.windows(2) {
        assert!(w[0].score >= w[1].score);
    }
    assert!(out.iter().all(|g| !g.title.is_empty()));
    assert!(generate(ck, &TokenSequence::default(), &BeamConfig::default()).is_err());
    let bad = BeamConfig {
        k: 6,
        ..BeamConfig::default()
    };
    assert!(generate(ck, &pairs[3].code, &bad).is_err());
}
