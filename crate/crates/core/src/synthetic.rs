//! Seeded toy corpora for small training experiments.

use crate::corpus::{build_vocab_for, question_url, PairRecord, Side, TokenSequence, Vocabulary};
use crate::error::Result;
use crate::model::{Checkpoint, Example, ModelConfig};
use crate::numerics::Rng;
use crate::retrieval::{EmbeddingIndex, RowMeta};
use crate::training::{train, TrainConfig, TrainOutcome};

const VERBS: [&str; 8] = ["get", "set", "parse", "load", "fetch", "read", "build", "find"];
const NOUNS: [&str; 8] = ["client", "user", "file", "config", "json", "cache", "row", "token"];
const PARTS: [&str; 8] = ["ip", "name", "path", "data", "id", "size", "key", "list"];
const FRAMEWORKS: [&str; 4] = ["django", "flask", "pandas", "numpy"];
const ACTIONS: [&str; 4] = ["call", "use", "test", "mock"];

fn seq(tokens: Vec<String>) -> TokenSequence {
    TokenSequence::new(tokens).expect("generated tokens are clean")
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// `n` distinct identifiers such as `get_client_ip`, shuffled.
fn identifiers(n: usize, rng: &mut Rng) -> Vec<String> {
    let mut all: Vec<String> = Vec::new();
    for v in VERBS {
        for n in NOUNS {
            for p in PARTS {
                all.push(format!("{v}_{n}_{p}"));
            }
        }
    }
    assert!(n <= all.len(), "at most {} identifiers", all.len());
    rng.shuffle(&mut all);
    all.truncate(n);
    all
}

fn record(post_id: u64, code: Vec<String>, title: Vec<String>) -> PairRecord {
    PairRecord {
        post_id,
        url: question_url(post_id),
        code: seq(code),
        title: seq(title),
        score: 1,
        tag: "python".into(),
    }
}

/// Pairs whose titles name a function defined in the snippet. Each
/// identifier occurs in exactly one pair, so with a title vocabulary built
/// at `min_count >= 2` it can only be produced by copying.
pub fn copy_corpus(n: usize, seed: u64) -> Vec<PairRecord> {
    let mut rng = Rng::new(seed);
    let ids = identifiers(n, &mut rng);
    ids.into_iter()
        .enumerate()
        .map(|(i, ident)| {
            let fw = FRAMEWORKS[rng.below(FRAMEWORKS.len())];
            let act = ACTIONS[rng.below(ACTIONS.len())];
            let code = words(&format!(
                "import {fw} def {ident} ( request ) : x = request . meta . get ( STRING ) return x"
            ));
            let title = words(&format!("how to {act} {ident} in {fw}"));
            record(1000 + i as u64, code, title)
        })
        .collect()
}

/// Pairs whose titles list two or three snippet identifiers back to back,
/// so a decoder without coverage is prone to emitting one twice in a row.
/// Identifiers are drawn with replacement from a pool of 512, so frequent
/// ones enter the title vocabulary and rare ones must be copied.
pub fn repetition_corpus(n: usize, seed: u64) -> Vec<PairRecord> {
    let mut rng = Rng::new(seed);
    let pool = identifiers(VERBS.len() * NOUNS.len() * PARTS.len(), &mut rng);
    (0..n)
        .map(|i| {
            let k = 2 + rng.below(2);
            let picked: Vec<&str> = (0..k).map(|_| pool[rng.below(pool.len())].as_str()).collect();
            let mut code = words("def merge ( ) :");
            for (j, id) in picked.iter().enumerate() {
                code.extend(words(&format!("v{j} = {id} ( ) ;")));
            }
            code.extend(words("return v0"));
            let mut title = words("how to chain");
            title.extend(picked.iter().map(|id| id.to_string()));
            record(5000 + i as u64, code, title)
        })
        .collect()
}

/// `n` Gaussian vectors of dimension `d` scaled to unit length.
pub fn random_unit_vectors(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// An index over `n` random unit vectors with placeholder metadata.
pub fn random_index(n: usize, d: usize, seed: u64) -> EmbeddingIndex {
    let meta = (0..n as u64)
        .map(|i| RowMeta {
            post_id: i,
            title: format!("question {i}"),
            url: question_url(i),
        })
        .collect();
    EmbeddingIndex::from_vectors(d, &random_unit_vectors(n, d, seed), meta)
        .expect("random vectors are non-zero")
}

/// Code vocabulary over every token; title vocabulary over tokens seen at
/// least twice, which leaves one-off identifiers to the copy path.
pub fn toy_vocabs(pairs: &[PairRecord]) -> Result<(Vocabulary, Vocabulary)> {
    Ok((
        build_vocab_for(pairs, Side::Code, 5000, 1)?,
        build_vocab_for(pairs, Side::Title, 5000, 2)?,
    ))
}

/// Small dimensions that train in seconds on a CPU; dropout off.
pub fn toy_config(code_vocab: &Vocabulary, title_vocab: &Vocabulary) -> ModelConfig {
    ModelConfig {
        emb_dim: 32,
        enc_hidden: 32,
        dec_hidden: 64,
        attn_dim: 32,
        code_vocab_size: code_vocab.len(),
        title_vocab_size: title_vocab.len(),
        dropout_rate: 0.0,
        ..ModelConfig::default()
    }
}

/// Trains a toy model on `train_pairs`, validating on `valid_pairs`.
pub fn train_toy(
    train_pairs: &[PairRecord],
    valid_pairs: &[PairRecord],
    cfg: ModelConfig,
    tc: &TrainConfig,
    vocabs: (Vocabulary, Vocabulary),
) -> Result<(Checkpoint, TrainOutcome)> {
    let (cv, tv) = vocabs;
    let tr: Vec<Example> = train_pairs.iter().map(|p| Example::from_pair(p, &cv, &tv)).collect();
    let va: Vec<Example> = valid_pairs.iter().map(|p| Example::from_pair(p, &cv, &tv)).collect();
    let out = train(&tr, &va, &cfg, tc, |_| {})?;
    let ck = Checkpoint::new(cfg, out.params.clone(), cv, tv)?;
    Ok((ck, out))
}
