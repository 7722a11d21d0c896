use std::cmp::Ordering;

use crate::corpus::{ExtendedVocab, TokenSequence, Vocabulary, BOS, END, PAD};
use crate::error::{Error, Result};
use crate::model::{
    decode_step, feed_id, init_decoder, prepare_source, Checkpoint, DecoderState, Example,
    ModelConfig, ModelParams, Source,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    pub beam: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Number of ranked results returned.
    pub k: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam: 5,
            min_len: 4,
            max_len: 16,
            k: 3,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::InvalidArgument("beam must be at least 1".into()));
        }
        if self.min_len == 0 || self.min_len >= self.max_len {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= min_len < max_len, got {} and {}",
                self.min_len, self.max_len
            )));
        }
        if self.k == 0 || self.k > self.beam {
            return Err(Error::InvalidArgument(format!(
                "k must be in 1..={}, got {}",
                self.beam, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BeamHypothesis {
    /// Starts with BOS; ends with END when the hypothesis stopped itself.
    pub ext_token_ids: Vec<u32>,
    pub log_prob: f64,
    pub state: DecoderState,
    pub finished: bool,
}

impl BeamHypothesis {
    /// Emitted title tokens (BOS and END excluded).
    pub fn title_len(&self) -> usize {
        self.ext_token_ids
            .iter()
            .filter(|&&id| id != BOS && id != END)
            .count()
    }

    /// Decoder steps taken, END included.
    pub fn steps(&self) -> usize {
        self.ext_token_ids.len() - 1
    }

    pub fn normalized_score(&self) -> f64 {
        self.log_prob / self.steps() as f64
    }
}

/// A ranked decoding result.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub title: TokenSequence,
    /// Extended ids of the title tokens.
    pub ext_ids: Vec<u32>,
    pub log_prob: f64,
    /// `log_prob` divided by the number of decoder steps.
    pub score: f64,
}

fn allowed(id: usize, emitted: usize, cfg: &BeamConfig) -> bool {
    id != PAD as usize && id != BOS as usize && (id != END as usize || emitted >= cfg.min_len)
}

struct Candidate {
    parent: usize,
    token: u32,
    p: f64,
    log_prob: f64,
}

/// Higher log-prob first; then the higher step probability; then the lower
/// token id; then the earlier parent.
fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then(b.p.total_cmp(&a.p))
        .then(a.token.cmp(&b.token))
        .then(a.parent.cmp(&b.parent))
}

fn step(
    hyp: &BeamHypothesis,
    src: &Source,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<crate::model::StepOutput> {
    let last = *hyp.ext_token_ids.last().expect("starts with BOS");
    let out = decode_step(feed_id(last, cfg.title_vocab_size), &hyp.state, src, params, cfg)?;
    if out.dist.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("decoder distribution".into()));
    }
    Ok(out)
}

/// Beam search over the source of `ex`. Returns up to `k` finished
/// hypotheses ranked by length-normalized log-probability.
pub fn beam_search(
    ex: &Example,
    params: &ModelParams,
    cfg: &ModelConfig,
    opts: &BeamConfig,
) -> Result<Vec<BeamHypothesis>> {
    opts.validate()?;
    let src = prepare_source(ex, params, cfg)?;
    let mut live = vec![BeamHypothesis {
        ext_token_ids: vec![BOS],
        log_prob: 0.0,
        state: init_decoder(&src.enc, params),
        finished: false,
    }];
    let mut done: Vec<BeamHypothesis> = Vec::new();
    while !live.is_empty() && done.len() < opts.beam {
        let mut outs = Vec::with_capacity(live.len());
        let mut cands = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            let out = step(hyp, &src, params, cfg)?;
            let emitted = hyp.title_len();
            let mut mine: Vec<Candidate> = out
                .dist
                .iter()
                .enumerate()
                .filter(|&(id, &p)| p > 0.0 && allowed(id, emitted, opts))
                .map(|(id, &p)| Candidate {
                    parent: h,
                    token: id as u32,
                    p,
                    log_prob: hyp.log_prob + p.ln(),
                })
                .collect();
            // only this hypothesis's best `beam` can survive
            if mine.len() > opts.beam {
                mine.select_nth_unstable_by(opts.beam - 1, candidate_order);
                mine.truncate(opts.beam);
            }
            cands.extend(mine);
            outs.push(out);
        }
        cands.sort_by(candidate_order);
        cands.truncate(opts.beam);
        let mut next = Vec::with_capacity(opts.beam);
        for c in cands {
            let parent = &live[c.parent];
            let mut ids = parent.ext_token_ids.clone();
            ids.push(c.token);
            let hyp = BeamHypothesis {
                finished: false,
                ext_token_ids: ids,
                log_prob: c.log_prob,
                state: outs[c.parent].new_state.clone(),
            };
            let finished = c.token == END || hyp.title_len() == opts.max_len;
            if finished {
                done.push(BeamHypothesis {
                    finished: true,
                    ..hyp
                });
            } else {
                next.push(hyp);
            }
        }
        live = next;
    }
    done.sort_by(|a, b| {
        b.normalized_score()
            .total_cmp(&a.normalized_score())
            .then_with(|| a.ext_token_ids.cmp(&b.ext_token_ids))
    });
    done.truncate(opts.k);
    Ok(done)
}

/// Argmax decoding; ties go to the lowest id. END is unavailable until
/// `min_len` tokens have been emitted (pass 0 for no minimum).
pub fn greedy_decode(
    ex: &Example,
    params: &ModelParams,
    cfg: &ModelConfig,
    min_len: usize,
    max_len: usize,
) -> Result<Vec<u32>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let src = prepare_source(ex, params, cfg)?;
    let mut state = init_decoder(&src.enc, params);
    let mut prev = BOS;
    let mut ids = Vec::new();
    let opts = BeamConfig {
        min_len,
        max_len,
        ..BeamConfig::default()
    };
    while ids.len() < max_len {
        let out = decode_step(feed_id(prev, cfg.title_vocab_size), &state, &src, params, cfg)?;
        let mut best: Option<usize> = None;
        for (id, &p) in out.dist.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite("decoder distribution".into()));
            }
            if allowed(id, ids.len(), &opts) && best.is_none_or(|b| p > out.dist[b]) {
                best = Some(id);
            }
        }
        let best = best.expect("vocabulary has non-special entries") as u32;
        if best == END {
            break;
        }
        ids.push(best);
        prev = best;
        state = out.new_state;
    }
    Ok(ids)
}

/// Maps extended ids back to tokens, dropping BOS, END and PAD.
pub fn detokenize(ext_ids: &[u32], vocab: &Vocabulary, ext: &ExtendedVocab) -> Result<TokenSequence> {
    let mut out = Vec::with_capacity(ext_ids.len());
    for &id in ext_ids {
        if id == BOS || id == END || id == PAD {
            continue;
        }
        let tok = ext.token_of(vocab, id).ok_or(Error::OutOfRange {
            index: id as usize,
            size: ext.size(),
        })?;
        out.push(tok.to_string());
    }
    TokenSequence::new(out)
}

/// Beam-searches titles for a preprocessed code snippet.
pub fn generate(ck: &Checkpoint, code: &TokenSequence, opts: &BeamConfig) -> Result<Vec<Generated>> {
    if code.is_empty() {
        return Err(Error::EmptyInput("code snippet has no tokens".into()));
    }
    let ex = Example::source_only(code, &ck.code_vocab, &ck.title_vocab);
    beam_search(&ex, &ck.params, &ck.config, opts)?
        .into_iter()
        .map(|h| {
            let ext_ids: Vec<u32> = h
                .ext_token_ids
                .iter()
                .copied()
                .filter(|&id| id != BOS && id != END)
                .collect();
            Ok(Generated {
                title: detokenize(&ext_ids, &ck.title_vocab, &ex.ext)?,
                score: h.normalized_score(),
                log_prob: h.log_prob,
                ext_ids,
            })
        })
        .collect()
}
