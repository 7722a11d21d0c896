use crate::corpus::{encode_with_extended_vocab, ExtendedVocab, PairRecord, TokenSequence, Vocabulary, BOS, END};
use crate::error::{Error, Result};
use crate::model::decoder::{
    coverage_penalty, init_decoder, init_decoder_backward, nll, step_backward, step_traced,
    BridgeTrace, StepCarry, StepTrace,
};
use crate::model::encoder::{encode_backward, encode_traced};
use crate::model::{feed_id, ModelConfig, ModelParams, Source};
use crate::numerics::{Rng, Tensor};

/// A pair mapped to ids: encoder ids through the code vocabulary, copy ids
/// and targets through the title vocabulary extended with source OOVs.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub code_ids: Vec<u32>,
    pub src_ext_ids: Vec<u32>,
    pub ext: ExtendedVocab,
    /// Extended target ids, END-terminated.
    pub target_ids: Vec<u32>,
}

impl Example {
    pub fn from_tokens(
        code: &TokenSequence,
        title: &TokenSequence,
        code_vocab: &Vocabulary,
        title_vocab: &Vocabulary,
    ) -> Self {
        let mut ex = Example::source_only(code, code_vocab, title_vocab);
        ex.target_ids = title
            .iter()
            .map(|t| ex.ext.target_id(title_vocab, t))
            .chain(std::iter::once(END))
            .collect();
        ex
    }

    pub fn from_pair(pair: &PairRecord, code_vocab: &Vocabulary, title_vocab: &Vocabulary) -> Self {
        Example::from_tokens(&pair.code, &pair.title, code_vocab, title_vocab)
    }

    /// Source side only (for decoding).
    pub fn source_only(code: &TokenSequence, code_vocab: &Vocabulary, title_vocab: &Vocabulary) -> Self {
        let code_ids = code.iter().map(|t| code_vocab.id_or_unk(t)).collect();
        let enc = encode_with_extended_vocab(code, title_vocab);
        Example {
            code_ids,
            src_ext_ids: enc.ext_ids,
            ext: enc.ext,
            target_ids: Vec::new(),
        }
    }

    pub fn ext_size(&self) -> usize {
        self.ext.size()
    }
}

/// Encodes the source of `ex` and wraps it for decoding.
pub fn prepare_source(ex: &Example, params: &ModelParams, cfg: &ModelConfig) -> Result<Source> {
    let mask = vec![true; ex.code_ids.len()];
    let enc = crate::model::encode(&ex.code_ids, &mask, params, cfg)?;
    Source::new(enc, ex.src_ext_ids.clone(), ex.ext_size(), params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub nll: f64,
    pub coverage_loss: f64,
    pub p_cg: f64,
    pub argmax: u32,
}

/// Forward pass over a whole example with everything needed for backward.
pub(crate) struct SequenceTrace {
    source: Source,
    enc_trace: crate::model::encoder::EncoderTrace,
    bridge: BridgeTrace,
    steps: Vec<StepTrace>,
    pub diagnostics: Vec<StepDiagnostics>,
}

fn argmax_lowest(dist: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &v) in dist.iter().enumerate() {
        if v > dist[best] {
            best = i;
        }
    }
    best as u32
}

pub(crate) fn forward_traced(
    ex: &Example,
    params: &ModelParams,
    cfg: &ModelConfig,
    lambda: f64,
    teacher_forcing: bool,
    mut rng: Option<&mut Rng>,
) -> Result<SequenceTrace> {
    if ex.target_ids.is_empty() {
        return Err(Error::EmptyInput("example has no target".into()));
    }
    if let Some(&bad) = ex.target_ids.iter().find(|&&t| t as usize >= ex.ext_size()) {
        return Err(Error::OutOfRange {
            index: bad as usize,
            size: ex.ext_size(),
        });
    }
    let mask = vec![true; ex.code_ids.len()];
    let (enc, enc_trace) = encode_traced(&ex.code_ids, &mask, params, cfg, rng.as_deref_mut())?;
    let source = Source::new(enc, ex.src_ext_ids.clone(), ex.ext_size(), params)?;
    let mut state = init_decoder(&source.enc, params);
    let bridge = BridgeTrace {
        h: state.h.clone(),
        c: state.c.clone(),
    };
    let mut steps = Vec::with_capacity(ex.target_ids.len());
    let mut diagnostics = Vec::with_capacity(ex.target_ids.len());
    let mut y_prev = BOS;
    for &target in &ex.target_ids {
        let prev_cov = state.coverage.clone();
        let (out, tr) = step_traced(y_prev, &state, &source, params, cfg, rng.as_deref_mut())?;
        let argmax = argmax_lowest(&out.dist);
        diagnostics.push(StepDiagnostics {
            nll: nll(&out.dist, target),
            coverage_loss: lambda * coverage_penalty(&out.attn, &prev_cov),
            p_cg: out.p_cg,
            argmax,
        });
        y_prev = feed_id(if teacher_forcing { target } else { argmax }, cfg.title_vocab_size);
        state = out.new_state;
        steps.push(tr);
    }
    Ok(SequenceTrace {
        source,
        enc_trace,
        bridge,
        steps,
        diagnostics,
    })
}

impl SequenceTrace {
    /// Sum of per-step losses.
    pub fn total_loss(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.nll + d.coverage_loss).sum()
    }

    pub fn total_nll(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.nll).sum()
    }
}

/// Accumulates `weight · ∂(Σ step losses)/∂θ` into `grads`.
pub(crate) fn backward(
    trace: &SequenceTrace,
    ex: &Example,
    params: &ModelParams,
    cfg: &ModelConfig,
    lambda: f64,
    weight: f64,
    grads: &mut ModelParams,
) -> Result<()> {
    let src = &trace.source;
    let hd = cfg.dec_hidden;
    let mut d_annotations = Tensor::zeros(src.enc.annotations.shape());
    let mut carry = StepCarry {
        dh: vec![0.0; hd],
        dc: vec![0.0; hd],
        dcov: vec![0.0; src.len()],
    };
    for (tr, &target) in trace.steps.iter().zip(&ex.target_ids).rev() {
        carry = step_backward(tr, target, weight, lambda, src, params, carry, &mut d_annotations, grads)?;
    }
    let mut d_summary = vec![0.0; cfg.annotation_dim()];
    init_decoder_backward(&src.enc, &trace.bridge, params, &carry.dh, &carry.dc, grads, &mut d_summary);
    encode_backward(&trace.enc_trace, params, cfg, &d_annotations, &d_summary, grads)
}

/// Mean per-step loss of one example (BOS … END framing) plus per-step
/// diagnostics. Teacher forcing feeds the gold previous token; free running
/// feeds the previous argmax.
pub fn sequence_loss(
    ex: &Example,
    params: &ModelParams,
    cfg: &ModelConfig,
    teacher_forcing: bool,
) -> Result<(f64, Vec<StepDiagnostics>)> {
    let tr = forward_traced(ex, params, cfg, cfg.coverage_weight, teacher_forcing, None)?;
    let loss = tr.total_loss() / ex.target_ids.len() as f64;
    Ok((loss, tr.diagnostics))
}

/// Mean per-step loss and its gradient (no dropout).
pub fn sequence_loss_and_grad(
    ex: &Example,
    params: &ModelParams,
    cfg: &ModelConfig,
    teacher_forcing: bool,
) -> Result<(f64, ModelParams)> {
    let lambda = cfg.coverage_weight;
    let tr = forward_traced(ex, params, cfg, lambda, teacher_forcing, None)?;
    let n = ex.target_ids.len() as f64;
    let mut grads = params.zeros_like();
    backward(&tr, ex, params, cfg, lambda, 1.0 / n, &mut grads)?;
    Ok((tr.total_loss() / n, grads))
}
