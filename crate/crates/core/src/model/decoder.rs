use crate::corpus::{BOS, PAD, UNK};
use crate::error::{Error, Result};
use crate::model::dropout::DropMask;
use crate::model::{EncoderOutput, ModelConfig, ModelParams};
use crate::numerics::{
    dot, embedding_backward, embedding_lookup, lstm_cell, lstm_cell_backward, matvec,
    matvec_t_acc, outer_acc, sigmoid, softmax_backward, softmax_masked, LstmCache, Rng, Tensor,
};

/// Smoothing inside the log of the per-step loss.
pub const LOG_EPS: f64 = 1e-12;

/// Decoder recurrent state plus the running attention coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Sum of all past attention distributions; starts at zero.
    pub coverage: Vec<f64>,
}

/// An encoded source ready for decoding: annotations, their attention-key
/// projections, and the copy ids of each source position.
#[derive(Debug, Clone)]
pub struct Source {
    pub enc: EncoderOutput,
    /// `T × a`: `W_key · H_i + b` per position.
    keys: Tensor,
    /// Title-side extended id of each source token.
    pub src_ext_ids: Vec<u32>,
    /// Title vocabulary size plus this source's OOV count.
    pub ext_size: usize,
}

impl Source {
    pub fn new(
        enc: EncoderOutput,
        src_ext_ids: Vec<u32>,
        ext_size: usize,
        params: &ModelParams,
    ) -> Result<Self> {
        if src_ext_ids.len() != enc.len() {
            return Err(Error::shape(&[enc.len()], &[src_ext_ids.len()]));
        }
        if let Some(&bad) = src_ext_ids.iter().find(|&&id| id as usize >= ext_size) {
            return Err(Error::OutOfRange {
                index: bad as usize,
                size: ext_size,
            });
        }
        let a = params.attn_b.len();
        let mut keys = Tensor::zeros(&[enc.len(), a]);
        for i in 0..enc.len() {
            let row = keys.row_mut(i);
            matvec(params.attn_key_w.data(), enc.annotations.row(i), row);
            for (k, b) in row.iter_mut().zip(params.attn_b.data()) {
                *k += b;
            }
        }
        Ok(Source {
            enc,
            keys,
            src_ext_ids,
            ext_size,
        })
    }

    pub fn len(&self) -> usize {
        self.enc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.enc.is_empty()
    }
}

/// Everything produced by one decoder step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Probability over the extended vocabulary.
    pub dist: Vec<f64>,
    pub attn: Vec<f64>,
    /// Probability of generating from the vocabulary (1 − p_cg = copy).
    pub p_cg: f64,
    pub new_state: DecoderState,
}

#[derive(Debug, Clone)]
pub(crate) struct BridgeTrace {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// `h = tanh(W_h s + b_h)`, `c = tanh(W_c s + b_c)`, zero coverage.
pub fn init_decoder(enc: &EncoderOutput, params: &ModelParams) -> DecoderState {
    let hd = params.bridge_h_b.len();
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    matvec(params.bridge_h_w.data(), &enc.summary, &mut h);
    matvec(params.bridge_c_w.data(), &enc.summary, &mut c);
    for j in 0..hd {
        h[j] = (h[j] + params.bridge_h_b.data()[j]).tanh();
        c[j] = (c[j] + params.bridge_c_b.data()[j]).tanh();
    }
    DecoderState {
        h,
        c,
        coverage: vec![0.0; enc.len()],
    }
}

pub(crate) fn init_decoder_backward(
    enc: &EncoderOutput,
    init: &BridgeTrace,
    params: &ModelParams,
    dh: &[f64],
    dc: &[f64],
    grads: &mut ModelParams,
    d_summary: &mut [f64],
) {
    let dzh: Vec<f64> = dh.iter().zip(&init.h).map(|(g, h)| g * (1.0 - h * h)).collect();
    let dzc: Vec<f64> = dc.iter().zip(&init.c).map(|(g, c)| g * (1.0 - c * c)).collect();
    outer_acc(grads.bridge_h_w.data_mut(), &dzh, &enc.summary);
    outer_acc(grads.bridge_c_w.data_mut(), &dzc, &enc.summary);
    for j in 0..dzh.len() {
        grads.bridge_h_b.data_mut()[j] += dzh[j];
        grads.bridge_c_b.data_mut()[j] += dzc[j];
    }
    matvec_t_acc(params.bridge_h_w.data(), &dzh, d_summary);
    matvec_t_acc(params.bridge_c_w.data(), &dzc, d_summary);
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionTrace {
    pub attn: Vec<f64>,
    pub ctx: Vec<f64>,
    /// `tanh(u_i)` per position, `T × a` flattened.
    tanh_u: Vec<f64>,
    query: Vec<f64>,
    coverage: Vec<f64>,
}

/// Additive attention with a coverage feature:
/// `e_i = vᵀ tanh(W_key H_i + W_query h + w_cov · coverage_i + b)`.
pub(crate) fn attention_traced(
    query: &[f64],
    coverage: &[f64],
    src: &Source,
    params: &ModelParams,
) -> Result<AttentionTrace> {
    let a = params.attn_v.len();
    let t_len = src.len();
    let mut q = vec![0.0; a];
    matvec(params.attn_query_w.data(), query, &mut q);
    let mut tanh_u = vec![0.0; t_len * a];
    let mut scores = vec![0.0; t_len];
    for i in 0..t_len {
        if !src.enc.mask[i] {
            continue;
        }
        let key = src.keys.row(i);
        let u = &mut tanh_u[i * a..(i + 1) * a];
        for k in 0..a {
            u[k] = (key[k] + q[k] + params.attn_cov_w.data()[k] * coverage[i]).tanh();
        }
        scores[i] = dot(params.attn_v.data(), u);
    }
    let attn = softmax_masked(&scores, &src.enc.mask)?;
    let d = src.enc.annotations.cols();
    let mut ctx = vec![0.0; d];
    for (i, &w) in attn.iter().enumerate() {
        if w != 0.0 {
            for (c, h) in ctx.iter_mut().zip(src.enc.annotations.row(i)) {
                *c += w * h;
            }
        }
    }
    Ok(AttentionTrace {
        attn,
        ctx,
        tanh_u,
        query: query.to_vec(),
        coverage: coverage.to_vec(),
    })
}

/// Attention over `src` for the decoder state `state`.
/// Returns the distribution over source positions and the context vector.
pub fn attention(
    state: &DecoderState,
    src: &Source,
    params: &ModelParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let tr = attention_traced(&state.h, &state.coverage, src, params)?;
    Ok((tr.attn, tr.ctx))
}

/// Backward of attention. Accumulates parameter gradients and
/// `∂L/∂annotations`; adds into `d_query` and `d_coverage`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    tr: &AttentionTrace,
    src: &Source,
    params: &ModelParams,
    d_attn: &[f64],
    d_ctx: &[f64],
    d_query: &mut [f64],
    d_coverage: &mut [f64],
    d_annotations: &mut Tensor,
    grads: &mut ModelParams,
) {
    let a = params.attn_v.len();
    let t_len = src.len();
    let mut da = d_attn.to_vec();
    for i in 0..t_len {
        if !src.enc.mask[i] {
            continue;
        }
        da[i] += dot(d_ctx, src.enc.annotations.row(i));
        let w = tr.attn[i];
        for (g, c) in d_annotations.row_mut(i).iter_mut().zip(d_ctx) {
            *g += w * c;
        }
    }
    let de = softmax_backward(&tr.attn, &da);
    let mut dq = vec![0.0; a];
    let v = params.attn_v.data();
    let wc = params.attn_cov_w.data();
    let mut du = vec![0.0; a];
    for i in 0..t_len {
        if !src.enc.mask[i] || de[i] == 0.0 {
            continue;
        }
        let u = &tr.tanh_u[i * a..(i + 1) * a];
        for k in 0..a {
            grads.attn_v.data_mut()[k] += de[i] * u[k];
            du[k] = de[i] * v[k] * (1.0 - u[k] * u[k]);
            dq[k] += du[k];
            grads.attn_cov_w.data_mut()[k] += du[k] * tr.coverage[i];
            grads.attn_b.data_mut()[k] += du[k];
        }
        d_coverage[i] += dot(&du, wc);
        let h_i = src.enc.annotations.row(i);
        outer_acc(grads.attn_key_w.data_mut(), &du, h_i);
        matvec_t_acc(params.attn_key_w.data(), &du, d_annotations.row_mut(i));
    }
    outer_acc(grads.attn_query_w.data_mut(), &dq, &tr.query);
    matvec_t_acc(params.attn_query_w.data(), &dq, d_query);
}

/// Mixes generation and copying:
/// `P(w) = p_cg · P_vocab(w) + (1 − p_cg) · Σ_{i: src_ext_ids[i] = w} attn_i`.
pub fn final_distribution(
    vocab_dist: &[f64],
    attn: &[f64],
    p_cg: f64,
    src_ext_ids: &[u32],
    ext_size: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; ext_size];
    for (o, p) in out.iter_mut().zip(vocab_dist) {
        *o = p_cg * p;
    }
    for (&id, &a) in src_ext_ids.iter().zip(attn) {
        out[id as usize] += (1.0 - p_cg) * a;
    }
    out
}

/// `−ln(dist[target] + 1e-12) + λ Σ_i min(attn_i, prev_coverage_i)`.
pub fn step_loss(step: &StepOutput, target_ext_id: u32, prev_coverage: &[f64], lambda: f64) -> f64 {
    nll(&step.dist, target_ext_id) + lambda * coverage_penalty(&step.attn, prev_coverage)
}

pub(crate) fn nll(dist: &[f64], target: u32) -> f64 {
    -(dist[target as usize] + LOG_EPS).ln()
}

pub(crate) fn coverage_penalty(attn: &[f64], coverage: &[f64]) -> f64 {
    attn.iter().zip(coverage).map(|(a, c)| a.min(*c)).sum()
}

/// Maps a possibly-extended id to the id fed back into the decoder.
pub fn feed_id(ext_id: u32, title_vocab_size: usize) -> u32 {
    if ext_id as usize >= title_vocab_size {
        UNK
    } else {
        ext_id
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StepTrace {
    y_prev: u32,
    emb: Vec<f64>,
    emb_mask: DropMask,
    pre: AttentionTrace,
    cell: LstmCache,
    h_mask: DropMask,
    h_out: Vec<f64>,
    post: AttentionTrace,
    vocab_dist: Vec<f64>,
    pub p_cg: f64,
    pub dist: Vec<f64>,
}

/// One decoder step:
/// 1. attend from the incoming state to get an input context,
/// 2. run the LSTM on `[embed(y_prev); context]`,
/// 3. re-attend from the new state,
/// 4. project `[h; context]` to vocabulary logits and mix with the copy
///    distribution through the gate,
/// 5. add the new attention to the coverage.
pub(crate) fn step_traced(
    y_prev: u32,
    state: &DecoderState,
    src: &Source,
    params: &ModelParams,
    cfg: &ModelConfig,
    mut rng: Option<&mut Rng>,
) -> Result<(StepOutput, StepTrace)> {
    if y_prev as usize >= cfg.title_vocab_size {
        return Err(Error::OutOfRange {
            index: y_prev as usize,
            size: cfg.title_vocab_size,
        });
    }
    let e = cfg.emb_dim;
    let emb_mask = DropMask::sample(e, cfg.dropout_rate, rng.as_deref_mut());
    let emb = emb_mask.apply(embedding_lookup(&params.title_emb, y_prev as usize)?);

    let pre = attention_traced(&state.h, &state.coverage, src, params)?;
    let mut x = emb.clone();
    x.extend_from_slice(&pre.ctx);
    let cell = lstm_cell(&x, &state.h, &state.c, &params.dec)?;

    let h_mask = DropMask::sample(cell.h.len(), cfg.dropout_rate, rng);
    let h_out = h_mask.apply(&cell.h);
    let post = attention_traced(&cell.h, &state.coverage, src, params)?;

    let mut feat = h_out.clone();
    feat.extend_from_slice(&post.ctx);
    let mut logits = params.out_b.data().to_vec();
    for (o, row) in logits.iter_mut().zip(params.out_w.data().chunks_exact(feat.len())) {
        *o += dot(row, &feat);
    }
    let mut live = vec![true; logits.len()];
    live[PAD as usize] = false;
    live[BOS as usize] = false;
    let vocab_dist = softmax_masked(&logits, &live)?;

    let z = dot(params.gen_ctx_w.data(), &post.ctx)
        + dot(params.gen_h_w.data(), &h_out)
        + dot(params.gen_emb_w.data(), &emb)
        + params.gen_b.data()[0];
    let p_cg = sigmoid(z);
    let dist = final_distribution(&vocab_dist, &post.attn, p_cg, &src.src_ext_ids, src.ext_size);
    if dist.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("decoder output distribution".into()));
    }

    let coverage = state
        .coverage
        .iter()
        .zip(&post.attn)
        .map(|(c, a)| c + a)
        .collect();
    let out = StepOutput {
        dist: dist.clone(),
        attn: post.attn.clone(),
        p_cg,
        new_state: DecoderState {
            h: cell.h.clone(),
            c: cell.c.clone(),
            coverage,
        },
    };
    let trace = StepTrace {
        y_prev,
        emb,
        emb_mask,
        pre,
        cell,
        h_mask,
        h_out,
        post,
        vocab_dist,
        p_cg,
        dist,
    };
    Ok((out, trace))
}

/// One inference step (no dropout).
pub fn decode_step(
    y_prev_id: u32,
    state: &DecoderState,
    src: &Source,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<StepOutput> {
    step_traced(y_prev_id, state, src, params, cfg, None).map(|(o, _)| o)
}

/// Gradients flowing backwards between steps.
pub(crate) struct StepCarry {
    pub dh: Vec<f64>,
    pub dc: Vec<f64>,
    /// Gradient on the coverage produced by this step.
    pub dcov: Vec<f64>,
}

/// Backward of one step whose loss is
/// `weight · (−ln(dist[target] + ε) + λ Σ min(attn_i, coverage_i))`.
/// Consumes the carry from step t+1 and returns the carry for step t−1.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_backward(
    tr: &StepTrace,
    target: u32,
    weight: f64,
    lambda: f64,
    src: &Source,
    params: &ModelParams,
    carry: StepCarry,
    d_annotations: &mut Tensor,
    grads: &mut ModelParams,
) -> Result<StepCarry> {
    let t_len = src.len();
    let vt = tr.vocab_dist.len();
    let e = tr.emb.len();
    let p = tr.p_cg;
    let attn = &tr.post.attn;
    let cov_prev = &tr.post.coverage;

    // final distribution
    let d_p_target = -weight / (tr.dist[target as usize] + LOG_EPS);
    let mut d_vocab = vec![0.0; vt];
    if (target as usize) < vt {
        d_vocab[target as usize] = p * d_p_target;
    }
    let mut copy_mass = 0.0;
    let mut d_attn = carry.dcov.clone();
    let mut d_cov = carry.dcov;
    for (i, &id) in src.src_ext_ids.iter().enumerate() {
        if id == target {
            copy_mass += attn[i];
            d_attn[i] += (1.0 - p) * d_p_target;
        }
    }
    let p_vocab_target = if (target as usize) < vt {
        tr.vocab_dist[target as usize]
    } else {
        0.0
    };
    let dp = d_p_target * (p_vocab_target - copy_mass);

    // coverage penalty
    if lambda != 0.0 {
        for i in 0..t_len {
            if !src.enc.mask[i] {
                continue;
            }
            if attn[i] <= cov_prev[i] {
                d_attn[i] += weight * lambda;
            } else {
                d_cov[i] += weight * lambda;
            }
        }
    }

    // vocabulary projection
    let d_logits = softmax_backward(&tr.vocab_dist, &d_vocab);
    let hd = tr.h_out.len();
    let mut feat = tr.h_out.clone();
    feat.extend_from_slice(&tr.post.ctx);
    outer_acc(grads.out_w.data_mut(), &d_logits, &feat);
    for (g, d) in grads.out_b.data_mut().iter_mut().zip(&d_logits) {
        *g += d;
    }
    let mut d_feat = vec![0.0; feat.len()];
    matvec_t_acc(params.out_w.data(), &d_logits, &mut d_feat);
    let mut d_ctx = d_feat.split_off(hd);
    let mut d_hout = d_feat;

    // gate
    let dz = dp * p * (1.0 - p);
    let mut d_emb = vec![0.0; e];
    if dz != 0.0 {
        for (k, c) in tr.post.ctx.iter().enumerate() {
            grads.gen_ctx_w.data_mut()[k] += dz * c;
            d_ctx[k] += dz * params.gen_ctx_w.data()[k];
        }
        for (k, h) in tr.h_out.iter().enumerate() {
            grads.gen_h_w.data_mut()[k] += dz * h;
            d_hout[k] += dz * params.gen_h_w.data()[k];
        }
        for (k, x) in tr.emb.iter().enumerate() {
            grads.gen_emb_w.data_mut()[k] += dz * x;
            d_emb[k] += dz * params.gen_emb_w.data()[k];
        }
        grads.gen_b.data_mut()[0] += dz;
    }

    // post-LSTM attention
    let mut dh = carry.dh;
    attention_backward(
        &tr.post, src, params, &d_attn, &d_ctx, &mut dh, &mut d_cov, d_annotations, grads,
    );
    tr.h_mask.apply_in_place(&mut d_hout);
    for (a, b) in dh.iter_mut().zip(&d_hout) {
        *a += b;
    }

    // LSTM
    let (dx, mut dh_prev, dc_prev) =
        lstm_cell_backward(&tr.cell, &params.dec, &dh, &carry.dc, &mut grads.dec);
    for (a, b) in d_emb.iter_mut().zip(&dx[..e]) {
        *a += b;
    }
    let zeros = vec![0.0; t_len];
    attention_backward(
        &tr.pre, src, params, &zeros, &dx[e..], &mut dh_prev, &mut d_cov, d_annotations, grads,
    );
    tr.emb_mask.apply_in_place(&mut d_emb);
    embedding_backward(&mut grads.title_emb, tr.y_prev as usize, &d_emb)?;

    Ok(StepCarry {
        dh: dh_prev,
        dc: dc_prev,
        dcov: d_cov,
    })
}
