use crate::error::{Error, Result};
use crate::model::dropout::DropMask;
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::{embedding_backward, embedding_lookup, lstm_cell, lstm_cell_backward, LstmCache, Rng, Tensor};

/// Per-token annotations and the summary state of a source snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// `T × 2h_e`; row `t` is the last layer's forward state ‖ backward state.
    /// Rows of masked positions are zero.
    pub annotations: Tensor,
    /// Last-layer forward final state ‖ backward final state.
    pub summary: Vec<f64>,
    pub mask: Vec<bool>,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

/// One direction of one layer over the live positions.
#[derive(Debug, Clone)]
struct DirectionTrace {
    /// Live positions in processing order.
    order: Vec<usize>,
    cells: Vec<LstmCache>,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderTrace {
    code_ids: Vec<u32>,
    live: Vec<usize>,
    emb_masks: Vec<DropMask>,
    mid_masks: Vec<DropMask>,
    dirs: [DirectionTrace; 4],
}

fn run_direction(
    inputs: &[Vec<f64>],
    order: Vec<usize>,
    w: &crate::numerics::LstmWeights,
) -> Result<DirectionTrace> {
    let hd = w.hidden();
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    let mut cells = Vec::with_capacity(order.len());
    for &p in &order {
        let cache = lstm_cell(&inputs[p], &h, &c, w)?;
        h.clone_from(&cache.h);
        c.clone_from(&cache.c);
        cells.push(cache);
    }
    Ok(DirectionTrace { order, cells })
}

/// Runs the two-layer bidirectional encoder. Masked positions are skipped by
/// the recurrences. With `rng` set, dropout is applied to the embeddings and
/// to the first layer's outputs.
pub(crate) fn encode_traced(
    code_ids: &[u32],
    mask: &[bool],
    params: &ModelParams,
    cfg: &ModelConfig,
    mut rng: Option<&mut Rng>,
) -> Result<(EncoderOutput, EncoderTrace)> {
    if code_ids.len() != mask.len() {
        return Err(Error::shape(&[code_ids.len()], &[mask.len()]));
    }
    let live: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if live.is_empty() {
        return Err(Error::EmptyInput("source has no unmasked token".into()));
    }
    let t_len = mask.len();
    let (e, he) = (cfg.emb_dim, cfg.enc_hidden);
    let rate = cfg.dropout_rate;

    let mut emb_masks = vec![DropMask::identity(); t_len];
    let mut x1 = vec![Vec::new(); t_len];
    for &p in &live {
        let row = embedding_lookup(&params.code_emb, code_ids[p] as usize)?;
        emb_masks[p] = DropMask::sample(e, rate, rng.as_deref_mut());
        x1[p] = emb_masks[p].apply(row);
    }
    let rev: Vec<usize> = live.iter().rev().copied().collect();
    let l1f = run_direction(&x1, live.clone(), &params.enc[0])?;
    let l1b = run_direction(&x1, rev.clone(), &params.enc[1])?;

    let mut mid_masks = vec![DropMask::identity(); t_len];
    let mut x2 = vec![Vec::new(); t_len];
    for (k, &p) in live.iter().enumerate() {
        let mut v = l1f.cells[k].h.clone();
        v.extend_from_slice(&l1b.cells[live.len() - 1 - k].h);
        mid_masks[p] = DropMask::sample(2 * he, rate, rng.as_deref_mut());
        mid_masks[p].apply_in_place(&mut v);
        x2[p] = v;
    }
    let l2f = run_direction(&x2, live.clone(), &params.enc[2])?;
    let l2b = run_direction(&x2, rev, &params.enc[3])?;

    let mut annotations = Tensor::zeros(&[t_len, 2 * he]);
    for (k, &p) in live.iter().enumerate() {
        let row = annotations.row_mut(p);
        row[..he].copy_from_slice(&l2f.cells[k].h);
        row[he..].copy_from_slice(&l2b.cells[live.len() - 1 - k].h);
    }
    let mut summary = l2f.cells.last().expect("non-empty").h.clone();
    summary.extend_from_slice(&l2b.cells.last().expect("non-empty").h);

    Ok((
        EncoderOutput {
            annotations,
            summary,
            mask: mask.to_vec(),
        },
        EncoderTrace {
            code_ids: code_ids.to_vec(),
            live,
            emb_masks,
            mid_masks,
            dirs: [l1f, l1b, l2f, l2b],
        },
    ))
}

/// Encodes a snippet (inference mode, no dropout).
pub fn encode(
    code_ids: &[u32],
    mask: &[bool],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<EncoderOutput> {
    if let Some(&bad) = code_ids.iter().find(|&&id| id as usize >= cfg.code_vocab_size) {
        return Err(Error::OutOfRange {
            index: bad as usize,
            size: cfg.code_vocab_size,
        });
    }
    encode_traced(code_ids, mask, params, cfg, None).map(|(out, _)| out)
}

/// Backpropagates one direction; `d_out[p]` is the gradient on that
/// direction's output at position `p`. Returns input gradients per position.
fn backprop_direction(
    trace: &DirectionTrace,
    w: &crate::numerics::LstmWeights,
    d_out: &[Vec<f64>],
    input_dim: usize,
    t_len: usize,
    grads: &mut crate::numerics::LstmWeights,
) -> Vec<Vec<f64>> {
    let hd = w.hidden();
    let mut dx = vec![vec![0.0; input_dim]; t_len];
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    for (k, &p) in trace.order.iter().enumerate().rev() {
        let dh: Vec<f64> = d_out[p].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let (dxi, dhp, dcp) = lstm_cell_backward(&trace.cells[k], w, &dh, &dc_next, grads);
        dx[p] = dxi;
        dh_next = dhp;
        dc_next = dcp;
    }
    dx
}

/// Accumulates encoder gradients given `∂L/∂annotations` and `∂L/∂summary`.
pub(crate) fn encode_backward(
    trace: &EncoderTrace,
    params: &ModelParams,
    cfg: &ModelConfig,
    d_annotations: &Tensor,
    d_summary: &[f64],
    grads: &mut ModelParams,
) -> Result<()> {
    let t_len = d_annotations.rows();
    let (e, he) = (cfg.emb_dim, cfg.enc_hidden);
    let first = trace.live[0];
    let last = *trace.live.last().expect("non-empty");

    let mut d2f = vec![vec![0.0; he]; t_len];
    let mut d2b = vec![vec![0.0; he]; t_len];
    for &p in &trace.live {
        let row = d_annotations.row(p);
        d2f[p].copy_from_slice(&row[..he]);
        d2b[p].copy_from_slice(&row[he..]);
    }
    for j in 0..he {
        d2f[last][j] += d_summary[j];
        d2b[first][j] += d_summary[he + j];
    }
    let [g0, g1, g2, g3] = &mut grads.enc;
    let dx2f = backprop_direction(&trace.dirs[2], &params.enc[2], &d2f, 2 * he, t_len, g2);
    let dx2b = backprop_direction(&trace.dirs[3], &params.enc[3], &d2b, 2 * he, t_len, g3);

    let mut d1f = vec![vec![0.0; he]; t_len];
    let mut d1b = vec![vec![0.0; he]; t_len];
    for &p in &trace.live {
        let mut d: Vec<f64> = dx2f[p].iter().zip(&dx2b[p]).map(|(a, b)| a + b).collect();
        trace.mid_masks[p].apply_in_place(&mut d);
        d1f[p].copy_from_slice(&d[..he]);
        d1b[p].copy_from_slice(&d[he..]);
    }
    let dx1f = backprop_direction(&trace.dirs[0], &params.enc[0], &d1f, e, t_len, g0);
    let dx1b = backprop_direction(&trace.dirs[1], &params.enc[1], &d1b, e, t_len, g1);
    for &p in &trace.live {
        let mut d: Vec<f64> = dx1f[p].iter().zip(&dx1b[p]).map(|(a, b)| a + b).collect();
        trace.emb_masks[p].apply_in_place(&mut d);
        embedding_backward(&mut grads.code_emb, trace.code_ids[p] as usize, &d)?;
    }
    Ok(())
}
