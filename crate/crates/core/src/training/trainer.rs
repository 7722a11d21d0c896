use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{backward, forward_traced, Example, ModelConfig, ModelParams};
use crate::numerics::Rng;
use crate::par;
use crate::training::{make_batches, Adam};

/// Examples per gradient work unit. Fixed so that the reduction order, and
/// therefore the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Fraction of epochs (from the start) trained with the coverage term off.
    pub warmup_fraction: f64,
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 20,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            grad_clip_norm: 5.0,
            seed: 1,
            warmup_fraction: 0.5,
            early_stop_patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, epochs and early_stop_patience must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.grad_clip_norm > 0.0) {
            return Err(Error::InvalidArgument(
                "learning_rate and grad_clip_norm must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidArgument("warmup_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Coverage weight in effect for 0-based `epoch`.
    pub fn coverage_weight_at(&self, epoch: usize, full: f64) -> f64 {
        let warm = (self.warmup_fraction * self.epochs as f64).floor() as usize;
        if epoch < warm {
            0.0
        } else {
            full
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_ppl: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation perplexity.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

/// Scales `grads` so that its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

fn dropout_rng(seed: u64, epoch: usize, example: usize) -> Rng {
    Rng::new(seed).fork(((epoch as u64) << 32) | example as u64)
}

/// Per-token-averaged loss over the examples in `indices` and its gradient.
/// `dropout` carries `(seed, epoch)` when dropout should be sampled.
pub fn batch_loss_and_grad(
    examples: &[Example],
    indices: &[usize],
    params: &ModelParams,
    cfg: &ModelConfig,
    lambda: f64,
    dropout: Option<(u64, usize)>,
) -> Result<(f64, ModelParams)> {
    let tokens: usize = indices.iter().map(|&i| examples[i].target_ids.len()).sum();
    let weight = 1.0 / tokens as f64;
    let partials = par::map_chunks(indices, GRAD_CHUNK, |_, chunk| -> Result<(f64, ModelParams)> {
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for &i in chunk {
            let ex = &examples[i];
            let mut rng = dropout.map(|(seed, epoch)| dropout_rng(seed, epoch, i));
            let tr = forward_traced(ex, params, cfg, lambda, true, rng.as_mut())?;
            loss += tr.total_loss();
            backward(&tr, ex, params, cfg, lambda, weight, &mut grads)?;
        }
        Ok((loss, grads))
    });
    let mut total = 0.0;
    let mut grads: Option<ModelParams> = None;
    for part in partials {
        let (l, g) = part?;
        total += l;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => acc.add_assign(&g),
        }
    }
    Ok((total * weight, grads.unwrap_or_else(|| params.zeros_like())))
}

/// Perplexity `exp(Σ NLL / Σ target tokens)` under teacher forcing, with the
/// coverage term excluded and dropout off.
pub fn validate(examples: &[Example], params: &ModelParams, cfg: &ModelConfig) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("no validation pairs".into()));
    }
    let parts = par::map(examples, |ex| -> Result<(f64, usize)> {
        let tr = forward_traced(ex, params, cfg, 0.0, true, None)?;
        Ok((tr.total_nll(), ex.target_ids.len()))
    });
    let mut nll = 0.0;
    let mut tokens = 0;
    for p in parts {
        let (n, t) = p?;
        nll += n;
        tokens += t;
    }
    Ok((nll / tokens as f64).exp())
}

/// Trains from a seeded initialization. `on_epoch` sees each epoch's
/// metrics as soon as they are computed.
pub fn train(
    train_set: &[Example],
    valid_set: &[Example],
    cfg: &ModelConfig,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::EmptyInput("train and validation sets must be non-empty".into()));
    }
    let mut params = ModelParams::init(cfg, &mut Rng::new(tc.seed));
    let mut opt = Adam::new(&params, tc.learning_rate, tc.beta1, tc.beta2);
    let code_lens: Vec<usize> = train_set.iter().map(|e| e.code_ids.len()).collect();
    let dropout_on = cfg.dropout_rate > 0.0;

    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;
    let mut metrics = Vec::new();
    for epoch in 0..tc.epochs {
        let started = Instant::now();
        let lambda = tc.coverage_weight_at(epoch, cfg.coverage_weight);
        let batches = make_batches(&code_lens, tc.batch_size, tc.seed.wrapping_add(epoch as u64))?;
        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        for (b, batch) in batches.iter().enumerate() {
            let dropout = dropout_on.then_some((tc.seed, epoch));
            let (loss, mut grads) =
                batch_loss_and_grad(train_set, &batch.indices, &params, cfg, lambda, dropout)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {b} (examples {:?})",
                    batch.indices
                )));
            }
            let n: usize = batch.indices.iter().map(|&i| train_set[i].target_ids.len()).sum();
            loss_sum += loss * n as f64;
            tokens += n;
            clip_global_norm(&mut grads, tc.grad_clip_norm);
            opt.step(&mut params, &grads);
        }
        let valid_ppl = validate(valid_set, &params, cfg)?;
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / tokens as f64,
            valid_ppl,
            lr: tc.learning_rate,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&m);
        metrics.push(m);
        let improved = best.as_ref().is_none_or(|(b, _, _)| valid_ppl < *b);
        if improved {
            best = Some((valid_ppl, epoch + 1, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.early_stop_patience {
                break;
            }
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        best_epoch,
        metrics,
    })
}
