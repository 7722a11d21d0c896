//! Offline training: length-bucketed batching, per-token loss averaging,
//! global-norm clipping, Adam, per-epoch validation and early stopping.

mod adam;
mod batch;
mod trainer;

pub use adam::Adam;
pub use batch::{make_batches, Batch, PaddedBatch};
pub use trainer::{
    batch_loss_and_grad, clip_global_norm, train, validate, EpochMetrics, TrainConfig, TrainOutcome,
};
