//! The attentional encoder-decoder. A two-layer bidirectional LSTM feeds a
//! one-layer LSTM decoder through additive attention with coverage.
//! A soft gate mixes generating with copying over a per-example extended
//! vocabulary.

mod checkpoint;
mod config;
mod decoder;
mod dropout;
mod encoder;
mod params;
mod sequence;

pub use checkpoint::{artifact_reads, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub(crate) use checkpoint::note_artifact_read;
pub use config::ModelConfig;
pub use decoder::{
    attention, decode_step, feed_id, final_distribution, init_decoder, step_loss, DecoderState,
    Source, StepOutput, LOG_EPS,
};
pub use encoder::{encode, EncoderOutput};
pub use params::ModelParams;
pub use sequence::{
    prepare_source, sequence_loss, sequence_loss_and_grad, Example, StepDiagnostics,
};
pub(crate) use sequence::{backward, forward_traced};
