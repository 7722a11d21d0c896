//! Title generation: beam search and greedy decoding over the copy-extended
//! vocabulary.

mod beam;
mod metrics;

pub use beam::{
    beam_search, detokenize, generate, greedy_decode, BeamConfig, BeamHypothesis, Generated,
};
pub use metrics::{bigram_repetition_rate, exact_match_rate};
