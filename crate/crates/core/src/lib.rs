//! Question-title generation from code snippets and similar-question
//! retrieval over snippet embeddings.
//!
//! The offline half ([`corpus`], [`training`]) mines ⟨code, title⟩ pairs from
//! a posts dump and fits an attentional encoder-decoder with copy and
//! coverage ([`model`]). The online half ([`inference`], [`retrieval`])
//! decodes titles with beam search and ranks stored snippets by cosine
//! similarity of their encoder states.

pub mod corpus;
pub mod error;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod par;
pub mod retrieval;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
