//! Snippet embeddings and top-k similar-question search, by exhaustive
//! cosine scan or random-hyperplane LSH.

mod embed;
mod index;
mod lsh;
mod search;

pub use embed::{build_index, embed_snippet};
pub use index::{EmbeddingIndex, RowMeta, SearchIndex, INDEX_MAGIC, INDEX_VERSION};
pub use lsh::{LshConfig, LshIndex};
pub use search::{cosine, exact_topk, lsh_topk, rerank, Hit};
