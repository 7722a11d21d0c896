//! Offline corpus mining. Posts are stream-parsed into ⟨code snippet,
//! title⟩ pairs, which are cleaned before vocabularies are counted.

mod dump;
mod extract;
mod pipeline;
mod tokenize;
mod vocab;

pub use dump::{open_dump, parse_posts_stream, PostStream, PostType, RawPost};
pub use extract::{decode_entities, extract_pair, ExtractedPair};
pub use pipeline::{
    dedupe, ingest, preprocess, preprocess_code, preprocess_pair, question_url, read_jsonl, split_of, write_jsonl,
    PairRecord, RawPair, Split,
};
pub use tokenize::{
    filter_pair, is_interrogative, mask_string_literals, normalize_code, tokenize, TokenMode,
    TokenSequence, INTERROGATIVES, MAX_CODE_TOKENS, MAX_TITLE_TOKENS, MIN_CODE_TOKENS,
    MIN_SCORE, MIN_TITLE_TOKENS,
};
pub use vocab::{
    build_vocab, build_vocab_for, encode_with_extended_vocab, EncodedSource, ExtendedVocab, Side,
    Vocabulary, BOS, END, NUMBER, NUM_SPECIALS, PAD, SPECIAL_TOKENS, STRING, UNK,
};
