use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    extract_pair, filter_pair, mask_string_literals, normalize_code, tokenize, RawPost, TokenMode,
    TokenSequence,
};
use crate::error::{Error, Result};
use crate::par;

pub fn question_url(post_id: u64) -> String {
    format!("https://stackoverflow.com/questions/{post_id}")
}

/// Output of `ingest`: an extracted pair before tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub post_id: u64,
    pub url: String,
    pub code: String,
    pub title: String,
    pub score: i64,
    pub tag: String,
}

/// One training example as stored in the corpus JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub post_id: u64,
    pub url: String,
    pub code: TokenSequence,
    pub title: TokenSequence,
    pub score: i64,
    pub tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Deterministic 90/5/5 split on `post_id % 100`.
pub fn split_of(post_id: u64) -> Split {
    match post_id % 100 {
        0..=89 => Split::Train,
        90..=94 => Split::Valid,
        _ => Split::Test,
    }
}

/// Extracts raw pairs from a post stream. Stops at the first stream error,
/// after every earlier complete row has been passed to `sink`.
pub fn ingest<I, F>(posts: I, tag: &str, mut sink: F) -> Result<usize>
where
    I: IntoIterator<Item = Result<RawPost>>,
    F: FnMut(RawPair) -> Result<()>,
{
    let mut n = 0;
    for post in posts {
        let post = post?;
        if let Some(p) = extract_pair(&post, tag) {
            sink(RawPair {
                post_id: p.post_id,
                url: question_url(p.post_id),
                code: p.code_text,
                title: p.title_text,
                score: p.score,
                tag: tag.to_string(),
            })?;
            n += 1;
        }
    }
    Ok(n)
}

/// Turns a raw snippet into normalized tokens with literals masked.
pub fn preprocess_code(code: &str) -> TokenSequence {
    normalize_code(&tokenize(&mask_string_literals(code), TokenMode::Code))
}

/// Preprocesses one raw pair; `None` if it fails the filters.
pub fn preprocess_pair(raw: &RawPair) -> Option<PairRecord> {
    let code = preprocess_code(&raw.code);
    let title = tokenize(&raw.title, TokenMode::Title);
    if !filter_pair(&code, &title, raw.score) {
        return None;
    }
    Some(PairRecord {
        post_id: raw.post_id,
        url: raw.url.clone(),
        code,
        title,
        score: raw.score,
        tag: raw.tag.clone(),
    })
}

/// Preprocesses every raw pair and deduplicates the survivors. The output is
/// ordered by `post_id` and does not depend on input order or sharding.
pub fn preprocess(raw: &[RawPair]) -> Vec<PairRecord> {
    let kept: Vec<PairRecord> = par::map(raw, preprocess_pair).into_iter().flatten().collect();
    dedupe(kept)
}

/// Drops exact (code, title) duplicates, keeping the highest score (lowest
/// `post_id` on ties). Output sorted by `post_id`.
pub fn dedupe(records: Vec<PairRecord>) -> Vec<PairRecord> {
    let mut best: HashMap<(TokenSequence, TokenSequence), PairRecord> = HashMap::new();
    for r in records {
        let key = (r.code.clone(), r.title.clone());
        match best.get(&key) {
            Some(prev) if (prev.score, std::cmp::Reverse(prev.post_id)) >= (r.score, std::cmp::Reverse(r.post_id)) => {}
            _ => {
                best.insert(key, r);
            }
        }
    }
    let mut out: Vec<PairRecord> = best.into_values().collect();
    out.sort_by_key(|r| r.post_id);
    out
}

pub fn write_jsonl<W: Write, T: Serialize>(w: &mut W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
