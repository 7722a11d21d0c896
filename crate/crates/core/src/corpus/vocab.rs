use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::corpus::{PairRecord, TokenSequence};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const END: u32 = 2;
pub const UNK: u32 = 3;
pub const NUMBER: u32 = 4;
pub const STRING: u32 = 5;
pub const NUM_SPECIALS: usize = 6;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<s>", "</s>", "<unk>", "NUMBER", "STRING"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Code,
    Title,
}

/// Token ↔ id map. Specials take ids 0..6; the rest are ordered by
/// descending count, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// A vocabulary holding only the specials.
    pub fn specials() -> Self {
        Vocabulary::from_entries(SPECIAL_TOKENS.iter().map(|t| (t.to_string(), 0)).collect())
            .expect("specials are unique")
    }

    fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        let mut tokens = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (i, (tok, count)) in entries.into_iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {tok:?}")));
            }
            tokens.push(tok);
            counts.push(count);
        }
        Ok(Vocabulary { tokens, counts, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `UNK`.
    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id_of(token).unwrap_or(UNK)
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count_of(&self, id: u32) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One `token<TAB>count` line per id.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            writeln!(w, "{t}\t{c}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("vocabulary line {}: missing tab", n + 1)))?;
            let count = count
                .parse::<u64>()
                .map_err(|_| Error::Format(format!("vocabulary line {}: bad count", n + 1)))?;
            entries.push((tok.to_string(), count));
        }
        if entries.len() < NUM_SPECIALS
            || entries.iter().zip(SPECIAL_TOKENS).any(|((t, _), s)| t != s)
        {
            return Err(Error::Format(
                "vocabulary must start with the six special tokens".into(),
            ));
        }
        Vocabulary::from_entries(entries)
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("tokens are UTF-8")
    }
}

/// Counts tokens over `seqs` and keeps those with `count >= min_count`,
/// truncating to `max_size` entries including the specials.
pub fn build_vocab<'a, I>(seqs: I, max_size: usize, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    if max_size <= NUM_SPECIALS {
        return Err(Error::InvalidArgument(format!(
            "max_size {max_size} leaves no room beyond the {NUM_SPECIALS} specials"
        )));
    }
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for seq in seqs {
        for tok in seq.iter() {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !SPECIAL_TOKENS.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - NUM_SPECIALS);
    let mut entries: Vec<(String, u64)> = SPECIAL_TOKENS.iter().map(|t| (t.to_string(), 0)).collect();
    entries.extend(ranked.into_iter().map(|(t, c)| (t.to_string(), c)));
    Vocabulary::from_entries(entries)
}

pub fn build_vocab_for(
    pairs: &[PairRecord],
    side: Side,
    max_size: usize,
    min_count: u64,
) -> Result<Vocabulary> {
    build_vocab(
        pairs.iter().map(|p| match side {
            Side::Code => &p.code,
            Side::Title => &p.title,
        }),
        max_size,
        min_count,
    )
}

/// Per-example extension of a base vocabulary with the source tokens it
/// lacks. Extended ids start at the base size.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtendedVocab {
    base_size: usize,
    oov_tokens: Vec<String>,
    oov_index: HashMap<String, u32>,
}

impl ExtendedVocab {
    pub fn empty(base_size: usize) -> Self {
        ExtendedVocab {
            base_size,
            ..Default::default()
        }
    }

    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn oov_tokens(&self) -> &[String] {
        &self.oov_tokens
    }

    pub fn n_oov(&self) -> usize {
        self.oov_tokens.len()
    }

    /// Base size plus OOV slots.
    pub fn size(&self) -> usize {
        self.base_size + self.oov_tokens.len()
    }

    pub fn oov_id_of(&self, token: &str) -> Option<u32> {
        self.oov_index.get(token).copied()
    }

    /// Extended id of a target token: base id, else OOV id, else `UNK`.
    pub fn target_id(&self, vocab: &Vocabulary, token: &str) -> u32 {
        vocab
            .id_of(token)
            .or_else(|| self.oov_id_of(token))
            .unwrap_or(UNK)
    }

    pub fn token_of<'a>(&'a self, vocab: &'a Vocabulary, id: u32) -> Option<&'a str> {
        if (id as usize) < self.base_size {
            vocab.token_of(id)
        } else {
            self.oov_tokens
                .get(id as usize - self.base_size)
                .map(String::as_str)
        }
    }

    fn push(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.oov_index.get(token) {
            return id;
        }
        let id = (self.base_size + self.oov_tokens.len()) as u32;
        self.oov_tokens.push(token.to_string());
        self.oov_index.insert(token.to_string(), id);
        id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSource {
    pub base_ids: Vec<u32>,
    pub ext_ids: Vec<u32>,
    pub ext: ExtendedVocab,
}

/// Maps `seq` through `vocab`; OOV tokens get `UNK` in `base_ids` and fresh
/// per-example ids (first-occurrence order) in `ext_ids`.
pub fn encode_with_extended_vocab(seq: &TokenSequence, vocab: &Vocabulary) -> EncodedSource {
    let mut ext = ExtendedVocab::empty(vocab.len());
    let mut base_ids = Vec::with_capacity(seq.len());
    let mut ext_ids = Vec::with_capacity(seq.len());
    for tok in seq.iter() {
        match vocab.id_of(tok) {
            Some(id) => {
                base_ids.push(id);
                ext_ids.push(id);
            }
            None => {
                base_ids.push(UNK);
                ext_ids.push(ext.push(tok));
            }
        }
    }
    EncodedSource {
        base_ids,
        ext_ids,
        ext,
    }
}
