use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CODE_TOKENS: usize = 16;
pub const MAX_CODE_TOKENS: usize = 128;
pub const MIN_TITLE_TOKENS: usize = 4;
pub const MAX_TITLE_TOKENS: usize = 16;
pub const MIN_SCORE: i64 = 1;

/// Question words a kept title must contain (whole-token, case-insensitive).
pub const INTERROGATIVES: [&str; 7] = ["how", "what", "why", "which", "when", "where", "who"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenMode {
    Code,
    Title,
}

/// Ordered tokens; no token is empty or contains whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::InvalidArgument(format!("invalid token {bad:?}")));
        }
        Ok(TokenSequence(tokens))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl TryFrom<Vec<String>> for TokenSequence {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        TokenSequence::new(v)
    }
}

impl From<TokenSequence> for Vec<String> {
    fn from(s: TokenSequence) -> Self {
        s.0
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whitespace split, then every character that is neither alphanumeric nor
/// `_` becomes its own token. Titles are lowercased; code keeps its case.
pub fn tokenize(text: &str, mode: TokenMode) -> TokenSequence {
    let lowered;
    let text = match mode {
        TokenMode::Title => {
            lowered = text.to_lowercase();
            lowered.as_str()
        }
        TokenMode::Code => text,
    };
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut start = None;
        for (i, c) in word.char_indices() {
            if is_word_char(c) {
                start.get_or_insert(i);
            } else {
                if let Some(s) = start.take() {
                    tokens.push(word[s..i].to_string());
                }
                tokens.push(c.to_string());
            }
        }
        if let Some(s) = start {
            tokens.push(word[s..].to_string());
        }
    }
    TokenSequence(tokens)
}

static STRING_LITERAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*'"#).unwrap());
static QUOTED_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^(?:"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')$"#).unwrap());
static NUMBER_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[0-9]+(?:\.[0-9]+)?|0[xX][0-9a-fA-F]+)$").unwrap());
static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[0-9]+$").unwrap());

/// Replaces single- and double-quoted literals (escape-aware, never spanning
/// a line) with a standalone `STRING` token. Runs on raw code text, before
/// tokenization.
pub fn mask_string_literals(code: &str) -> String {
    STRING_LITERAL.replace_all(code, " STRING ").into_owned()
}

/// Maps numeric literals to `NUMBER` and quoted literals to `STRING`. A
/// decimal split by the tokenizer (`3`, `.`, `14`) collapses to one token.
pub fn normalize_code(seq: &TokenSequence) -> TokenSequence {
    let toks = seq.tokens();
    let mut out = Vec::with_capacity(toks.len());
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i].as_str();
        if DIGITS.is_match(t)
            && toks.get(i + 1).is_some_and(|d| d == ".")
            && toks.get(i + 2).is_some_and(|f| DIGITS.is_match(f))
        {
            out.push(super::SPECIAL_TOKENS[super::NUMBER as usize].to_string());
            i += 3;
            continue;
        }
        if NUMBER_TOKEN.is_match(t) {
            out.push(super::SPECIAL_TOKENS[super::NUMBER as usize].to_string());
        } else if QUOTED_TOKEN.is_match(t) {
            out.push(super::SPECIAL_TOKENS[super::STRING as usize].to_string());
        } else {
            out.push(t.to_string());
        }
        i += 1;
    }
    TokenSequence(out)
}

pub fn is_interrogative(token: &str) -> bool {
    INTERROGATIVES.iter().any(|w| w.eq_ignore_ascii_case(token))
}

/// Quality gate for a tokenized pair.
pub fn filter_pair(code: &TokenSequence, title: &TokenSequence, score: i64) -> bool {
    score >= MIN_SCORE
        && (MIN_CODE_TOKENS..=MAX_CODE_TOKENS).contains(&code.len())
        && (MIN_TITLE_TOKENS..=MAX_TITLE_TOKENS).contains(&title.len())
        && title.iter().any(is_interrogative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::new(tokens.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("", TokenMode::Title).is_empty());
        assert_eq!(
            tokenize("How to sort a list?", TokenMode::Title),
            seq(&["how", "to", "sort", "a", "list", "?"])
        );
        assert_eq!(tokenize("df.head()", TokenMode::Code), seq(&["df", ".", "head", "(", ")"]));
        assert_eq!(
            tokenize("def get_client_ip(request):", TokenMode::Code),
            seq(&["def", "get_client_ip", "(", "request", ")", ":"])
        );
        assert_eq!(tokenize("Foo", TokenMode::Code), seq(&["Foo"]));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_code(&seq(&["x", "=", "42"])), seq(&["x", "=", "NUMBER"]));
        assert_eq!(
            normalize_code(&seq(&["print", "(", "\"hello\"", ")"])),
            seq(&["print", "(", "STRING", ")"])
        );
        assert_eq!(normalize_code(&seq(&["a", "+", "b"])), seq(&["a", "+", "b"]));
        assert_eq!(normalize_code(&seq(&["y", "=", "3", ".", "14"])), seq(&["y", "=", "NUMBER"]));
        assert_eq!(normalize_code(&seq(&["0xFF", "x1"])), seq(&["NUMBER", "x1"]));
    }

    #[test]
    fn string_masking_on_text() {
        let masked = mask_string_literals(r#"print("hello world", 'it\'s') # done"#);
        let toks = normalize_code(&tokenize(&masked, TokenMode::Code));
        assert_eq!(toks, seq(&["print", "(", "STRING", ",", "STRING", ")", "#", "done"]));
    }

    #[test]
    fn filter_examples() {
        let code = TokenSequence((0..20).map(|i| format!("t{i}")).collect());
        let title = seq(&["how", "to", "parse", "json", "in", "python", "?"]);
        assert!(filter_pair(&code, &title, 3));
        assert!(!filter_pair(&code, &seq(&["how", "parse", "?"]), 3));
        let long = TokenSequence((0..130).map(|i| format!("t{i}")).collect());
        assert!(!filter_pair(&long, &title, 3));
        assert!(!filter_pair(&code, &title, 0));
        assert!(!filter_pair(&code, &seq(&["parse", "json", "in", "python"]), 3));
        assert!(filter_pair(&code, &seq(&["WHICH", "json", "in", "python"]), 1));
    }

    #[test]
    fn rejects_bad_tokens() {
        assert!(TokenSequence::new(vec!["".into()]).is_err());
        assert!(TokenSequence::new(vec!["a b".into()]).is_err());
        assert!(serde_json::from_str::<TokenSequence>(r#"["a", ""]"#).is_err());
    }

    proptest! {
        #[test]
        fn title_tokenize_is_idempotent(s in "\\PC{0,60}") {
            let once = tokenize(&s, TokenMode::Title);
            let twice = tokenize(&once.to_string(), TokenMode::Title);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_are_clean(s in "\\PC{0,60}") {
            let t = tokenize(&s, TokenMode::Code);
            prop_assert!(TokenSequence::new(t.into_inner()).is_ok());
        }

        #[test]
        fn normalize_never_grows(s in "[a-z0-9 .=\"']{0,40}") {
            let t = tokenize(&s, TokenMode::Code);
            prop_assert!(normalize_code(&t).len() <= t.len());
        }
    }
}
