//! Text representations and n-gram extraction.
//!
//! A sentence is first mapped to a sequence of [`FeatureToken`]s under one of
//! three [`RepresentationMode`]s, then cut into contiguous windows of length
//! `n`. Windows never cross a sentence boundary and are never padded.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{LabeledInstance, TaggedSentence};

/// Replacement for nouns in [`RepresentationMode::Semi`].
pub const PLACEHOLDER: &str = "PLH";

/// POS tags treated as nouns by [`RepresentationMode::Semi`]: common and proper nouns.
pub const NOUN_TAGS: &[&str] = &["NN", "NE"];

/// Largest supported n-gram order.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepresentationError {
    #[error("n-gram order {0} is outside 1..=4")]
    OrderOutOfRange(usize),
    #[error("unknown representation mode `{0}` (expected LEX, SEMI or POS)")]
    UnknownMode(String),
    #[error("invalid n-gram `{0}`")]
    InvalidNGram(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum RepresentationMode {
    /// Surface forms.
    Lex,
    /// Surface forms with nouns replaced by [`PLACEHOLDER`].
    Semi,
    /// POS tags only.
    #[default]
    Pos,
}

impl RepresentationMode {
    pub const ALL: [RepresentationMode; 3] =
        [RepresentationMode::Lex, RepresentationMode::Semi, RepresentationMode::Pos];

    pub fn as_str(self) -> &'static str {
        match self {
            RepresentationMode::Lex => "LEX",
            RepresentationMode::Semi => "SEMI",
            RepresentationMode::Pos => "POS",
        }
    }
}

impl fmt::Display for RepresentationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RepresentationMode {
    type Err = RepresentationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LEX" => Ok(RepresentationMode::Lex),
            "SEMI" => Ok(RepresentationMode::Semi),
            "POS" => Ok(RepresentationMode::Pos),
            _ => Err(RepresentationError::UnknownMode(s.to_string())),
        }
    }
}

/// An n-gram order in `1..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NGramOrder(usize);

impl NGramOrder {
    pub const UNIGRAM: NGramOrder = NGramOrder(1);
    pub const BIGRAM: NGramOrder = NGramOrder(2);
    pub const TRIGRAM: NGramOrder = NGramOrder(3);
    pub const FOURGRAM: NGramOrder = NGramOrder(4);

    pub fn new(n: usize) -> Result<Self, RepresentationError> {
        if (1..=MAX_ORDER).contains(&n) {
            Ok(NGramOrder(n))
        } else {
            Err(RepresentationError::OrderOutOfRange(n))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for NGramOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A single n-gram unit: a surface form, the placeholder, or a POS tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureToken(String);

impl FeatureToken {
    /// Internal whitespace is replaced by `_`.
    ///
    /// # Panics
    ///
    /// If `value` is empty.
    pub fn new(value: &str) -> Self {
        assert!(!value.is_empty(), "feature tokens must be non-empty");
        if value.chars().any(char::is_whitespace) {
            FeatureToken(value.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect())
        } else {
            FeatureToken(value.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FeatureToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A contiguous sequence of 1 to 4 feature tokens.
///
/// Stored as its canonical string (parts joined by a single space); equality,
/// hashing and ordering all go through that string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NGram {
    key: String,
}

impl NGram {
    pub fn from_tokens(parts: &[FeatureToken]) -> Result<Self, RepresentationError> {
        NGramOrder::new(parts.len())?;
        let mut key = String::with_capacity(parts.iter().map(|p| p.0.len() + 1).sum());
        for (i, p) in parts.iter().enumerate() {
            if i > 0 {
                key.push(' ');
            }
            key.push_str(&p.0);
        }
        Ok(NGram { key })
    }

    /// Parses a canonical rendering such as `"ART NN VVFIN"`.
    pub fn parse(canonical: &str) -> Result<Self, RepresentationError> {
        let invalid = || RepresentationError::InvalidNGram(canonical.to_string());
        let parts: Vec<&str> = canonical.split(' ').collect();
        if parts.iter().any(|p| p.is_empty() || p.chars().any(char::is_whitespace)) {
            return Err(invalid());
        }
        NGramOrder::new(parts.len()).map_err(|_| invalid())?;
        Ok(NGram { key: canonical.to_string() })
    }

    pub fn as_str(&self) -> &str {
        &self.key
    }

    pub fn parts(&self) -> impl Iterator<Item = &str> {
        self.key.split(' ')
    }

    pub fn order(&self) -> usize {
        self.parts().count()
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

pub fn is_noun_tag(pos: &str) -> bool {
    NOUN_TAGS.contains(&pos)
}

/// Maps a sentence to one feature token per input token.
pub fn delexicalize(sentence: &TaggedSentence, mode: RepresentationMode) -> Vec<FeatureToken> {
    sentence
        .tokens()
        .iter()
        .map(|t| match mode {
            RepresentationMode::Lex => FeatureToken::new(&t.form),
            RepresentationMode::Semi if is_noun_tag(&t.pos) => FeatureToken::new(PLACEHOLDER),
            RepresentationMode::Semi => FeatureToken::new(&t.form),
            RepresentationMode::Pos => FeatureToken::new(&t.pos),
        })
        .collect()
}

/// All contiguous windows of length `n`; `max(0, len - n + 1)` of them.
pub fn extract_ngrams(seq: &[FeatureToken], n: NGramOrder) -> Vec<NGram> {
    seq.windows(n.get()).map(|w| NGram::from_tokens(w).expect("window length is a valid order")).collect()
}

pub fn featurize_sentence(sentence: &TaggedSentence, mode: RepresentationMode, n: NGramOrder) -> Vec<NGram> {
    extract_ngrams(&delexicalize(sentence, mode), n)
}

pub fn featurize_instance(inst: &LabeledInstance, mode: RepresentationMode, n: NGramOrder) -> Vec<NGram> {
    featurize_sentence(&inst.tokens, mode, n)
}
