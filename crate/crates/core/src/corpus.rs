//! Vertical tagged corpora: one token per line, blank-line sentence breaks,
//! `#doc` headers carrying the genre and translation-method labels.
//!
//! ```text
//! ## a comment
//! #doc id=d1 genre=FIC method=PT1
//! Die     ART  die
//! Katze   NN   Katze
//!
//! ```
//!
//! (token fields are tab-separated)
//!
//! Parsing is strict about structure (field counts, labels, header keys) and
//! permissive about lemmas: an empty lemma column becomes [`UNKNOWN_LEMMA`].

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

/// Lemma marker used when the lemma column is empty.
pub const UNKNOWN_LEMMA: &str = "<unknown>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed token line, expected `form<TAB>pos<TAB>lemma` ({reason})")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: malformed document header ({reason})")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: token line before any `#doc` header")]
    MissingHeader { line: usize },
    #[error("line {line}: unknown {kind} label `{value}`")]
    UnknownLabel { line: usize, kind: &'static str, value: String },
    #[error("line {line}: duplicate document id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("invalid token: {0}")]
    InvalidToken(String),
    #[error("invalid length window [{min}, {max}]")]
    InvalidWindow { min: usize, max: usize },
    #[error("document `{id}` cannot be written in vertical format: {reason}")]
    Unserializable { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Error returned when a string is not one of a label enumeration's values.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} label `{value}`")]
pub struct ParseLabelError {
    pub kind: &'static str,
    pub value: String,
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, [$($variant:ident),+ $(,)?]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ParseLabelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $(stringify!($variant) => Ok($name::$variant),)+
                    _ => Err(ParseLabelError { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

label_enum!(
    /// The seven genres of the corpus.
    GenreLabel,
    "genre",
    [ESS, FIC, INS, POP, SHA, SPE, TOU]
);

label_enum!(
    /// Fine-grained translation method: two human, three machine.
    MethodLabel,
    "method",
    [PT1, PT2, RBMT, SMT1, SMT2]
);

label_enum!(
    /// Human vs machine translation.
    CoarseMethod,
    "coarse method",
    [HUMAN, MACHINE]
);

impl MethodLabel {
    /// Merge the professional and student translations into `HUMAN`, the
    /// three MT systems into `MACHINE`.
    pub fn coarse(self) -> CoarseMethod {
        coarsen_method(self)
    }
}

pub fn coarsen_method(m: MethodLabel) -> CoarseMethod {
    match m {
        MethodLabel::PT1 | MethodLabel::PT2 => CoarseMethod::HUMAN,
        MethodLabel::RBMT | MethodLabel::SMT1 | MethodLabel::SMT2 => CoarseMethod::MACHINE,
    }
}

/// One annotated token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub pos: String,
    pub lemma: String,
}

impl Token {
    /// Builds a token, rejecting values that cannot live in a vertical file.
    /// An empty lemma is replaced by [`UNKNOWN_LEMMA`].
    pub fn new(form: impl Into<String>, pos: impl Into<String>, lemma: impl Into<String>) -> Result<Self, CorpusError> {
        let form = form.into();
        let pos = pos.into();
        let mut lemma = lemma.into();
        if form.is_empty() {
            return Err(CorpusError::InvalidToken("empty form".into()));
        }
        if form.contains(['\t', '\n', '\r']) {
            return Err(CorpusError::InvalidToken(format!("form {form:?} contains a tab or newline")));
        }
        if pos.is_empty() || pos.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidToken(format!("POS tag {pos:?} is empty or contains whitespace")));
        }
        if lemma.contains(['\t', '\n', '\r']) {
            return Err(CorpusError::InvalidToken(format!("lemma {lemma:?} contains a tab or newline")));
        }
        if lemma.is_empty() {
            lemma = UNKNOWN_LEMMA.to_string();
        }
        Ok(Token { form, pos, lemma })
    }
}

/// A non-empty, ordered run of tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    tokens: Vec<Token>,
}

impl TaggedSentence {
    /// Returns `None` for an empty token list.
    pub fn new(tokens: Vec<Token>) -> Option<Self> {
        if tokens.is_empty() {
            None
        } else {
            Some(TaggedSentence { tokens })
        }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub genre: GenreLabel,
    pub method: MethodLabel,
    pub sentences: Vec<TaggedSentence>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(TaggedSentence::len).sum()
    }
}

/// One sentence-level classification unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledInstance {
    pub tokens: TaggedSentence,
    pub genre: GenreLabel,
    pub method: MethodLabel,
    pub source_doc: String,
}

/// Inclusive sentence-length window used when building instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthWindow {
    min: usize,
    max: usize,
}

impl LengthWindow {
    pub fn new(min: usize, max: usize) -> Result<Self, CorpusError> {
        if min == 0 || max < min {
            return Err(CorpusError::InvalidWindow { min, max });
        }
        Ok(LengthWindow { min, max })
    }

    /// `[1, usize::MAX]`: keeps every sentence.
    pub fn unbounded() -> Self {
        LengthWindow { min: 1, max: usize::MAX }
    }

    pub fn min(&self) -> usize {
        self.min
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn contains(&self, len: usize) -> bool {
        (self.min..=self.max).contains(&len)
    }
}

impl Default for LengthWindow {
    /// 12 to 24 tokens.
    fn default() -> Self {
        LengthWindow { min: 12, max: 24 }
    }
}

/// Instances that survived the length filter, plus how many did not.
#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub instances: Vec<LabeledInstance>,
    pub excluded: usize,
}

/// Turns every in-window sentence into a [`LabeledInstance`], in corpus order.
pub fn extract_instances(docs: &[Document], window: LengthWindow) -> Extraction {
    let mut out = Extraction::default();
    for doc in docs {
        for sentence in &doc.sentences {
            if window.contains(sentence.len()) {
                out.instances.push(LabeledInstance {
                    tokens: sentence.clone(),
                    genre: doc.genre,
                    method: doc.method,
                    source_doc: doc.id.clone(),
                });
            } else {
                out.excluded += 1;
            }
        }
    }
    log::info!("excluded_sentences={}", out.excluded);
    out
}

struct PendingDoc {
    doc: Document,
    current: Vec<Token>,
}

impl PendingDoc {
    fn end_sentence(&mut self) {
        if let Some(s) = TaggedSentence::new(std::mem::take(&mut self.current)) {
            self.doc.sentences.push(s);
        }
    }

    fn finish(mut self) -> Document {
        self.end_sentence();
        if self.doc.sentences.is_empty() {
            log::warn!("document `{}` has no sentences", self.doc.id);
        }
        self.doc
    }
}

fn parse_header(line: &str, lineno: usize) -> Result<(String, GenreLabel, MethodLabel), CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedHeader { line: lineno, reason };
    let mut id = None;
    let mut genre = None;
    let mut method = None;
    for field in line["#doc".len()..].split_whitespace() {
        let (key, value) =
            field.split_once('=').ok_or_else(|| malformed(format!("field `{field}` is not key=value")))?;
        let slot = match key {
            "id" => &mut id,
            "genre" => &mut genre,
            "method" => &mut method,
            _ => return Err(malformed(format!("unknown key `{key}`"))),
        };
        if slot.replace(value).is_some() {
            return Err(malformed(format!("duplicate key `{key}`")));
        }
    }
    let id = id.ok_or_else(|| malformed("missing `id`".into()))?;
    if id.is_empty() {
        return Err(malformed("empty `id`".into()));
    }
    let genre = genre.ok_or_else(|| malformed("missing `genre`".into()))?;
    let method = method.ok_or_else(|| malformed("missing `method`".into()))?;
    let genre = genre.parse::<GenreLabel>().map_err(|e| CorpusError::UnknownLabel {
        line: lineno,
        kind: e.kind,
        value: e.value,
    })?;
    let method = method.parse::<MethodLabel>().map_err(|e| CorpusError::UnknownLabel {
        line: lineno,
        kind: e.kind,
        value: e.value,
    })?;
    Ok((id.to_string(), genre, method))
}

fn is_header(line: &str) -> bool {
    line.strip_prefix("#doc").is_some_and(|rest| rest.is_empty() || rest.starts_with(char::is_whitespace))
}

/// Parses a vertical corpus. Documents come back in input order.
pub fn parse_vertical<R: BufRead>(input: R) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut pending: Option<PendingDoc> = None;

    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.trim().is_empty() {
            if let Some(p) = pending.as_mut() {
                p.end_sentence();
            }
            continue;
        }
        if line.starts_with("##") {
            continue;
        }
        if is_header(line) {
            let (id, genre, method) = parse_header(line, lineno)?;
            if !seen_ids.insert(id.clone()) {
                return Err(CorpusError::DuplicateId { line: lineno, id });
            }
            if let Some(p) = pending.take() {
                docs.push(p.finish());
            }
            pending =
                Some(PendingDoc { doc: Document { id, genre, method, sentences: Vec::new() }, current: Vec::new() });
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::MalformedLine {
                line: lineno,
                reason: format!("found {} field(s)", fields.len()),
            });
        }
        let p = pending.as_mut().ok_or(CorpusError::MissingHeader { line: lineno })?;
        let token = Token::new(fields[0], fields[1], fields[2])
            .map_err(|e| CorpusError::MalformedLine { line: lineno, reason: e.to_string() })?;
        p.current.push(token);
    }
    if let Some(p) = pending.take() {
        docs.push(p.finish());
    }
    Ok(docs)
}

/// Parses a corpus held in memory.
pub fn parse_vertical_str(input: &str) -> Result<Vec<Document>, CorpusError> {
    parse_vertical(input.as_bytes())
}

/// Writes documents in the vertical format; `parse_vertical` reads them back
/// unchanged. Forms starting with `##` or `#doc` cannot be represented.
pub fn write_vertical<W: Write>(mut out: W, docs: &[Document]) -> Result<(), CorpusError> {
    for doc in docs {
        if doc.id.is_empty() || doc.id.chars().any(char::is_whitespace) {
            return Err(CorpusError::Unserializable {
                id: doc.id.clone(),
                reason: "id is empty or contains whitespace".into(),
            });
        }
        writeln!(out, "#doc id={} genre={} method={}", doc.id, doc.genre, doc.method)?;
        for sentence in &doc.sentences {
            for t in sentence.tokens() {
                if t.form.starts_with("##") || is_header(&t.form) {
                    return Err(CorpusError::Unserializable {
                        id: doc.id.clone(),
                        reason: format!("form {:?} would be read as a comment or header", t.form),
                    });
                }
                writeln!(out, "{}\t{}\t{}", t.form, t.pos, t.lemma)?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Vec<Document>, CorpusError> {
        parse_vertical_str(s)
    }

    #[test]
    fn single_sentence_document() {
        let docs = parse("#doc id=d1 genre=FIC method=PT1\nDie\tART\tdie\nKatze\tNN\tKatze\n\n").unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].id, "d1");
        assert_eq!(docs[0].genre, GenreLabel::FIC);
        assert_eq!(docs[0].method, MethodLabel::PT1);
        assert_eq!(docs[0].sentences.len(), 1);
        assert_eq!(docs[0].sentences[0].len(), 2);
        assert_eq!(docs[0].sentences[0].tokens()[1].pos, "NN");
    }

    #[test]
    fn missing_tab_is_malformed() {
        let err = parse("#doc id=d1 genre=FIC method=PT1\nDie\tART\tdie\nDie ART\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_genre() {
        let err = parse("#doc id=d1 genre=XYZ method=PT1\n").unwrap_err();
        assert!(
            matches!(err, CorpusError::UnknownLabel { line: 1, kind: "genre", ref value } if value == "XYZ"),
            "{err}"
        );
        let err = parse("#doc id=d1 genre=FIC method=NMT\n").unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabel { kind: "method", .. }));
    }

    #[test]
    fn token_before_header() {
        let err = parse("## comment\nDie\tART\tdie\n").unwrap_err();
        assert!(matches!(err, CorpusError::MissingHeader { line: 2 }));
    }

    #[test]
    fn header_keys_any_order_and_validated() {
        let docs = parse("#doc method=SMT2 id=x genre=TOU\na\tB\tc\n").unwrap();
        assert_eq!(docs[0].method, MethodLabel::SMT2);
        assert_eq!(docs[0].genre, GenreLabel::TOU);
        for bad in [
            "#doc id=x genre=TOU\n",
            "#doc id=x id=y genre=TOU method=PT1\n",
            "#doc id=x genre=TOU method=PT1 lang=de\n",
            "#doc id=x genre=TOU method\n",
        ] {
            assert!(matches!(parse(bad), Err(CorpusError::MalformedHeader { .. })), "{bad}");
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = parse("#doc id=x genre=TOU method=PT1\n#doc id=x genre=FIC method=PT1\n").unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }));
    }

    #[test]
    fn blank_runs_headers_and_comments() {
        let src = "#doc id=a genre=ESS method=RBMT\nx\tX\tx\n\n\n\ny\tY\ty\n## note\nz\tZ\tz\n#doc id=b genre=ESS method=RBMT\nw\tW\t\n";
        let docs = parse(src).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].sentences.len(), 2);
        assert_eq!(docs[0].sentences[1].len(), 2);
        assert_eq!(docs[1].sentences[0].tokens()[0].lemma, UNKNOWN_LEMMA);
    }

    #[test]
    fn empty_document_kept() {
        let docs = parse("#doc id=a genre=ESS method=PT2\n\n#doc id=b genre=ESS method=PT2\nq\tQ\tq\n").unwrap();
        assert_eq!(docs.len(), 2);
        assert!(docs[0].sentences.is_empty());
    }

    #[test]
    fn crlf_line_endings() {
        let docs = parse("#doc id=a genre=ESS method=PT2\r\nq\tQ\tq\r\n\r\n").unwrap();
        assert_eq!(docs[0].sentences[0].tokens()[0].lemma, "q");
    }

    fn doc_with_lengths(lengths: &[usize]) -> Document {
        let sentences = lengths
            .iter()
            .map(|&n| {
                TaggedSentence::new((0..n).map(|i| Token::new(format!("t{i}"), "X", "t").unwrap()).collect()).unwrap()
            })
            .collect();
        Document { id: "d".into(), genre: GenreLabel::POP, method: MethodLabel::SMT1, sentences }
    }

    #[test]
    fn window_boundaries() {
        let docs = [doc_with_lengths(&[11, 12, 24, 25])];
        let ex = extract_instances(&docs, LengthWindow::default());
        let lens: Vec<_> = ex.instances.iter().map(|i| i.tokens.len()).collect();
        assert_eq!(lens, vec![12, 24]);
        assert_eq!(ex.excluded, 2);
        assert_eq!(ex.instances[0].source_doc, "d");
        assert_eq!(ex.instances[0].genre, GenreLabel::POP);
    }

    #[test]
    fn unbounded_window_is_identity() {
        let docs = [doc_with_lengths(&[3, 1, 7])];
        let ex = extract_instances(&docs, LengthWindow::new(1, 1_000_000_000).unwrap());
        assert_eq!(ex.instances.len(), 3);
        assert_eq!(ex.excluded, 0);
    }

    #[test]
    fn invalid_windows() {
        assert!(LengthWindow::new(0, 5).is_err());
        assert!(LengthWindow::new(6, 5).is_err());
        assert!(LengthWindow::new(5, 5).is_ok());
    }

    #[test]
    fn coarse_methods() {
        assert_eq!(coarsen_method(MethodLabel::PT1), CoarseMethod::HUMAN);
        assert_eq!(coarsen_method(MethodLabel::PT2), CoarseMethod::HUMAN);
        assert_eq!(coarsen_method(MethodLabel::RBMT), CoarseMethod::MACHINE);
        assert_eq!(coarsen_method(MethodLabel::SMT1), CoarseMethod::MACHINE);
        assert_eq!(coarsen_method(MethodLabel::SMT2), CoarseMethod::MACHINE);
        let image: HashSet<_> = MethodLabel::ALL.iter().map(|m| m.coarse()).collect();
        assert_eq!(image.len(), CoarseMethod::ALL.len());
    }

    #[test]
    fn token_validation() {
        assert!(Token::new("", "NN", "x").is_err());
        assert!(Token::new("a", "N N", "x").is_err());
        assert!(Token::new("a\tb", "NN", "x").is_err());
        assert_eq!(Token::new("a", "NN", "").unwrap().lemma, UNKNOWN_LEMMA);
    }

    #[test]
    fn writer_refuses_ambiguous_forms() {
        let mut d = doc_with_lengths(&[1]);
        d.sentences[0] = TaggedSentence::new(vec![Token::new("##x", "X", "x").unwrap()]).unwrap();
        assert!(matches!(write_vertical(Vec::new(), &[d]), Err(CorpusError::Unserializable { .. })));
    }
}
