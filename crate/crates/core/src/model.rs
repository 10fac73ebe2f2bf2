//! Likelihood Estimation: one n-gram language model per class, add-one
//! smoothing over a shared vocabulary, and a summed-log-likelihood decision.
//!
//! For a class model with n-gram counts `C(g)` and total `N`, and a vocabulary
//! of `B` distinct n-gram types observed across all classes,
//!
//! ```text
//! P(g | class) = (C(g) + 1) / (N + B)
//! ```
//!
//! and a test instance with n-grams `g_1 .. g_k` (with multiplicity) scores
//!
//! ```text
//! score(class) = sum_i ln P(g_i | class) + ln P(class)
//! ```
//!
//! The predicted class is the argmax, ties going to the lexicographically
//! smallest label.
//!
//! The unigram bag-of-words regime ([`Smoothing::None`]) uses unsmoothed
//! relative frequencies and skips test unigrams the class never saw.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use crc::{Crc, CRC_64_XZ};
use thiserror::Error;

use crate::representation::{NGram, NGramOrder, RepresentationError, RepresentationMode};

/// Current model file format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

const MODEL_MAGIC: &str = "#transvar-model";
const CHECKSUM: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("at least two classes are required, found {found}")]
    MinClasses { found: usize },
    #[error("class `{label}` contributes no n-grams")]
    EmptyClass { label: String },
    #[error("duplicate class `{label}`")]
    DuplicateClass { label: String },
    #[error("invalid class label `{label}`: labels must be non-empty and contain no whitespace")]
    InvalidLabel { label: String },
    #[error(transparent)]
    Order(#[from] RepresentationError),
    #[error("n-gram `{gram}` has order {found}, model order is {expected}")]
    OrderMismatch { gram: String, found: usize, expected: usize },
    #[error("unsmoothed (bag-of-words) models are only defined for order 1, got {order}")]
    UnsmoothedOrder { order: usize },
    #[error("invalid priors: {0}")]
    InvalidPriors(String),
    #[error("instance has no n-grams to score")]
    EmptyInstance,
    #[error("unsupported model format version `{found}` (expected v{MODEL_FORMAT_VERSION})")]
    VersionMismatch { found: String },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Smoothing {
    #[default]
    Laplace,
    /// Unsmoothed relative frequencies, unigram bag-of-words only.
    None,
}

impl Smoothing {
    pub fn as_str(self) -> &'static str {
        match self {
            Smoothing::Laplace => "LAPLACE",
            Smoothing::None => "NONE",
        }
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Smoothing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LAPLACE" => Ok(Smoothing::Laplace),
            "NONE" => Ok(Smoothing::None),
            _ => Err(format!("unknown smoothing `{s}` (expected LAPLACE or NONE)")),
        }
    }
}

/// How class priors are set at training time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    /// `1 / number_of_classes`.
    #[default]
    Uniform,
    /// Share of training instances.
    Empirical,
}

impl FromStr for PriorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(PriorMode::Uniform),
            "empirical" => Ok(PriorMode::Empirical),
            _ => Err(format!("unknown prior mode `{s}` (expected uniform or empirical)")),
        }
    }
}

/// Counts of every n-gram seen for one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramModel {
    class_label: String,
    order: NGramOrder,
    counts: HashMap<NGram, u64>,
    total: u64,
}

impl NGramModel {
    pub fn new(class_label: impl Into<String>, order: NGramOrder) -> Self {
        NGramModel { class_label: class_label.into(), order, counts: HashMap::new(), total: 0 }
    }

    /// Builds a model from explicit counts; zero counts are dropped.
    pub fn from_counts<I>(class_label: impl Into<String>, order: NGramOrder, counts: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (NGram, u64)>,
    {
        let mut m = NGramModel::new(class_label, order);
        for (g, c) in counts {
            m.add_count(&g, c)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, gram: &NGram) -> Result<(), ModelError> {
        self.add_count(gram, 1)
    }

    fn add_count(&mut self, gram: &NGram, count: u64) -> Result<(), ModelError> {
        let found = gram.order();
        if found != self.order.get() {
            return Err(ModelError::OrderMismatch { gram: gram.to_string(), found, expected: self.order.get() });
        }
        if count > 0 {
            *self.counts.entry(gram.clone()).or_insert(0) += count;
            self.total += count;
        }
        Ok(())
    }

    pub fn class_label(&self) -> &str {
        &self.class_label
    }

    pub fn order(&self) -> NGramOrder {
        self.order
    }

    /// `C(g)`, zero for unseen grams.
    pub fn count(&self, gram: &NGram) -> u64 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// `N`: number of n-gram tokens seen in training.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn type_count(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NGram, u64)> {
        self.counts.iter().map(|(g, &c)| (g, c))
    }

    /// Counts sorted by canonical n-gram string.
    pub fn sorted_counts(&self) -> Vec<(&NGram, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

/// Size `B` of the shared vocabulary: distinct n-gram types over all classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabularyIndex {
    size: u64,
}

impl VocabularyIndex {
    pub fn from_models(models: &[NGramModel]) -> Self {
        let types: BTreeSet<&NGram> = models.iter().flat_map(|m| m.counts.keys()).collect();
        VocabularyIndex { size: types.len() as u64 }
    }

    pub fn size(&self) -> u64 {
        self.size
    }
}

/// Add-one smoothed probability `(C(g) + 1) / (N + B)`.
pub fn laplace_prob(model: &NGramModel, gram: &NGram, vocab_size: u64) -> f64 {
    debug_assert!(vocab_size >= 1);
    (model.count(gram) + 1) as f64 / (model.total() + vocab_size) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mode: RepresentationMode,
    pub order: NGramOrder,
    pub smoothing: Smoothing,
    pub prior: PriorMode,
}

impl TrainConfig {
    pub fn new(mode: RepresentationMode, order: NGramOrder) -> Self {
        TrainConfig { mode, order, smoothing: Smoothing::Laplace, prior: PriorMode::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ClassEntry {
    model: NGramModel,
    prior: f64,
}

/// A trained Likelihood Estimation classifier.
///
/// Classes are kept sorted by label. The model is immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    mode: RepresentationMode,
    order: NGramOrder,
    smoothing: Smoothing,
    vocab: VocabularyIndex,
    classes: Vec<ClassEntry>,
}

/// Trains one model per class from `(class label, instance n-grams)` pairs.
///
/// ```
/// use transvar::model::{train, TrainConfig};
/// use transvar::representation::{NGram, NGramOrder, RepresentationMode};
///
/// let g = |s: &str| NGram::parse(s).unwrap();
/// let human = vec![g("ART NN"), g("NN VVFIN")];
/// let machine = vec![g("PPOSAT NN")];
/// let config = TrainConfig::new(RepresentationMode::Pos, NGramOrder::BIGRAM);
/// let model = train([("HUMAN", &human[..]), ("MACHINE", &machine[..])], &config).unwrap();
/// assert_eq!(model.vocab().size(), 3);
/// assert_eq!(model.classify(&[g("ART NN")]).unwrap(), "HUMAN");
/// ```
pub fn train<'a, I>(instances: I, config: &TrainConfig) -> Result<ClassifierModel, ModelError>
where
    I: IntoIterator<Item = (&'a str, &'a [NGram])>,
{
    let mut models: BTreeMap<&str, (NGramModel, u64)> = BTreeMap::new();
    for (label, grams) in instances {
        let (model, seen) = models.entry(label).or_insert_with(|| (NGramModel::new(label, config.order), 0));
        *seen += 1;
        for g in grams {
            model.add(g)?;
        }
    }
    let seen: Vec<u64> = models.values().map(|(_, n)| *n).collect();
    let models: Vec<NGramModel> = models.into_values().map(|(m, _)| m).collect();
    let priors = match config.prior {
        PriorMode::Uniform => None,
        PriorMode::Empirical => {
            let total: u64 = seen.iter().sum();
            Some(seen.iter().map(|&n| n as f64 / total as f64).collect())
        }
    };
    ClassifierModel::from_models(config.mode, config.order, config.smoothing, models, priors)
}

impl ClassifierModel {
    /// Assembles a classifier from per-class models. `priors`, when given, are
    /// aligned with `models`; otherwise they are uniform.
    pub fn from_models(
        mode: RepresentationMode,
        order: NGramOrder,
        smoothing: Smoothing,
        models: Vec<NGramModel>,
        priors: Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        if models.len() < 2 {
            return Err(ModelError::MinClasses { found: models.len() });
        }
        if smoothing == Smoothing::None && order.get() != 1 {
            return Err(ModelError::UnsmoothedOrder { order: order.get() });
        }
        let k = models.len();
        let priors = priors.unwrap_or_else(|| vec![1.0 / k as f64; k]);
        if priors.len() != k {
            return Err(ModelError::InvalidPriors(format!("{} priors for {k} classes", priors.len())));
        }
        if priors.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(ModelError::InvalidPriors("priors must be finite and strictly positive".into()));
        }
        let sum: f64 = priors.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::InvalidPriors(format!("priors sum to {sum}")));
        }

        let mut classes: Vec<ClassEntry> =
            models.into_iter().zip(priors).map(|(model, prior)| ClassEntry { model, prior }).collect();
        classes.sort_by(|a, b| a.model.class_label.cmp(&b.model.class_label));
        for pair in classes.windows(2) {
            if pair[0].model.class_label == pair[1].model.class_label {
                return Err(ModelError::DuplicateClass { label: pair[0].model.class_label.clone() });
            }
        }
        for c in &classes {
            let label = &c.model.class_label;
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(ModelError::InvalidLabel { label: label.clone() });
            }
            if c.model.order != order {
                return Err(ModelError::OrderMismatch {
                    gram: format!("<model {label}>"),
                    found: c.model.order.get(),
                    expected: order.get(),
                });
            }
            if c.model.total == 0 {
                return Err(ModelError::EmptyClass { label: label.clone() });
            }
        }
        let models: Vec<NGramModel> = classes.iter().map(|c| c.model.clone()).collect();
        let vocab = VocabularyIndex::from_models(&models);
        Ok(ClassifierModel { mode, order, smoothing, vocab, classes })
    }

    pub fn mode(&self) -> RepresentationMode {
        self.mode
    }

    pub fn order(&self) -> NGramOrder {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn vocab(&self) -> VocabularyIndex {
        self.vocab
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.model.class_label.as_str())
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn models(&self) -> impl Iterator<Item = &NGramModel> {
        self.classes.iter().map(|c| &c.model)
    }

    pub fn model(&self, label: &str) -> Option<&NGramModel> {
        self.classes.iter().find(|c| c.model.class_label == label).map(|c| &c.model)
    }

    pub fn prior(&self, label: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.model.class_label == label).map(|c| c.prior)
    }

    /// Per-gram log-probability under a class, or `None` when the gram is
    /// skipped (unseen in the unsmoothed regime).
    fn log_prob(&self, model: &NGramModel, gram: &NGram) -> Option<f64> {
        match self.smoothing {
            Smoothing::Laplace => Some(laplace_prob(model, gram, self.vocab.size).ln()),
            Smoothing::None => {
                let c = model.count(gram);
                (c > 0).then(|| (c as f64 / model.total as f64).ln())
            }
        }
    }

    /// Log-score for every class, in label order.
    pub fn score(&self, features: &[NGram]) -> Result<Vec<(&str, f64)>, ModelError> {
        if features.is_empty() {
            return Err(ModelError::EmptyInstance);
        }
        Ok(self
            .classes
            .iter()
            .map(|c| {
                let likelihood: f64 = features.iter().filter_map(|g| self.log_prob(&c.model, g)).sum();
                (c.model.class_label.as_str(), likelihood + c.prior.ln())
            })
            .collect())
    }

    /// The highest-scoring label; ties go to the smallest label.
    pub fn classify(&self, features: &[NGram]) -> Result<&str, ModelError> {
        let scores = self.score(features)?;
        let mut best = scores[0];
        for &(label, s) in &scores[1..] {
            if s > best.1 {
                best = (label, s);
            }
        }
        Ok(best.0)
    }

    /// Writes the line-oriented model format, closed by a CRC-64 checksum line.
    pub fn save<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut body = String::new();
        body.push_str(&format!(
            "{MODEL_MAGIC} v{MODEL_FORMAT_VERSION} mode={} n={} smoothing={} B={}\n",
            self.mode, self.order, self.smoothing, self.vocab.size
        ));
        for c in &self.classes {
            body.push_str(&format!("#class {} total={} prior={}\n", c.model.class_label, c.model.total, c.prior));
            for (g, count) in c.model.sorted_counts() {
                body.push_str(&format!("{count}\t{g}\n"));
            }
        }
        let sum = CHECKSUM.checksum(body.as_bytes());
        out.write_all(body.as_bytes())?;
        writeln!(out, "#checksum {sum:016x}")?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let text = String::from_utf8(bytes).map_err(|_| corrupt("not valid UTF-8"))?;
        parse_model(&text)
    }
}

pub fn save_model<W: Write>(model: &ClassifierModel, out: W) -> io::Result<()> {
    model.save(out)
}

pub fn load_model<R: Read>(input: R) -> Result<ClassifierModel, ModelError> {
    ClassifierModel::load(input)
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptModel(msg.into())
}

fn header_fields<'a>(line: &'a str, expected: &[&str]) -> Result<Vec<&'a str>, ModelError> {
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != expected.len() {
        return Err(corrupt(format!("bad header line `{line}`")));
    }
    fields
        .iter()
        .zip(expected)
        .map(|(f, key)| {
            f.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| corrupt(format!("expected `{key}=` in `{line}`")))
        })
        .collect()
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> Result<T, ModelError> {
    s.parse().map_err(|_| corrupt(format!("bad {what} `{s}`")))
}

fn parse_model(text: &str) -> Result<ClassifierModel, ModelError> {
    let first = text.lines().next().ok_or_else(|| corrupt("empty file"))?;
    let rest = first
        .strip_prefix(MODEL_MAGIC)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| corrupt("missing model header"))?;
    let (version, header) = rest.split_once(' ').unwrap_or((rest, ""));
    if version != format!("v{MODEL_FORMAT_VERSION}") {
        return Err(ModelError::VersionMismatch { found: version.to_string() });
    }

    let trimmed = text.strip_suffix('\n').ok_or_else(|| corrupt("truncated: missing final newline"))?;
    let split = trimmed.rfind('\n').ok_or_else(|| corrupt("truncated: no checksum line"))?;
    let (body, last) = (&text[..=split], &trimmed[split + 1..]);
    let stored = last.strip_prefix("#checksum ").ok_or_else(|| corrupt("truncated: last line is not a checksum"))?;
    let stored = u64::from_str_radix(stored, 16).map_err(|_| corrupt("unreadable checksum"))?;
    if stored != CHECKSUM.checksum(body.as_bytes()) {
        return Err(corrupt("checksum mismatch"));
    }

    let h = header_fields(header, &["mode", "n", "smoothing", "B"])?;
    let mode: RepresentationMode = h[0].parse().map_err(|_| corrupt(format!("bad mode `{}`", h[0])))?;
    let order = NGramOrder::new(parse_num(h[1], "order")?).map_err(|e| corrupt(e.to_string()))?;
    let smoothing: Smoothing = h[2].parse().map_err(corrupt)?;
    let b: u64 = parse_num(h[3], "vocabulary size")?;

    let mut models = Vec::new();
    let mut priors = Vec::new();
    let mut declared_totals = Vec::new();
    for line in body.lines().skip(1) {
        if let Some(rest) = line.strip_prefix("#class ") {
            let (label, fields) = rest.split_once(' ').ok_or_else(|| corrupt(format!("bad class line `{line}`")))?;
            let f = header_fields(fields, &["total", "prior"])?;
            declared_totals.push(parse_num::<u64>(f[0], "total")?);
            priors.push(parse_num::<f64>(f[1], "prior")?);
            models.push(NGramModel::new(label, order));
        } else {
            let model = models.last_mut().ok_or_else(|| corrupt("count line before any class"))?;
            let (count, gram) = line.split_once('\t').ok_or_else(|| corrupt(format!("bad count line `{line}`")))?;
            let count: u64 = parse_num(count, "count")?;
            if count == 0 {
                return Err(corrupt("zero count"));
            }
            let gram = NGram::parse(gram).map_err(|e| corrupt(e.to_string()))?;
            if model.counts.contains_key(&gram) {
                return Err(corrupt(format!("duplicate n-gram `{gram}`")));
            }
            model.add_count(&gram, count).map_err(|e| corrupt(e.to_string()))?;
        }
    }
    for (m, &declared) in models.iter().zip(&declared_totals) {
        if m.total != declared {
            return Err(corrupt(format!(
                "class `{}` declares total {declared}, counts sum to {}",
                m.class_label, m.total
            )));
        }
    }
    let cm = ClassifierModel::from_models(mode, order, smoothing, models, Some(priors))
        .map_err(|e| corrupt(e.to_string()))?;
    if cm.vocab.size != b {
        return Err(corrupt(format!("declared B={b}, counts give {}", cm.vocab.size)));
    }
    Ok(cm)
}
