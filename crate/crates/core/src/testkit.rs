//! Seeded synthetic corpora from first-order Markov chains over POS tags.
//!
//! Each generator class is a chain (initial distribution plus transition
//! matrix over a tag alphabet) bound to one genre and one method label.
//! Sentences have a length drawn uniformly from `[min, max]`; token forms are
//! `w_<tag>_<k>` with `k` drawn from a small lexicon so that the surface
//! representations carry signal too.
//!
//! Randomness comes from ChaCha8 only. Document `i` (counting over all
//! classes) uses stream `i` of the generator seeded with the spec's seed, so
//! documents can be produced in any order, or in parallel, with identical
//! output.
//!
//! Spec files are tab-separated, one directive per line (tabs shown as spaces):
//!
//! ```text
//! ## comment
//! length    12    24
//! documents    600
//! sentences    1
//! seed    7
//! class    FIC    PT1
//! tags    ART    NN    VVFIN
//! initial    0.5    0.3    0.2
//! row    ART    0.1    0.8    0.1
//! row    NN    0.2    0.1    0.7
//! row    VVFIN    0.6    0.2    0.2
//! ```
//!
//! `tags`, `initial` and one `row` per tag follow each `class` line.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{write_vertical, CorpusError, Document, GenreLabel, MethodLabel, TaggedSentence, Token};

/// Name recorded in generated corpora.
pub const GENERATOR_NAME: &str = "chacha8";

/// Distinct surface forms per tag.
pub const LEXICON_SIZE: u32 = 4;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("spec line {line}: {reason}")]
    SpecSyntax { line: usize, reason: String },
    #[error("class {class}: chain has no unique stationary distribution")]
    NonErgodicChain { class: usize },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassChain {
    pub genre: GenreLabel,
    pub method: MethodLabel,
    pub tags: Vec<String>,
    pub initial: Vec<f64>,
    /// Row-stochastic, `transitions[i][j] = P(tags[j] | tags[i])`.
    pub transitions: Vec<Vec<f64>>,
}

impl ClassChain {
    pub fn label(&self) -> String {
        format!("{}-{}", self.genre, self.method)
    }

    fn validate(&self, idx: usize) -> Result<(), SynthError> {
        let bad = |msg: String| SynthError::InvalidSpec(format!("class {idx} ({}): {msg}", self.label()));
        let k = self.tags.len();
        if k == 0 {
            return Err(bad("empty tag alphabet".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.tags {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(bad(format!("invalid tag {t:?}")));
            }
            if !seen.insert(t) {
                return Err(bad(format!("duplicate tag {t}")));
            }
        }
        let check_dist = |name: &str, v: &[f64]| -> Result<(), SynthError> {
            if v.len() != k {
                return Err(bad(format!("{name} has {} entries for {k} tags", v.len())));
            }
            if v.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(bad(format!("{name} has a negative or non-finite entry")));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(bad(format!("{name} sums to {sum}")));
            }
            Ok(())
        };
        check_dist("initial distribution", &self.initial)?;
        if self.transitions.len() != k {
            return Err(bad(format!("{} transition rows for {k} tags", self.transitions.len())));
        }
        for (t, row) in self.tags.iter().zip(&self.transitions) {
            check_dist(&format!("row {t}"), row)?;
        }
        Ok(())
    }

    /// Unique stationary distribution, if there is one.
    pub fn stationary(&self) -> Option<Vec<f64>> {
        let k = self.tags.len();
        let t = DMatrix::from_fn(k, k, |i, j| self.transitions[i][j]);
        let a = t.transpose() - DMatrix::<f64>::identity(k, k);
        if a.clone().svd(false, false).rank(1e-10) != k - 1 {
            return None;
        }
        let mut system = DMatrix::<f64>::zeros(k + 1, k);
        system.view_mut((0, 0), (k, k)).copy_from(&a);
        system.row_mut(k).fill(1.0);
        let mut rhs = DVector::<f64>::zeros(k + 1);
        rhs[k] = 1.0;
        let pi = system.svd(true, true).solve(&rhs, 1e-14).ok()?;
        let clipped: Vec<f64> = pi.iter().map(|p| p.max(0.0)).collect();
        let sum: f64 = clipped.iter().sum();
        Some(clipped.iter().map(|p| p / sum).collect())
    }

    /// Stationary bigram distribution `pi(a) * T(a, b)`, keyed by tag pair.
    pub fn bigram_distribution(&self) -> Option<HashMap<(String, String), f64>> {
        let pi = self.stationary()?;
        let mut out = HashMap::new();
        for (i, a) in self.tags.iter().enumerate() {
            for (j, b) in self.tags.iter().enumerate() {
                let p = pi[i] * self.transitions[i][j];
                if p > 0.0 {
                    out.insert((a.clone(), b.clone()), p);
                }
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub classes: Vec<ClassChain>,
    pub min_len: usize,
    pub max_len: usize,
    pub docs_per_class: usize,
    pub sentences_per_doc: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.classes.is_empty() {
            return Err(SynthError::InvalidSpec("no classes".into()));
        }
        if self.min_len == 0 || self.max_len < self.min_len {
            return Err(SynthError::InvalidSpec(format!(
                "sentence lengths [{}, {}] must satisfy 1 <= min <= max",
                self.min_len, self.max_len
            )));
        }
        if self.sentences_per_doc == 0 {
            return Err(SynthError::InvalidSpec("sentences per document must be at least 1".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            c.validate(i)?;
        }
        Ok(())
    }

    pub fn document_count(&self) -> usize {
        self.classes.len() * self.docs_per_class
    }

    /// Parses the tab-separated spec format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut spec = GeneratorSpec {
            classes: Vec::new(),
            min_len: 12,
            max_len: 24,
            docs_per_class: 0,
            sentences_per_doc: 1,
            seed: 0,
        };
        let mut rows: Vec<HashMap<String, Vec<f64>>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |reason: String| SynthError::SpecSyntax { line, reason };
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() || raw.starts_with("##") {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let args = &fields[1..];
            let int = |s: &str| s.parse::<u64>().map_err(|_| err(format!("`{s}` is not a non-negative integer")));
            let prob = |s: &str| s.parse::<f64>().map_err(|_| err(format!("`{s}` is not a number")));
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("`{}` takes {n} value(s), found {}", fields[0], args.len())))
                }
            };
            let current = |classes: &mut Vec<ClassChain>| -> Result<usize, SynthError> {
                if classes.is_empty() {
                    Err(err(format!("`{}` before any `class` line", fields[0])))
                } else {
                    Ok(classes.len() - 1)
                }
            };
            match fields[0] {
                "length" => {
                    arity(2)?;
                    spec.min_len = int(args[0])? as usize;
                    spec.max_len = int(args[1])? as usize;
                }
                "documents" => {
                    arity(1)?;
                    spec.docs_per_class = int(args[0])? as usize;
                }
                "sentences" => {
                    arity(1)?;
                    spec.sentences_per_doc = int(args[0])? as usize;
                }
                "seed" => {
                    arity(1)?;
                    spec.seed = int(args[0])?;
                }
                "class" => {
                    arity(2)?;
                    let genre = args[0].parse::<GenreLabel>().map_err(|e| err(e.to_string()))?;
                    let method = args[1].parse::<MethodLabel>().map_err(|e| err(e.to_string()))?;
                    spec.classes.push(ClassChain {
                        genre,
                        method,
                        tags: Vec::new(),
                        initial: Vec::new(),
                        transitions: Vec::new(),
                    });
                    rows.push(HashMap::new());
                }
                "tags" => {
                    let c = current(&mut spec.classes)?;
                    spec.classes[c].tags = args.iter().map(|s| s.to_string()).collect();
                }
                "initial" => {
                    let c = current(&mut spec.classes)?;
                    spec.classes[c].initial = args.iter().map(|s| prob(s)).collect::<Result<_, _>>()?;
                }
                "row" => {
                    let c = current(&mut spec.classes)?;
                    let (tag, probs) = args.split_first().ok_or_else(|| err("`row` needs a tag".into()))?;
                    let probs = probs.iter().map(|s| prob(s)).collect::<Result<_, _>>()?;
                    if rows[c].insert(tag.to_string(), probs).is_some() {
                        return Err(err(format!("duplicate row for tag {tag}")));
                    }
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        for (c, mut by_tag) in spec.classes.iter_mut().zip(rows) {
            let mut transitions = Vec::with_capacity(c.tags.len());
            for t in &c.tags {
                let row = by_tag
                    .remove(t)
                    .ok_or_else(|| SynthError::InvalidSpec(format!("class {}: no row for tag {t}", c.label())))?;
                transitions.push(row);
            }
            if let Some(extra) = by_tag.keys().next() {
                return Err(SynthError::InvalidSpec(format!("class {}: row for undeclared tag {extra}", c.label())));
            }
            c.transitions = transitions;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Inverse of [`GeneratorSpec::parse`].
    pub fn render(&self) -> String {
        let mut out = format!(
            "length\t{}\t{}\ndocuments\t{}\nsentences\t{}\nseed\t{}\n",
            self.min_len, self.max_len, self.docs_per_class, self.sentences_per_doc, self.seed
        );
        let join = |v: &[f64]| v.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("\t");
        for c in &self.classes {
            out.push_str(&format!("class\t{}\t{}\n", c.genre, c.method));
            out.push_str(&format!("tags\t{}\n", c.tags.join("\t")));
            out.push_str(&format!("initial\t{}\n", join(&c.initial)));
            for (t, row) in c.tags.iter().zip(&c.transitions) {
                out.push_str(&format!("row\t{t}\t{}\n", join(row)));
            }
        }
        out
    }
}

fn sample(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn generate_document(spec: &GeneratorSpec, class_idx: usize, doc_idx: usize) -> Document {
    let chain = &spec.classes[class_idx];
    let global = class_idx * spec.docs_per_class + doc_idx;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(global as u64);
    let sentences = (0..spec.sentences_per_doc)
        .map(|_| {
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let mut state = sample(&mut rng, &chain.initial);
            let mut tokens = Vec::with_capacity(len);
            for pos in 0..len {
                if pos > 0 {
                    state = sample(&mut rng, &chain.transitions[state]);
                }
                let tag = &chain.tags[state];
                let k = rng.random_range(0..LEXICON_SIZE);
                let token = Token::new(format!("w_{tag}_{k}"), tag.clone(), format!("w_{tag}"))
                    .expect("synthetic tokens are well-formed");
                tokens.push(token);
            }
            TaggedSentence::new(tokens).expect("lengths are at least 1")
        })
        .collect();
    Document { id: format!("syn-c{class_idx}-{doc_idx:05}"), genre: chain.genre, method: chain.method, sentences }
}

fn document_indices(spec: &GeneratorSpec) -> Vec<(usize, usize)> {
    (0..spec.classes.len()).flat_map(|c| (0..spec.docs_per_class).map(move |d| (c, d))).collect()
}

/// All documents, class by class.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<Document>, SynthError> {
    spec.validate()?;
    Ok(document_indices(spec).into_iter().map(|(c, d)| generate_document(spec, c, d)).collect())
}

/// Same output as [`generate`], produced on the current rayon pool.
pub fn generate_parallel(spec: &GeneratorSpec) -> Result<Vec<Document>, SynthError> {
    spec.validate()?;
    Ok(document_indices(spec).into_par_iter().map(|(c, d)| generate_document(spec, c, d)).collect())
}

/// Writes a generated corpus with its provenance comment.
pub fn write_corpus<W: Write>(mut out: W, spec: &GeneratorSpec, docs: &[Document]) -> Result<(), SynthError> {
    writeln!(out, "## generator={GENERATOR_NAME} seed={}", spec.seed).map_err(CorpusError::from)?;
    write_vertical(out, docs)?;
    Ok(())
}

/// Symmetrized KL divergence between the stationary bigram distributions of
/// every pair of classes. Disjoint supports give `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub labels: Vec<String>,
    values: BTreeMap<(usize, usize), f64>,
}

impl SeparationReport {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values.iter().map(|(&(a, b), &v)| (a, b, v))
    }

    pub fn render(&self) -> String {
        let mut out = String::from("class_a\tclass_b\tsymmetric_kl\n");
        for (a, b, v) in self.iter() {
            let v = if v.is_finite() { format!("{v:.6}") } else { "inf".to_string() };
            out.push_str(&format!("{}\t{}\t{v}\n", self.labels[a], self.labels[b]));
        }
        out
    }
}

fn kl(p: &HashMap<(String, String), f64>, q: &HashMap<(String, String), f64>) -> f64 {
    let mut sum = 0.0;
    for (k, &pv) in p {
        match q.get(k) {
            Some(&qv) => sum += pv * (pv / qv).ln(),
            None => return f64::INFINITY,
        }
    }
    sum.max(0.0)
}

pub fn separation(spec: &GeneratorSpec) -> Result<SeparationReport, SynthError> {
    spec.validate()?;
    let dists = spec
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| c.bigram_distribution().ok_or(SynthError::NonErgodicChain { class: i }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut values = BTreeMap::new();
    for i in 0..dists.len() {
        for j in i + 1..dists.len() {
            values.insert((i, j), kl(&dists[i], &dists[j]) + kl(&dists[j], &dists[i]));
        }
    }
    Ok(SeparationReport { labels: spec.classes.iter().map(ClassChain::label).collect(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(genre: GenreLabel, tags: &[&str], rows: &[&[f64]]) -> ClassChain {
        let k = tags.len();
        ClassChain {
            genre,
            method: MethodLabel::PT1,
            tags: tags.iter().map(|s| s.to_string()).collect(),
            initial: vec![1.0 / k as f64; k],
            transitions: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    fn spec(classes: Vec<ClassChain>, docs: usize) -> GeneratorSpec {
        GeneratorSpec { classes, min_len: 5, max_len: 9, docs_per_class: docs, sentences_per_doc: 2, seed: 11 }
    }

    fn flip(a: f64) -> [[f64; 2]; 2] {
        [[a, 1.0 - a], [1.0 - a, a]]
    }

    fn two_tag(genre: GenreLabel, a: f64) -> ClassChain {
        let m = flip(a);
        chain(genre, &["A", "B"], &[&m[0], &m[1]])
    }

    #[test]
    fn deterministic_and_parallel_equal() {
        let s = spec(vec![two_tag(GenreLabel::FIC, 0.9), two_tag(GenreLabel::TOU, 0.2)], 30);
        let a = generate(&s).unwrap();
        assert_eq!(a, generate(&s).unwrap());
        assert_eq!(a, generate_parallel(&s).unwrap());
        let mut other = s.clone();
        other.seed = 12;
        assert_ne!(a, generate(&other).unwrap());
        let mut buf1 = Vec::new();
        let mut buf2 = Vec::new();
        write_corpus(&mut buf1, &s, &a).unwrap();
        write_corpus(&mut buf2, &s, &generate(&s).unwrap()).unwrap();
        assert_eq!(buf1, buf2);
        assert!(String::from_utf8(buf1).unwrap().starts_with("## generator=chacha8 seed=11\n#doc id=syn-c0-00000 "));
    }

    #[test]
    fn deterministic_chain_cycles() {
        let mut c = chain(GenreLabel::INS, &["A", "B", "C"], &[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        c.initial = vec![1.0, 0.0, 0.0];
        let docs = generate(&spec(vec![c], 5)).unwrap();
        for d in &docs {
            for s in &d.sentences {
                for (i, t) in s.tokens().iter().enumerate() {
                    assert_eq!(t.pos, ["A", "B", "C"][i % 3]);
                    assert!(t.form.starts_with(&format!("w_{}_", t.pos)));
                }
            }
        }
    }

    #[test]
    fn document_counts_and_lengths() {
        let mut s = spec(vec![two_tag(GenreLabel::FIC, 0.5), two_tag(GenreLabel::ESS, 0.5)], 600);
        s.sentences_per_doc = 1;
        let docs = generate(&s).unwrap();
        assert_eq!(docs.len(), 1200);
        assert!(docs.iter().flat_map(|d| &d.sentences).all(|x| (5..=9).contains(&x.len())));
        assert_eq!(docs[600].genre, GenreLabel::ESS);
    }

    #[test]
    fn invalid_specs() {
        let mut c = two_tag(GenreLabel::FIC, 0.5);
        c.transitions[0] = vec![0.5, 0.6];
        assert!(matches!(generate(&spec(vec![c], 1)), Err(SynthError::InvalidSpec(_))));
        let empty = chain(GenreLabel::FIC, &[], &[]);
        assert!(matches!(generate(&spec(vec![empty], 1)), Err(SynthError::InvalidSpec(_))));
        let mut s = spec(vec![two_tag(GenreLabel::FIC, 0.5)], 1);
        s.min_len = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn separation_hand_cases() {
        let s =
            spec(vec![two_tag(GenreLabel::FIC, 0.9), two_tag(GenreLabel::TOU, 0.1), two_tag(GenreLabel::POP, 0.9)], 1);
        let r = separation(&s).unwrap();
        // stationary (1/2, 1/2) for both; bigram masses 0.45/0.05 swap
        let expected = 1.6 * 9f64.ln();
        assert!((r.get(0, 1).unwrap() - expected).abs() < 1e-9);
        assert_eq!(r.get(1, 0), r.get(0, 1));
        assert!(r.get(0, 2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn disjoint_alphabets_are_infinite() {
        let a = chain(GenreLabel::FIC, &["A", "B"], &[&[0.5, 0.5], &[0.5, 0.5]]);
        let b = chain(GenreLabel::TOU, &["C", "D"], &[&[0.5, 0.5], &[0.5, 0.5]]);
        let r = separation(&spec(vec![a, b], 1)).unwrap();
        assert_eq!(r.get(0, 1), Some(f64::INFINITY));
        assert!(r.render().ends_with("FIC-PT1\tTOU-PT1\tinf\n"));
    }

    #[test]
    fn reducible_chain_rejected() {
        let c = chain(GenreLabel::FIC, &["A", "B"], &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = two_tag(GenreLabel::TOU, 0.5);
        assert!(matches!(separation(&spec(vec![c, d], 1)), Err(SynthError::NonErgodicChain { class: 0 })));
    }

    #[test]
    fn stationary_of_asymmetric_chain() {
        // pi = (b, a) / (a + b) for rows (1-a, a), (b, 1-b)
        let c = chain(GenreLabel::FIC, &["A", "B"], &[&[0.7, 0.3], &[0.1, 0.9]]);
        let pi = c.stationary().unwrap();
        assert!((pi[0] - 0.25).abs() < 1e-12 && (pi[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empirical_bigrams_match_analytic() {
        let mut c = chain(GenreLabel::SPE, &["A", "B", "C"], &[&[0.2, 0.5, 0.3], &[0.6, 0.1, 0.3], &[0.3, 0.3, 0.4]]);
        c.initial = c.stationary().unwrap();
        let expected = c.bigram_distribution().unwrap();
        let mut s = spec(vec![c], 2000);
        s.min_len = 40;
        s.max_len = 60;
        s.sentences_per_doc = 1;
        let docs = generate(&s).unwrap();
        let mut counts: HashMap<(String, String), f64> = HashMap::new();
        let mut total = 0.0;
        let mut tokens = 0;
        for sent in docs.iter().flat_map(|d| &d.sentences) {
            tokens += sent.len();
            for w in sent.tokens().windows(2) {
                *counts.entry((w[0].pos.clone(), w[1].pos.clone())).or_default() += 1.0;
                total += 1.0;
            }
        }
        assert!(tokens >= 100_000);
        let tv: f64 =
            expected.iter().map(|(k, p)| (p - counts.get(k).copied().unwrap_or(0.0) / total).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn spec_file_round_trip() {
        let text = "## demo\nlength\t3\t4\ndocuments\t2\nsentences\t1\nseed\t9\nclass\tFIC\tPT2\ntags\tA\tB\ninitial\t0.5\t0.5\nrow\tB\t0.3\t0.7\nrow\tA\t1\t0\n";
        let s = GeneratorSpec::parse(text).unwrap();
        assert_eq!(s.classes[0].transitions, vec![vec![1.0, 0.0], vec![0.3, 0.7]]);
        assert_eq!(s.seed, 9);
        assert_eq!(GeneratorSpec::parse(&s.render()).unwrap(), s);
        for bad in
            ["tags\tA\n", "length\t3\n", "class\tFIC\tPT2\ntags\tA\ninitial\t1\n", "class\tXXX\tPT2\n", "bogus\t1\n"]
        {
            assert!(GeneratorSpec::parse(bad).is_err(), "{bad:?}");
        }
    }
}
