//! Experiment protocols and metrics.
//!
//! Two designs are supported: a single split over one label dimension
//! (human vs machine uses 400 train / 200 test per class) and the all-pairs
//! binary genre table (300 / 200 per genre, one cell per unordered pair).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{GenreLabel, LabeledInstance};
use crate::model::{train, ClassifierModel, ModelError, PriorMode, Smoothing, TrainConfig};
use crate::representation::{featurize_instance, NGram, NGramOrder, RepresentationMode};

pub const DEFAULT_SEED: u64 = 42;

/// Accuracy of a coin flip between two balanced classes.
pub const BINARY_BASELINE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid split: train and test counts must both be at least 1 (got {train}/{test})")]
    InvalidSplit { train: usize, test: usize },
    #[error("class `{class}` has {available} usable instances, {required} required")]
    InsufficientData { class: String, available: usize, required: usize },
    #[error("model was trained on {model_mode} {model_order}-grams, evaluation requested {mode} {order}-grams")]
    ModeMismatch {
        model_mode: RepresentationMode,
        model_order: NGramOrder,
        mode: RepresentationMode,
        order: NGramOrder,
    },
    #[error("test label `{0}` is not a class of the model")]
    UnknownClass(String),
    #[error("pair {a}-{b}: {source}")]
    Pair {
        a: String,
        b: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("cross-validation needs at least 2 folds, got {0}")]
    InvalidFolds(usize),
    #[error("cannot start worker pool: {0}")]
    Workers(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which label of an instance is the classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelDimension {
    #[default]
    Genre,
    MethodFine,
    MethodCoarse,
}

impl LabelDimension {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelDimension::Genre => "genre",
            LabelDimension::MethodFine => "method-fine",
            LabelDimension::MethodCoarse => "method-coarse",
        }
    }

    pub fn label(self, inst: &LabeledInstance) -> &'static str {
        match self {
            LabelDimension::Genre => inst.genre.as_str(),
            LabelDimension::MethodFine => inst.method.as_str(),
            LabelDimension::MethodCoarse => inst.method.coarse().as_str(),
        }
    }

    /// Sub-population balanced within each class when sampling: the source
    /// method for merged human/machine classes, nothing otherwise.
    pub fn stratum(self, inst: &LabeledInstance) -> &'static str {
        match self {
            LabelDimension::MethodCoarse => inst.method.as_str(),
            _ => "",
        }
    }

    /// Per-class (train, test) sizes of the reference protocols.
    pub fn default_split(self) -> (usize, usize) {
        match self {
            LabelDimension::Genre => (300, 200),
            LabelDimension::MethodFine | LabelDimension::MethodCoarse => (400, 200),
        }
    }
}

impl fmt::Display for LabelDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelDimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "genre" => Ok(LabelDimension::Genre),
            "method-fine" => Ok(LabelDimension::MethodFine),
            "method-coarse" => Ok(LabelDimension::MethodCoarse),
            _ => Err(format!("unknown dimension `{s}` (expected genre, method-fine or method-coarse)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(per_class_train: usize, per_class_test: usize, seed: u64) -> Result<Self, EvalError> {
        if per_class_train == 0 || per_class_test == 0 {
            return Err(EvalError::InvalidSplit { train: per_class_train, test: per_class_test });
        }
        Ok(SplitSpec { per_class_train, per_class_test, seed })
    }

    pub fn per_class(&self) -> usize {
        self.per_class_train + self.per_class_test
    }
}

/// Disjoint train and test samples, per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: BTreeMap<String, Vec<T>>,
    pub test: BTreeMap<String, Vec<T>>,
}

/// Seeded shuffle-then-prefix split of each class pool.
pub fn make_split<T: Clone>(pools: &BTreeMap<String, Vec<T>>, spec: &SplitSpec) -> Result<Split<T>, EvalError> {
    make_stratified_split(pools, spec, |_| "")
}

/// Like [`make_split`], but within a class the sample is spread as evenly as
/// pool sizes allow over the strata returned by `stratum`.
pub fn make_stratified_split<T, F>(
    pools: &BTreeMap<String, Vec<T>>,
    spec: &SplitSpec,
    stratum: F,
) -> Result<Split<T>, EvalError>
where
    T: Clone,
    F: Fn(&T) -> &str,
{
    let need = spec.per_class();
    for (class, pool) in pools {
        if pool.len() < need {
            return Err(EvalError::InsufficientData { class: class.clone(), available: pool.len(), required: need });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split { train: BTreeMap::new(), test: BTreeMap::new() };
    for (class, pool) in pools {
        let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, item) in pool.iter().enumerate() {
            strata.entry(stratum(item)).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = strata.into_values().collect();
        for g in &mut groups {
            g.shuffle(&mut rng);
        }
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        let quotas = water_fill(&sizes, need);
        let mut chosen: Vec<usize> = groups.iter().zip(&quotas).flat_map(|(g, &q)| g[..q].iter().copied()).collect();
        chosen.shuffle(&mut rng);
        let (train, test) = chosen.split_at(spec.per_class_train);
        split.train.insert(class.clone(), train.iter().map(|&i| pool[i].clone()).collect());
        split.test.insert(class.clone(), test.iter().map(|&i| pool[i].clone()).collect());
    }
    Ok(split)
}

/// Distributes `need` items over groups with the given capacities as evenly
/// as possible; leftovers go to the earliest groups. Requires `need <= Σ caps`.
fn water_fill(caps: &[usize], need: usize) -> Vec<usize> {
    let mut quota = vec![0; caps.len()];
    let mut remaining = need;
    let mut open: Vec<usize> = (0..caps.len()).filter(|&i| caps[i] > 0).collect();
    while remaining > 0 && !open.is_empty() {
        let share = remaining / open.len();
        if share == 0 {
            for &i in open.iter().take(remaining) {
                quota[i] += 1;
            }
            break;
        }
        for &i in &open {
            let add = share.min(caps[i] - quota[i]);
            quota[i] += add;
            remaining -= add;
        }
        open.retain(|&i| quota[i] < caps[i]);
    }
    quota
}

/// `cells[i][j]`: instances of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    cells: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix { classes, cells: vec![vec![0; k]; k] }
    }

    /// # Panics
    ///
    /// If `cells` is not square with one row per class.
    pub fn from_cells(classes: Vec<String>, cells: Vec<Vec<u64>>) -> Self {
        assert!(cells.len() == classes.len() && cells.iter().all(|r| r.len() == classes.len()));
        ConfusionMatrix { classes, cells }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn cells(&self) -> &[Vec<u64>] {
        &self.cells
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.cells[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.cells[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.cells[i].iter().sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.cells.iter().map(|r| r[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Unweighted mean of the per-class F1 values.
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl MetricsReport {
    /// Harmonic mean of macro precision and macro recall.
    pub fn f_of_macro(&self) -> f64 {
        harmonic(self.macro_precision, self.macro_recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn metrics(cmx: &ConfusionMatrix) -> MetricsReport {
    let per_class: Vec<ClassMetrics> = cmx
        .classes
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let tp = cmx.cells[i][i];
            let precision = ratio(tp, cmx.column_sum(i));
            let recall = ratio(tp, cmx.row_sum(i));
            ClassMetrics {
                label: label.clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: cmx.row_sum(i),
            }
        })
        .collect();
    let k = per_class.len().max(1) as f64;
    MetricsReport {
        macro_precision: per_class.iter().map(|c| c.precision).sum::<f64>() / k,
        macro_recall: per_class.iter().map(|c| c.recall).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / k,
        accuracy: ratio(cmx.correct(), cmx.total()),
        per_class,
    }
}

/// Classifies each `(true label, instance)` once and tallies the results.
pub fn evaluate<'a, I>(
    cm: &ClassifierModel,
    test: I,
    mode: RepresentationMode,
    order: NGramOrder,
) -> Result<ConfusionMatrix, EvalError>
where
    I: IntoIterator<Item = (&'a str, &'a LabeledInstance)>,
{
    if cm.mode() != mode || cm.order() != order {
        return Err(EvalError::ModeMismatch { model_mode: cm.mode(), model_order: cm.order(), mode, order });
    }
    let mut cmx = ConfusionMatrix::new(cm.labels().map(str::to_string).collect());
    for (truth, inst) in test {
        let t = cmx.index_of(truth).ok_or_else(|| EvalError::UnknownClass(truth.to_string()))?;
        let predicted = cm.classify(&featurize_instance(inst, mode, order))?;
        let p = cmx.index_of(predicted).expect("prediction is a model class");
        cmx.record(t, p);
    }
    Ok(cmx)
}

/// Everything that defines one train/test experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub dim: LabelDimension,
    pub mode: RepresentationMode,
    pub order: NGramOrder,
    pub smoothing: Smoothing,
    pub prior: PriorMode,
    pub split: SplitSpec,
}

impl ExperimentConfig {
    /// POS trigrams, Laplace smoothing, uniform priors and the dimension's
    /// reference split with the default seed.
    pub fn new(dim: LabelDimension) -> Self {
        let (train, test) = dim.default_split();
        ExperimentConfig {
            dim,
            mode: RepresentationMode::Pos,
            order: NGramOrder::TRIGRAM,
            smoothing: Smoothing::Laplace,
            prior: PriorMode::Uniform,
            split: SplitSpec::new(train, test, DEFAULT_SEED).expect("reference split is valid"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { mode: self.mode, order: self.order, smoothing: self.smoothing, prior: self.prior }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub model: ClassifierModel,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// Instances grouped by class label. Instances too short to yield a single
/// n-gram of the requested order are left out.
pub fn class_pools(
    instances: &[LabeledInstance],
    dim: LabelDimension,
    order: NGramOrder,
) -> BTreeMap<String, Vec<&LabeledInstance>> {
    let mut pools: BTreeMap<String, Vec<&LabeledInstance>> = BTreeMap::new();
    let mut short = 0usize;
    for inst in instances {
        if inst.tokens.len() < order.get() {
            short += 1;
            continue;
        }
        pools.entry(dim.label(inst).to_string()).or_default().push(inst);
    }
    if short > 0 {
        log::warn!("{short} instance(s) shorter than n={order} left out");
    }
    pools
}

/// Trains a classifier on every instance of every class in `samples`.
pub fn train_on(
    samples: &BTreeMap<String, Vec<&LabeledInstance>>,
    config: &TrainConfig,
) -> Result<ClassifierModel, ModelError> {
    let featurized: Vec<(&str, Vec<NGram>)> = samples
        .iter()
        .flat_map(|(class, insts)| {
            insts.iter().map(move |inst| (class.as_str(), featurize_instance(inst, config.mode, config.order)))
        })
        .collect();
    train(featurized.iter().map(|(c, g)| (*c, g.as_slice())), config)
}

fn run_on_pools(
    pools: &BTreeMap<String, Vec<&LabeledInstance>>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult, EvalError> {
    let dim = cfg.dim;
    let split = make_stratified_split(pools, &cfg.split, |inst| dim.stratum(inst))?;
    let model = train_on(&split.train, &cfg.train_config())?;
    let test = split.test.iter().flat_map(|(c, insts)| insts.iter().map(move |i| (c.as_str(), *i)));
    let matrix = evaluate(&model, test, cfg.mode, cfg.order)?;
    let metrics = metrics(&matrix);
    Ok(ExperimentResult { model, matrix, metrics })
}

/// Split, train and evaluate over all classes of `cfg.dim`.
pub fn run_experiment(instances: &[LabeledInstance], cfg: &ExperimentConfig) -> Result<ExperimentResult, EvalError> {
    run_on_pools(&class_pools(instances, cfg.dim, cfg.order), cfg)
}

/// k-fold cross-validation over the whole pool of each class. Fold `f` holds
/// every instance whose position in the seeded per-class shuffle is `f` mod k.
pub fn cross_validate(
    instances: &[LabeledInstance],
    cfg: &ExperimentConfig,
    folds: usize,
) -> Result<Vec<MetricsReport>, EvalError> {
    if folds < 2 {
        return Err(EvalError::InvalidFolds(folds));
    }
    let mut pools = class_pools(instances, cfg.dim, cfg.order);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.split.seed);
    for (class, pool) in pools.iter_mut() {
        if pool.len() < folds {
            return Err(EvalError::InsufficientData { class: class.clone(), available: pool.len(), required: folds });
        }
        pool.shuffle(&mut rng);
    }
    (0..folds)
        .map(|f| {
            let mut train_part = BTreeMap::new();
            let mut test = Vec::new();
            for (class, pool) in &pools {
                let (held, kept): (Vec<_>, Vec<_>) = pool.iter().enumerate().partition(|(i, _)| i % folds == f);
                train_part.insert(class.clone(), kept.into_iter().map(|(_, x)| *x).collect::<Vec<_>>());
                test.extend(held.into_iter().map(|(_, x)| (class.as_str(), *x)));
            }
            let model = train_on(&train_part, &cfg.train_config())?;
            Ok(metrics(&evaluate(&model, test, cfg.mode, cfg.order)?))
        })
        .collect()
}

/// One binary task of the all-pairs design.
#[derive(Debug, Clone)]
pub struct PairTask {
    pub a: String,
    pub b: String,
    pub result: ExperimentResult,
}

fn with_workers<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Workers(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs a binary experiment for every unordered pair of `labels` (in the
/// given order), on at most `jobs` worker threads. Results come back sorted
/// by pair regardless of completion order.
pub fn pairwise_experiments(
    instances: &[LabeledInstance],
    labels: &[String],
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<PairTask>, EvalError> {
    let pools = class_pools(instances, cfg.dim, cfg.order);
    let pairs: Vec<(usize, usize)> =
        (0..labels.len()).flat_map(|i| (i + 1..labels.len()).map(move |j| (i, j))).collect();
    let results: Vec<Result<PairTask, EvalError>> = with_workers(jobs, || {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (&labels[i], &labels[j]);
                let pair_err = |e: EvalError| EvalError::Pair { a: a.clone(), b: b.clone(), source: Box::new(e) };
                let mut sub = BTreeMap::new();
                for label in [a, b] {
                    sub.insert(label.clone(), pools.get(label).cloned().unwrap_or_default());
                }
                let result = run_on_pools(&sub, cfg).map_err(pair_err)?;
                Ok(PairTask { a: a.clone(), b: b.clone(), result })
            })
            .collect()
    })?;
    results.into_iter().collect()
}

/// The 21-cell genre table: every genre against every other.
pub fn pairwise_genres(
    instances: &[LabeledInstance],
    mode: RepresentationMode,
    order: NGramOrder,
    spec: SplitSpec,
    jobs: usize,
) -> Result<PairwiseTable, EvalError> {
    let cfg = ExperimentConfig { mode, order, split: spec, ..ExperimentConfig::new(LabelDimension::Genre) };
    let labels: Vec<String> = GenreLabel::ALL.iter().map(|g| g.to_string()).collect();
    let tasks = pairwise_experiments(instances, &labels, &cfg, jobs)?;
    Ok(PairwiseTable::from_tasks(labels, &tasks))
}

/// Correct / total test predictions for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairAccuracy {
    pub correct: u64,
    pub total: u64,
}

impl PairAccuracy {
    pub fn value(&self) -> f64 {
        ratio(self.correct, self.total)
    }

    /// Percentage with two decimals, rounded half-up on the exact fraction.
    pub fn percent(&self) -> String {
        if self.total == 0 {
            return "0.00%".to_string();
        }
        let hundredths = (self.correct as u128 * 20_000 + self.total as u128) / (2 * self.total as u128);
        format!("{}.{:02}%", hundredths / 100, hundredths % 100)
    }
}

/// Upper-triangular accuracy table over an ordered label set.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTable {
    labels: Vec<String>,
    cells: BTreeMap<(usize, usize), PairAccuracy>,
    pub baseline: f64,
}

/// Column alignment for [`PairwiseTable::render`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Render {
    #[default]
    Tsv,
    Table,
    Records,
}

impl FromStr for Render {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(Render::Tsv),
            "table" => Ok(Render::Table),
            "records" => Ok(Render::Records),
            _ => Err(format!("unknown render `{s}` (expected tsv, table or records)")),
        }
    }
}

impl PairwiseTable {
    pub fn new(labels: Vec<String>) -> Self {
        PairwiseTable { labels, cells: BTreeMap::new(), baseline: BINARY_BASELINE }
    }

    pub fn from_tasks(labels: Vec<String>, tasks: &[PairTask]) -> Self {
        let mut table = PairwiseTable::new(labels);
        for t in tasks {
            let m = &t.result.matrix;
            table.set(&t.a, &t.b, PairAccuracy { correct: m.correct(), total: m.total() });
        }
        table
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Stores the cell in upper-triangular orientation.
    ///
    /// # Panics
    ///
    /// If either label is unknown or `a == b`.
    pub fn set(&mut self, a: &str, b: &str, acc: PairAccuracy) {
        let (i, j) = self.key(a, b);
        self.cells.insert((i, j), acc);
    }

    fn key(&self, a: &str, b: &str) -> (usize, usize) {
        let pos = |l: &str| self.labels.iter().position(|x| x == l).unwrap_or_else(|| panic!("unknown label {l}"));
        let (i, j) = (pos(a), pos(b));
        assert_ne!(i, j, "a pair needs two distinct labels");
        (i.min(j), i.max(j))
    }

    pub fn get(&self, a: &str, b: &str) -> Option<PairAccuracy> {
        self.cells.get(&self.key(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells in canonical (row, column) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, PairAccuracy)> {
        self.cells.iter().map(|(&(i, j), &acc)| (self.labels[i].as_str(), self.labels[j].as_str(), acc))
    }

    fn grid(&self) -> Vec<Vec<String>> {
        let mut rows = vec![std::iter::once("Classes".to_string()).chain(self.labels.iter().cloned()).collect()];
        for i in 0..self.labels.len().saturating_sub(1) {
            let mut row = vec![self.labels[i].clone()];
            for j in 0..self.labels.len() {
                row.push(match self.cells.get(&(i, j)) {
                    Some(acc) if j > i => acc.percent(),
                    _ => "-".to_string(),
                });
            }
            rows.push(row);
        }
        rows
    }

    pub fn render(&self, style: Render) -> String {
        match style {
            Render::Tsv => render_tsv(&self.grid()),
            Render::Table => render_aligned(&self.grid()),
            Render::Records => {
                let mut out = String::new();
                for (a, b, acc) in self.iter() {
                    let _ = writeln!(out, "{a}-{b}\t{:.6}", acc.value());
                }
                out
            }
        }
    }
}

pub(crate) fn render_tsv(rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// First column left-aligned, the rest right-aligned, two spaces between.
pub(crate) fn render_aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

fn metrics_grid(report: &MetricsReport) -> Vec<Vec<String>> {
    let support: u64 = report.per_class.iter().map(|c| c.support).sum();
    let mut rows = vec![["class", "precision", "recall", "f_measure", "accuracy", "support"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for c in &report.per_class {
        rows.push(vec![c.label.clone(), pct(c.precision), pct(c.recall), pct(c.f1), "-".into(), c.support.to_string()]);
    }
    let acc = pct(report.accuracy);
    rows.push(vec![
        "macro".into(),
        pct(report.macro_precision),
        pct(report.macro_recall),
        pct(report.macro_f1),
        acc.clone(),
        support.to_string(),
    ]);
    rows.push(vec![
        "macro_pr".into(),
        pct(report.macro_precision),
        pct(report.macro_recall),
        pct(report.f_of_macro()),
        acc,
        support.to_string(),
    ]);
    rows
}

/// Precision / recall / F-measure report, one row per class plus `macro`
/// (mean of per-class F1) and `macro_pr` (F of the macro P and R).
pub fn render_metrics(report: &MetricsReport, style: Render) -> String {
    render_rows(&metrics_grid(report), style)
}

/// A header row plus data rows, aligned for [`Render::Table`] and
/// tab-separated otherwise.
pub fn render_rows(rows: &[Vec<String>], style: Render) -> String {
    match style {
        Render::Table => render_aligned(rows),
        Render::Tsv | Render::Records => render_tsv(rows),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{MethodLabel, TaggedSentence, Token};
    use crate::model::NGramModel;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let mut pools = BTreeMap::new();
        pools.insert("HUMAN".to_string(), (0..600).collect::<Vec<u32>>());
        pools.insert("MACHINE".to_string(), (1000..1600).collect::<Vec<u32>>());
        let spec = SplitSpec::new(400, 200, 7).unwrap();
        let s = make_split(&pools, &spec).unwrap();
        for class in ["HUMAN", "MACHINE"] {
            let train: HashSet<_> = s.train[class].iter().collect();
            let test: HashSet<_> = s.test[class].iter().collect();
            assert_eq!(train.len(), 400);
            assert_eq!(test.len(), 200);
            assert!(train.is_disjoint(&test));
            assert!(train.iter().chain(&test).all(|x| pools[class].contains(x)));
        }
        assert_eq!(s, make_split(&pools, &spec).unwrap());
        assert_ne!(s, make_split(&pools, &SplitSpec::new(400, 200, 8).unwrap()).unwrap());
    }

    #[test]
    fn split_insufficient() {
        let mut pools = BTreeMap::new();
        pools.insert("A".to_string(), vec![0u8; 10]);
        let err = make_split(&pools, &SplitSpec::new(400, 200, 1).unwrap()).unwrap_err();
        assert!(matches!(err, EvalError::InsufficientData { ref class, available: 10, required: 600 } if class == "A"));
        assert!(SplitSpec::new(0, 5, 1).is_err());
    }

    #[test]
    fn stratified_split_balances_sources() {
        let mut pool = Vec::new();
        for (m, n) in [("PT1", 500), ("PT2", 150)] {
            pool.extend((0..n).map(|i| (m, i)));
        }
        let mut pools = BTreeMap::new();
        pools.insert("HUMAN".to_string(), pool);
        let s = make_stratified_split(&pools, &SplitSpec::new(200, 100, 3).unwrap(), |x| x.0).unwrap();
        let chosen: Vec<_> = s.train["HUMAN"].iter().chain(&s.test["HUMAN"]).collect();
        let pt2 = chosen.iter().filter(|x| x.0 == "PT2").count();
        // 150 each when possible
        assert_eq!(pt2, 150);
        assert_eq!(chosen.len(), 300);
    }

    #[test]
    fn water_fill_cases() {
        assert_eq!(water_fill(&[100, 100], 60), vec![30, 30]);
        assert_eq!(water_fill(&[10, 100, 100], 90), vec![10, 40, 40]);
        assert_eq!(water_fill(&[5, 5, 5], 7), vec![3, 2, 2]);
        assert_eq!(water_fill(&[0, 4], 4), vec![0, 4]);
    }

    #[test]
    fn metrics_hand_matrix() {
        let cmx = ConfusionMatrix::from_cells(labels(&["A", "B"]), vec![vec![3, 1], vec![2, 4]]);
        let m = metrics(&cmx);
        assert_eq!(m.accuracy, 0.7);
        assert_eq!(m.per_class[0].precision, 0.6);
        assert_eq!(m.per_class[0].recall, 0.75);
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_symmetric_and_perfect() {
        let m = metrics(&ConfusionMatrix::from_cells(labels(&["A", "B"]), vec![vec![1, 1], vec![1, 1]]));
        assert_eq!(m.accuracy, 0.5);
        for c in &m.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (0.5, 0.5, 0.5));
        }
        let m = metrics(&ConfusionMatrix::from_cells(
            labels(&["A", "B", "C"]),
            vec![vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 9]],
        ));
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.macro_precision, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_columns_give_zero_precision() {
        let m = metrics(&ConfusionMatrix::from_cells(labels(&["A", "B"]), vec![vec![3, 0], vec![2, 0]]));
        assert_eq!(m.per_class[1].precision, 0.0);
        assert_eq!(m.per_class[1].f1, 0.0);
        let empty = metrics(&ConfusionMatrix::new(labels(&["A", "B"])));
        assert_eq!(empty.accuracy, 0.0);
    }

    fn inst(tags: &[&str], method: MethodLabel) -> LabeledInstance {
        LabeledInstance {
            tokens: TaggedSentence::new(tags.iter().map(|t| Token::new("w", *t, "w").unwrap()).collect()).unwrap(),
            genre: GenreLabel::FIC,
            method,
            source_doc: "d".into(),
        }
    }

    #[test]
    fn rigged_classifier_bookkeeping() {
        // A's model dominates every unigram, so everything is predicted A.
        let u = NGramOrder::UNIGRAM;
        let a = NGramModel::from_counts("A", u, [(NGram::parse("X").unwrap(), 100)]).unwrap();
        let b = NGramModel::from_counts("B", u, [(NGram::parse("Y").unwrap(), 1)]).unwrap();
        let cm =
            ClassifierModel::from_models(RepresentationMode::Pos, u, Smoothing::Laplace, vec![a, b], None).unwrap();
        let x = inst(&["X"], MethodLabel::PT1);
        let test: Vec<(&str, &LabeledInstance)> = vec![("A", &x), ("A", &x), ("A", &x), ("B", &x), ("B", &x)];
        let m = evaluate(&cm, test, RepresentationMode::Pos, u).unwrap();
        assert_eq!(m.cells(), &[vec![3, 0], vec![2, 0]]);
        assert_eq!(m.total(), 5);
        let empty = evaluate(&cm, std::iter::empty(), RepresentationMode::Pos, u).unwrap();
        assert_eq!(empty.cells(), &[vec![0, 0], vec![0, 0]]);
        let err = evaluate(&cm, std::iter::empty(), RepresentationMode::Lex, u).unwrap_err();
        assert!(matches!(err, EvalError::ModeMismatch { .. }));
        let err = evaluate(&cm, std::iter::empty(), RepresentationMode::Pos, NGramOrder::BIGRAM).unwrap_err();
        assert!(matches!(err, EvalError::ModeMismatch { .. }));
    }

    #[test]
    fn percent_rendering() {
        assert_eq!(PairAccuracy { correct: 305, total: 400 }.percent(), "76.25%");
        assert_eq!(PairAccuracy { correct: 336, total: 400 }.percent(), "84.00%");
        assert_eq!(PairAccuracy { correct: 1, total: 3 }.percent(), "33.33%");
        assert_eq!(PairAccuracy { correct: 2, total: 3 }.percent(), "66.67%");
        assert_eq!(PairAccuracy { correct: 1, total: 8 }.percent(), "12.50%");
        assert_eq!(PairAccuracy { correct: 1, total: 1 }.percent(), "100.00%");
    }

    #[test]
    fn table_layout_three_labels() {
        let mut t = PairwiseTable::new(labels(&["A", "B", "C"]));
        t.set("B", "A", PairAccuracy { correct: 3, total: 4 });
        t.set("A", "C", PairAccuracy { correct: 1, total: 2 });
        t.set("B", "C", PairAccuracy { correct: 1, total: 1 });
        assert_eq!(t.render(Render::Tsv), "Classes\tA\tB\tC\nA\t-\t75.00%\t50.00%\nB\t-\t-\t100.00%\n");
        assert_eq!(t.render(Render::Records), "A-B\t0.750000\nA-C\t0.500000\nB-C\t1.000000\n");
        assert_eq!(
            t.render(Render::Table),
            "Classes  A       B        C\nA        -  75.00%   50.00%\nB        -       -  100.00%\n"
        );
        assert_eq!(t.get("C", "B"), t.get("B", "C"));
    }

    proptest! {
        #[test]
        fn accuracy_and_label_order_invariance(cells in prop::collection::vec(0u64..20, 9)) {
            let grid: Vec<Vec<u64>> = cells.chunks(3).map(|r| r.to_vec()).collect();
            let m = metrics(&ConfusionMatrix::from_cells(labels(&["A", "B", "C"]), grid.clone()));
            let total: u64 = cells.iter().sum();
            let diag = grid[0][0] + grid[1][1] + grid[2][2];
            prop_assert_eq!(m.accuracy, ratio(diag, total));
            // permute class order (C, A, B)
            let perm = [2usize, 0, 1];
            let pg: Vec<Vec<u64>> = perm.iter().map(|&i| perm.iter().map(|&j| grid[i][j]).collect()).collect();
            let pm = metrics(&ConfusionMatrix::from_cells(labels(&["C", "A", "B"]), pg));
            prop_assert!((pm.macro_f1 - m.macro_f1).abs() < 1e-12);
            prop_assert_eq!(pm.accuracy, m.accuracy);
            for c in &m.per_class {
                prop_assert!((0.0..=1.0).contains(&c.precision) && (0.0..=1.0).contains(&c.f1));
            }
        }

        #[test]
        fn balanced_binary_accuracy_is_mean_recall(a in 0u64..50, b in 0u64..50, n in 50u64..60) {
            let cmx = ConfusionMatrix::from_cells(labels(&["A", "B"]), vec![vec![a, n - a], vec![n - b, b]]);
            let m = metrics(&cmx);
            prop_assert!((m.accuracy - (m.per_class[0].recall + m.per_class[1].recall) / 2.0).abs() < 1e-12);
        }
    }
}
