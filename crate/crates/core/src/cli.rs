//! The `transvar` command line.
//!
//! Every subcommand reads vertical corpora, model files, spec files or MIF
//! reports produced by the others and writes a TSV report (or a model or
//! corpus file) to `--out`, or to stdout when `--out` is absent.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::corpus::{
    extract_instances, parse_vertical, CoarseMethod, CorpusError, Document, GenreLabel, LabeledInstance, LengthWindow,
    MethodLabel,
};
use crate::eval::{
    class_pools, evaluate, metrics, pairwise_experiments, render_metrics, run_experiment, train_on, EvalError,
    ExperimentConfig, LabelDimension, PairwiseTable, Render, SplitSpec,
};
use crate::features::{
    distribution, example_contexts, grams_from_mif, membership, render_distribution, render_mif, top_features,
    ClassFrequencies, FeatureError, MifList, MAX_EXAMPLES,
};
use crate::model::{load_model, save_model, ClassifierModel, ModelError, PriorMode, Smoothing, TrainConfig};
use crate::representation::{featurize_instance, NGram, NGramOrder, RepresentationError, RepresentationMode};
use crate::testkit::{generate_parallel, separation, write_corpus, GeneratorSpec, SynthError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Environment fallback for `--jobs`.
pub const JOBS_ENV: &str = "TRANSVAR_JOBS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Corpus { path: String, source: CorpusError },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    ModelFile { path: String, source: ModelError },
    #[error("{path}: {source}")]
    SpecFile { path: String, source: SynthError },
    #[error("document id `{id}` in {path} already appeared in {first}")]
    DuplicateDocument { id: String, path: String, first: String },
    #[error("n-gram `{gram}` has order {found}, the run uses n={expected}")]
    GramOrder { gram: String, found: usize, expected: usize },
    #[error("no instances of the selected classes within the length window")]
    NoInstances,
    #[error("nothing to look up: pass --gram or --mif")]
    NoGrams,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Representation(#[from] RepresentationError),
}

#[derive(Debug, Parser)]
#[command(
    name = "transvar",
    version,
    about = "Classify translated text by genre and translation method with delexicalized n-gram models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse corpora and report document, sentence and instance counts
    Validate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Train a classifier on every instance and write the model file
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Label every instance with a trained model
    Classify {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Model file written by `train`
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Precision, recall and F-measure per class, from a seeded split or a trained model
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Score this model on all instances instead of splitting (mode and n come from the model)
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Binary accuracy for every pair of classes, as an upper-triangular table
    Pairwise {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[command(flatten)]
        jobs: JobsArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Most informative n-grams of every pairwise model, or their list membership for one class
    Mif {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Length of each feature list
        #[arg(long, default_value_t = crate::features::DEFAULT_TOP_K, value_parser = clap::value_parser!(usize))]
        k: usize,
        /// Use this binary model instead of training one per pair
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Report how many of this class's lists each n-gram appears in
        #[arg(long, value_name = "CLASS")]
        focal: Option<String>,
        #[command(flatten)]
        jobs: JobsArg,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Frequency per 1000 n-grams of selected n-grams in each class
    Distribution {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        features: FeatureArgs,
        /// n-gram to look up, tokens separated by spaces (repeatable)
        #[arg(long, value_name = "NGRAM")]
        gram: Vec<String>,
        /// Look up every n-gram of a report written by `mif`
        #[arg(long, value_name = "PATH")]
        mif: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generate a synthetic corpus from a Markov-chain spec file
    Synth {
        /// Generator spec file
        #[arg(long, value_name = "PATH")]
        spec: PathBuf,
        /// Generator seed [default: the spec file's seed]
        #[arg(long)]
        seed: Option<u64>,
        /// Print the analytic class separation instead of generating
        #[arg(long)]
        separation: bool,
        #[command(flatten)]
        jobs: JobsArg,
        /// Output file [default: stdout]
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Vertical corpus file (repeatable)
    #[arg(long, value_name = "PATH", required = true)]
    corpus: Vec<PathBuf>,
    /// Shortest sentence kept, in tokens
    #[arg(long, default_value_t = 12)]
    min_len: usize,
    /// Longest sentence kept, in tokens
    #[arg(long, default_value_t = 24)]
    max_len: usize,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    /// Label to classify by: genre, method-fine or method-coarse
    #[arg(long, default_value = "genre")]
    dim: LabelDimension,
    /// Token representation: LEX, SEMI or POS
    #[arg(long, default_value = "POS")]
    mode: RepresentationMode,
    /// n-gram order, 1 to 4
    #[arg(long, default_value = "3", value_parser = parse_order)]
    n: NGramOrder,
    /// Restrict to these classes (comma-separated) [default: all present]
    #[arg(long, value_delimiter = ',', value_name = "CLASS,...")]
    classes: Vec<String>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Training instances per class [default: 300 for genre, 400 otherwise]
    #[arg(long)]
    train: Option<usize>,
    /// Test instances per class [default: 200]
    #[arg(long)]
    test: Option<usize>,
    /// Seed of the train/test sampling
    #[arg(long, default_value_t = crate::eval::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// LAPLACE, or NONE for unsmoothed unigram counts
    #[arg(long, default_value = "LAPLACE")]
    smoothing: Smoothing,
    /// Class priors: uniform or empirical
    #[arg(long, default_value = "uniform")]
    prior: PriorMode,
}

#[derive(Debug, Args)]
struct JobsArg {
    /// Worker threads
    #[arg(long, env = JOBS_ENV, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output file [default: stdout]
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report layout: tsv, table or records
    #[arg(long, default_value = "tsv")]
    render: Render,
}

fn parse_order(s: &str) -> Result<NGramOrder, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    NGramOrder::new(n).map_err(|e| e.to_string())
}

/// Runs the command line with process stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut io::stdout().lock(), &mut io::stderr().lock())
}

/// Runs the command line, writing reports to `stdout` and diagnostics to `stderr`.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = if e.use_stderr() { e.render().to_string() } else { e.render().ansi().to_string() };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn emit(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(io_err(path)),
        None => stdout.write_all(bytes).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn read_corpora(paths: &[PathBuf]) -> Result<Vec<Document>, CliError> {
    let mut docs = Vec::new();
    let mut seen: HashMap<String, String> = HashMap::new();
    for path in paths {
        let name = path.display().to_string();
        let file = File::open(path).map_err(io_err(path))?;
        let parsed =
            parse_vertical(BufReader::new(file)).map_err(|source| CliError::Corpus { path: name.clone(), source })?;
        for d in &parsed {
            if let Some(first) = seen.insert(d.id.clone(), name.clone()) {
                return Err(CliError::DuplicateDocument { id: d.id.clone(), path: name, first });
            }
        }
        docs.extend(parsed);
    }
    Ok(docs)
}

fn load_instances(
    args: &CorpusArgs,
    stderr: &mut dyn Write,
) -> Result<(Vec<Document>, Vec<LabeledInstance>), CliError> {
    let docs = read_corpora(&args.corpus)?;
    let window = LengthWindow::new(args.min_len, args.max_len)
        .map_err(|source| CliError::Corpus { path: "--min-len/--max-len".into(), source })?;
    let extraction = extract_instances(&docs, window);
    let _ = writeln!(stderr, "excluded_sentences={}", extraction.excluded);
    Ok((docs, extraction.instances))
}

fn canonical_labels(dim: LabelDimension) -> Vec<&'static str> {
    match dim {
        LabelDimension::Genre => GenreLabel::ALL.iter().map(|g| g.as_str()).collect(),
        LabelDimension::MethodFine => MethodLabel::ALL.iter().map(|m| m.as_str()).collect(),
        LabelDimension::MethodCoarse => CoarseMethod::ALL.iter().map(|m| m.as_str()).collect(),
    }
}

/// Instances of the selected classes, and those classes in canonical order.
fn select(
    instances: Vec<LabeledInstance>,
    features: &FeatureArgs,
) -> Result<(Vec<LabeledInstance>, Vec<String>), CliError> {
    let dim = features.dim;
    let wanted: Option<HashSet<&str>> =
        (!features.classes.is_empty()).then(|| features.classes.iter().map(String::as_str).collect());
    let kept: Vec<LabeledInstance> =
        instances.into_iter().filter(|i| wanted.as_ref().is_none_or(|w| w.contains(dim.label(i)))).collect();
    let present: HashSet<&str> = kept.iter().map(|i| dim.label(i)).collect();
    if let Some(w) = &wanted {
        let known = canonical_labels(dim);
        if let Some(bad) = w.iter().find(|c| !known.contains(c)) {
            return Err(EvalError::UnknownClass(bad.to_string()).into());
        }
    }
    let labels: Vec<String> =
        canonical_labels(dim).into_iter().filter(|l| present.contains(l)).map(str::to_string).collect();
    if kept.is_empty() {
        return Err(CliError::NoInstances);
    }
    Ok((kept, labels))
}

fn experiment_config(
    features: &FeatureArgs,
    split: &SplitArgs,
    est: &EstimatorArgs,
) -> Result<ExperimentConfig, CliError> {
    let (train, test) = features.dim.default_split();
    Ok(ExperimentConfig {
        dim: features.dim,
        mode: features.mode,
        order: features.n,
        smoothing: est.smoothing,
        prior: est.prior,
        split: SplitSpec::new(split.train.unwrap_or(train), split.test.unwrap_or(test), split.seed)?,
    })
}

fn read_model(path: &Path) -> Result<ClassifierModel, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    load_model(BufReader::new(file)).map_err(|source| CliError::ModelFile { path: path.display().to_string(), source })
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Validate { corpus, output } => {
            let (docs, instances) = load_instances(&corpus, stderr)?;
            emit(output.out.as_deref(), validate_report(&docs, &instances, output.render).as_bytes(), stdout)
        }
        Command::Train { corpus, features, estimator, output } => {
            let (_, instances) = load_instances(&corpus, stderr)?;
            let (instances, _) = select(instances, &features)?;
            let pools = class_pools(&instances, features.dim, features.n);
            let config = TrainConfig {
                mode: features.mode,
                order: features.n,
                smoothing: estimator.smoothing,
                prior: estimator.prior,
            };
            let model = train_on(&pools, &config)?;
            let mut bytes = Vec::new();
            save_model(&model, &mut bytes).map_err(io_err(Path::new("<model>")))?;
            emit(output.out.as_deref(), &bytes, stdout)
        }
        Command::Classify { corpus, model, output } => {
            let cm = read_model(&model)?;
            let (_, instances) = load_instances(&corpus, stderr)?;
            let mut rows = vec![["instance", "document", "genre", "method", "predicted"].map(String::from).to_vec()];
            for (i, inst) in instances.iter().enumerate() {
                let grams = featurize_instance(inst, cm.mode(), cm.order());
                let predicted = if grams.is_empty() { "-".to_string() } else { cm.classify(&grams)?.to_string() };
                rows.push(vec![
                    (i + 1).to_string(),
                    inst.source_doc.clone(),
                    inst.genre.to_string(),
                    inst.method.to_string(),
                    predicted,
                ]);
            }
            emit(output.out.as_deref(), crate::eval::render_rows(&rows, output.render).as_bytes(), stdout)
        }
        Command::Evaluate { corpus, features, split, estimator, model, output } => {
            let (_, instances) = load_instances(&corpus, stderr)?;
            let report = match model {
                Some(path) => {
                    let cm = read_model(&path)?;
                    let classes: BTreeSet<&str> = cm.labels().collect();
                    let dim = features.dim;
                    let usable: Vec<(&str, &LabeledInstance)> = instances
                        .iter()
                        .filter(|i| i.tokens.len() >= cm.order().get())
                        .map(|i| (dim.label(i), i))
                        .filter(|(l, _)| classes.contains(l))
                        .collect();
                    if usable.is_empty() {
                        return Err(CliError::NoInstances);
                    }
                    metrics(&evaluate(&cm, usable, cm.mode(), cm.order())?)
                }
                None => {
                    let (instances, _) = select(instances, &features)?;
                    run_experiment(&instances, &experiment_config(&features, &split, &estimator)?)?.metrics
                }
            };
            emit(output.out.as_deref(), render_metrics(&report, output.render).as_bytes(), stdout)
        }
        Command::Pairwise { corpus, features, split, estimator, jobs, output } => {
            let (_, instances) = load_instances(&corpus, stderr)?;
            let (instances, labels) = select(instances, &features)?;
            let cfg = experiment_config(&features, &split, &estimator)?;
            let tasks = pairwise_experiments(&instances, &labels, &cfg, jobs.jobs as usize)?;
            let table = PairwiseTable::from_tasks(labels, &tasks);
            emit(output.out.as_deref(), table.render(output.render).as_bytes(), stdout)
        }
        Command::Mif { corpus, features, split, estimator, k, model, focal, jobs, output } => {
            let (_, instances) = load_instances(&corpus, stderr)?;
            let (instances, labels) = select(instances, &features)?;
            let (lists, mode, order) = match model {
                Some(path) => {
                    let cm = read_model(&path)?;
                    (top_features(&cm, k)?.to_vec(), cm.mode(), cm.order())
                }
                None => {
                    let cfg = experiment_config(&features, &split, &estimator)?;
                    let tasks = pairwise_experiments(&instances, &labels, &cfg, jobs.jobs as usize)?;
                    let mut lists = Vec::new();
                    for t in &tasks {
                        lists.extend(top_features(&t.result.model, k)?);
                    }
                    (lists, features.mode, features.n)
                }
            };
            let text = match focal {
                Some(focal) => {
                    let own: Vec<MifList> = lists.into_iter().filter(|l| l.class == focal).collect();
                    membership(&focal, &own)?.render(output.render)
                }
                None => {
                    let examples = mif_examples(&lists, &instances, features.dim, mode, order);
                    render_mif(&lists, &examples)
                }
            };
            emit(output.out.as_deref(), text.as_bytes(), stdout)
        }
        Command::Distribution { corpus, features, gram, mif, output } => {
            let mut grams = Vec::new();
            for g in &gram {
                grams.push(NGram::parse(g)?);
            }
            if let Some(path) = mif {
                let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
                grams.extend(grams_from_mif(&text)?);
            }
            if grams.is_empty() {
                return Err(CliError::NoGrams);
            }
            if let Some(g) = grams.iter().find(|g| g.order() != features.n.get()) {
                return Err(CliError::GramOrder { gram: g.to_string(), found: g.order(), expected: features.n.get() });
            }
            let (_, instances) = load_instances(&corpus, stderr)?;
            let (instances, labels) = select(instances, &features)?;
            let freqs = ClassFrequencies::from_instances(&instances, features.dim, features.mode, features.n);
            let rows = distribution(&grams, &freqs);
            emit(output.out.as_deref(), render_distribution(&rows, &labels, output.render).as_bytes(), stdout)
        }
        Command::Synth { spec, seed, separation: report, jobs, out } => {
            let text = std::fs::read_to_string(&spec).map_err(io_err(&spec))?;
            let mut gs = GeneratorSpec::parse(&text)
                .map_err(|source| CliError::SpecFile { path: spec.display().to_string(), source })?;
            if let Some(seed) = seed {
                gs.seed = seed;
            }
            if report {
                return emit(out.as_deref(), separation(&gs)?.render().as_bytes(), stdout);
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.jobs as usize)
                .build()
                .map_err(|e| EvalError::Workers(e.to_string()))?;
            let docs = pool.install(|| generate_parallel(&gs))?;
            let mut bytes = Vec::new();
            write_corpus(&mut bytes, &gs, &docs)?;
            emit(out.as_deref(), &bytes, stdout)
        }
    }
}

fn validate_report(docs: &[Document], instances: &[LabeledInstance], style: Render) -> String {
    // (documents, sentences, tokens, instances) per genre and method
    let mut counts: BTreeMap<(usize, usize), [usize; 4]> = BTreeMap::new();
    let key = |g: GenreLabel, m: MethodLabel| {
        (
            GenreLabel::ALL.iter().position(|x| *x == g).unwrap_or(0),
            MethodLabel::ALL.iter().position(|x| *x == m).unwrap_or(0),
        )
    };
    for d in docs {
        let c = counts.entry(key(d.genre, d.method)).or_default();
        c[0] += 1;
        c[1] += d.sentences.len();
        c[2] += d.token_count();
    }
    for i in instances {
        counts.entry(key(i.genre, i.method)).or_default()[3] += 1;
    }
    let mut rows =
        vec![["genre", "method", "documents", "sentences", "tokens", "instances"].map(String::from).to_vec()];
    let mut total = [0usize; 4];
    for (&(g, m), c) in &counts {
        let mut row = vec![GenreLabel::ALL[g].to_string(), MethodLabel::ALL[m].to_string()];
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
            row.push(v.to_string());
        }
        rows.push(row);
    }
    let mut last = vec!["total".to_string(), "-".to_string()];
    last.extend(total.iter().map(usize::to_string));
    rows.push(last);
    crate::eval::render_rows(&rows, style)
}

fn mif_examples(
    lists: &[MifList],
    instances: &[LabeledInstance],
    dim: LabelDimension,
    mode: RepresentationMode,
    order: NGramOrder,
) -> HashMap<String, HashMap<NGram, Vec<String>>> {
    let mut wanted: BTreeMap<&str, BTreeSet<NGram>> = BTreeMap::new();
    for l in lists {
        wanted.entry(&l.class).or_default().extend(l.entries.iter().map(|e| e.gram.clone()));
    }
    wanted
        .into_iter()
        .map(|(class, grams)| {
            let own = instances.iter().filter(|i| dim.label(i) == class);
            (class.to_string(), example_contexts(&grams, own, mode, order, MAX_EXAMPLES))
        })
        .collect()
}
