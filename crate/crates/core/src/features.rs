//! Most informative features of binary tasks, and their aggregation.
//!
//! The informativeness of an n-gram `g` for class `c` against `c'` is its
//! contribution to the decision margin between the two smoothed models:
//!
//! ```text
//! score(g; c, c') = ln P(g | c) - ln P(g | c')
//! ```
//!
//! which is antisymmetric in the two classes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::LabeledInstance;
use crate::eval::{render_rows, LabelDimension, Render};
use crate::model::{laplace_prob, ClassifierModel};
use crate::representation::{delexicalize, extract_ngrams, featurize_instance, NGram, NGramOrder, RepresentationMode};

/// List length used when none is given.
pub const DEFAULT_TOP_K: usize = 20;

/// Corpus contexts kept per listed n-gram.
pub const MAX_EXAMPLES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("feature lists need a binary model, this one has {0} classes")]
    NotBinary(usize),
    #[error("K must be at least 1")]
    InvalidK,
    #[error("list for `{found}` passed where lists for `{expected}` were expected")]
    FocalMismatch { expected: String, found: String },
    #[error("class `{0}` is not in the model")]
    UnknownClass(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScore {
    pub gram: NGram,
    pub target_class: String,
    pub other_class: String,
    pub score: f64,
}

/// Top-K n-grams favouring `class` in one binary task.
#[derive(Debug, Clone, PartialEq)]
pub struct MifList {
    /// The two classes of the task, in label order.
    pub task: (String, String),
    pub class: String,
    pub entries: Vec<FeatureScore>,
}

impl MifList {
    pub fn other_class(&self) -> &str {
        if self.task.0 == self.class {
            &self.task.1
        } else {
            &self.task.0
        }
    }
}

/// Smoothed log-likelihood ratio of `gram` for `target` against `other`.
pub fn llr(cm: &ClassifierModel, gram: &NGram, target: &str, other: &str) -> Result<f64, FeatureError> {
    let b = cm.vocab().size();
    let t = cm.model(target).ok_or_else(|| FeatureError::UnknownClass(target.to_string()))?;
    let o = cm.model(other).ok_or_else(|| FeatureError::UnknownClass(other.to_string()))?;
    Ok(laplace_prob(t, gram, b).ln() - laplace_prob(o, gram, b).ln())
}

/// The two top-K lists of a binary model, one per class, over the union
/// vocabulary. Ties in score go to the smaller canonical string.
pub fn top_features(cm: &ClassifierModel, k: usize) -> Result<[MifList; 2], FeatureError> {
    if cm.class_count() != 2 {
        return Err(FeatureError::NotBinary(cm.class_count()));
    }
    if k == 0 {
        return Err(FeatureError::InvalidK);
    }
    let labels: Vec<String> = cm.labels().map(str::to_string).collect();
    let vocab: BTreeSet<&NGram> = cm.models().flat_map(|m| m.iter().map(|(g, _)| g)).collect();
    let task = (labels[0].clone(), labels[1].clone());
    let list_for = |target: &str, other: &str| -> Result<MifList, FeatureError> {
        let mut entries = vocab
            .iter()
            .map(|g| {
                Ok(FeatureScore {
                    gram: (*g).clone(),
                    target_class: target.to_string(),
                    other_class: other.to_string(),
                    score: llr(cm, g, target, other)?,
                })
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.gram.cmp(&b.gram)));
        entries.truncate(k);
        Ok(MifList { task: task.clone(), class: target.to_string(), entries })
    };
    Ok([list_for(&labels[0], &labels[1])?, list_for(&labels[1], &labels[0])?])
}

/// How often each n-gram recurs across the lists of one focal class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipReport {
    pub focal_class: String,
    /// Number of lists aggregated.
    pub lists: usize,
    /// `m -> number of n-gram types found in exactly m lists`, for every m in `1..=lists`.
    pub histogram: BTreeMap<usize, usize>,
    pub total: usize,
    /// Each n-gram with the opposing classes of the tasks it was listed for.
    pub grams: BTreeMap<NGram, Vec<String>>,
}

pub fn membership(focal: &str, lists: &[MifList]) -> Result<MembershipReport, FeatureError> {
    let mut grams: BTreeMap<NGram, Vec<String>> = BTreeMap::new();
    for list in lists {
        if list.class != focal {
            return Err(FeatureError::FocalMismatch { expected: focal.to_string(), found: list.class.clone() });
        }
        let distinct: BTreeSet<&NGram> = list.entries.iter().map(|e| &e.gram).collect();
        for g in distinct {
            grams.entry(g.clone()).or_default().push(list.other_class().to_string());
        }
    }
    let mut histogram: BTreeMap<usize, usize> = (1..=lists.len()).map(|m| (m, 0)).collect();
    for tasks in grams.values() {
        *histogram.entry(tasks.len()).or_insert(0) += 1;
    }
    Ok(MembershipReport { focal_class: focal.to_string(), lists: lists.len(), histogram, total: grams.len(), grams })
}

impl MembershipReport {
    /// `lists<TAB>types` rows from the most to the fewest lists, then `total`.
    pub fn render(&self, style: Render) -> String {
        let mut rows = vec![vec!["lists".to_string(), "types".to_string()]];
        for (m, count) in self.histogram.iter().rev() {
            rows.push(vec![m.to_string(), count.to_string()]);
        }
        rows.push(vec!["total".to_string(), self.total.to_string()]);
        render_rows(&rows, style)
    }
}

/// n-gram counts per class, for frequency tables.
#[derive(Debug, Clone, Default)]
pub struct ClassFrequencies {
    classes: BTreeMap<String, (HashMap<NGram, u64>, u64)>,
}

impl ClassFrequencies {
    pub fn from_instances(
        instances: &[LabeledInstance],
        dim: LabelDimension,
        mode: RepresentationMode,
        order: NGramOrder,
    ) -> Self {
        let mut f = ClassFrequencies::default();
        for inst in instances {
            f.add(dim.label(inst), &featurize_instance(inst, mode, order));
        }
        f
    }

    pub fn add(&mut self, class: &str, grams: &[NGram]) {
        let (counts, total) = self.classes.entry(class.to_string()).or_default();
        for g in grams {
            *counts.entry(g.clone()).or_insert(0) += 1;
            *total += 1;
        }
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn vocabulary(&self, class: &str) -> Vec<NGram> {
        let mut v: Vec<NGram> = self.classes.get(class).map(|(c, _)| c.keys().cloned().collect()).unwrap_or_default();
        v.sort();
        v
    }
}

/// Occurrences of one n-gram per 1000 n-gram tokens of each class.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionRow {
    pub gram: NGram,
    pub per_class: Vec<(String, f64)>,
}

pub fn distribution(grams: &[NGram], freqs: &ClassFrequencies) -> Vec<DistributionRow> {
    grams
        .iter()
        .map(|g| DistributionRow {
            gram: g.clone(),
            per_class: freqs
                .classes
                .iter()
                .map(|(class, (counts, total))| {
                    let c = counts.get(g).copied().unwrap_or(0);
                    let per_mille = if *total == 0 { 0.0 } else { 1000.0 * c as f64 / *total as f64 };
                    (class.clone(), per_mille)
                })
                .collect(),
        })
        .collect()
}

/// One column per class, values with two decimals.
pub fn render_distribution(rows: &[DistributionRow], classes: &[String], style: Render) -> String {
    let mut grid = vec![std::iter::once("ngram".to_string()).chain(classes.iter().cloned()).collect::<Vec<_>>()];
    for row in rows {
        let mut line = vec![row.gram.to_string()];
        for class in classes {
            let v = row.per_class.iter().find(|(c, _)| c == class).map_or(0.0, |(_, v)| *v);
            line.push(format!("{v:.2}"));
        }
        grid.push(line);
    }
    render_rows(&grid, style)
}

/// Up to `limit` surface-form contexts per wanted n-gram, in corpus order.
pub fn example_contexts<'a, I>(
    wanted: &BTreeSet<NGram>,
    instances: I,
    mode: RepresentationMode,
    order: NGramOrder,
    limit: usize,
) -> HashMap<NGram, Vec<String>>
where
    I: IntoIterator<Item = &'a LabeledInstance>,
{
    let mut found: HashMap<NGram, Vec<String>> = HashMap::new();
    let n = order.get();
    for inst in instances {
        let seq = delexicalize(&inst.tokens, mode);
        for (start, g) in extract_ngrams(&seq, order).into_iter().enumerate() {
            if !wanted.contains(&g) {
                continue;
            }
            let slot = found.entry(g).or_default();
            if slot.len() < limit {
                let forms: Vec<&str> = inst.tokens.tokens()[start..start + n].iter().map(|t| t.form.as_str()).collect();
                slot.push(forms.join(" "));
            }
        }
    }
    found
}

/// `rank<TAB>class<TAB>score<TAB>ngram<TAB>example_context`; each list is
/// preceded by a `## <class> vs <other>` comment line.
pub fn render_mif(lists: &[MifList], examples: &HashMap<String, HashMap<NGram, Vec<String>>>) -> String {
    let mut out = String::from("rank\tclass\tscore\tngram\texample_context\n");
    for list in lists {
        let _ = writeln!(out, "## {} vs {}", list.class, list.other_class());
        let contexts = examples.get(&list.class);
        for (rank, e) in list.entries.iter().enumerate() {
            let ctx = contexts
                .and_then(|m| m.get(&e.gram))
                .filter(|v| !v.is_empty())
                .map_or_else(|| "-".to_string(), |v| v.join(" / "));
            let _ = writeln!(out, "{}\t{}\t{:.6}\t{}\t{}", rank + 1, list.class, e.score, e.gram, ctx);
        }
    }
    out
}

/// Reads the n-gram column of a MIF report, dropping duplicates.
pub fn grams_from_mif(report: &str) -> Result<Vec<NGram>, crate::representation::RepresentationError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for line in report.lines().skip(1) {
        if line.starts_with("##") || line.trim().is_empty() {
            continue;
        }
        if let Some(col) = line.split('\t').nth(3) {
            let g = NGram::parse(col)?;
            if seen.insert(g.clone()) {
                out.push(g);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NGramModel, Smoothing};
    use proptest::prelude::*;

    fn g(s: &str) -> NGram {
        NGram::parse(s).unwrap()
    }

    fn binary(x: &[(&str, u64)], y: &[(&str, u64)]) -> ClassifierModel {
        let o = NGramOrder::new(x[0].0.split(' ').count()).unwrap();
        let mk = |l: &str, c: &[(&str, u64)]| NGramModel::from_counts(l, o, c.iter().map(|(s, n)| (g(s), *n))).unwrap();
        ClassifierModel::from_models(RepresentationMode::Pos, o, Smoothing::Laplace, vec![mk("X", x), mk("Y", y)], None)
            .unwrap()
    }

    fn list(class: &str, other: &str, grams: &[String]) -> MifList {
        MifList {
            task: if class < other { (class.into(), other.into()) } else { (other.into(), class.into()) },
            class: class.into(),
            entries: grams
                .iter()
                .map(|s| FeatureScore { gram: g(s), target_class: class.into(), other_class: other.into(), score: 0.0 })
                .collect(),
        }
    }

    #[test]
    fn hand_oracle_scores() {
        let cm = binary(&[("A B", 9)], &[("C D", 9)]);
        let [x, y] = top_features(&cm, 1).unwrap();
        assert_eq!(x.class, "X");
        assert_eq!(x.entries.len(), 1);
        assert_eq!(x.entries[0].gram, g("A B"));
        assert!((x.entries[0].score - 10f64.ln()).abs() < 1e-12);
        assert_eq!(y.entries[0].gram, g("C D"));
        assert!((llr(&cm, &g("C D"), "X", "Y").unwrap() + 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scaling_can_reorder_grams() {
        // (C+1) ratios: g2 5/2 beats g1 2/1, but after x10 g1 11/1 beats g2 41/11
        let x = [("g1", 1), ("g2", 4), ("pad", 5)];
        let y = [("g2", 1), ("pad", 9)];
        let scale = |c: &[(&'static str, u64)]| c.iter().map(|(s, n)| (*s, n * 10)).collect::<Vec<_>>();
        let cm = binary(&x, &y);
        let scaled = binary(&scale(&x), &scale(&y));
        assert_eq!(cm.vocab(), scaled.vocab());
        let s = |m: &ClassifierModel, gram: &str| llr(m, &g(gram), "X", "Y").unwrap();
        assert!((s(&cm, "g2") - s(&cm, "g1") - 1.25f64.ln()).abs() < 1e-12);
        assert!(s(&scaled, "g1") - s(&scaled, "g2") > 1.0);
    }

    #[test]
    fn identical_models_rank_lexicographically() {
        let counts = [("B", 2), ("A", 2), ("D", 1), ("C", 5)];
        let cm = binary(&counts, &counts);
        let [x, _] = top_features(&cm, 2).unwrap();
        assert!(x.entries.iter().all(|e| e.score == 0.0));
        let names: Vec<_> = x.entries.iter().map(|e| e.gram.to_string()).collect();
        assert_eq!(names, vec!["A", "B"]);
    }

    #[test]
    fn k_beyond_vocabulary_truncates() {
        let cm = binary(&[("A", 1), ("B", 1)], &[("C", 1)]);
        let [x, y] = top_features(&cm, 50).unwrap();
        assert_eq!(x.entries.len(), 3);
        assert_eq!(y.entries.len(), 3);
        assert!(matches!(top_features(&cm, 0), Err(FeatureError::InvalidK)));
    }

    #[test]
    fn not_binary() {
        let o = NGramOrder::UNIGRAM;
        let mk = |l: &str| NGramModel::from_counts(l, o, [(g("A"), 1)]).unwrap();
        let cm = ClassifierModel::from_models(
            RepresentationMode::Pos,
            o,
            Smoothing::Laplace,
            vec![mk("X"), mk("Y"), mk("Z")],
            None,
        )
        .unwrap();
        assert!(matches!(top_features(&cm, 5), Err(FeatureError::NotBinary(3))));
    }

    fn twenty(prefix: &str) -> Vec<String> {
        (0..20).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn identical_and_disjoint_lists() {
        let others = ["ESS", "INS", "POP", "SHA", "SPE", "TOU"];
        let same: Vec<MifList> = others.iter().map(|o| list("FIC", o, &twenty("G"))).collect();
        let r = membership("FIC", &same).unwrap();
        assert_eq!(r.histogram[&6], 20);
        assert_eq!(r.histogram.values().sum::<usize>(), 20);
        assert_eq!(r.total, 20);

        let disjoint: Vec<MifList> = others.iter().map(|o| list("FIC", o, &twenty(o))).collect();
        let r = membership("FIC", &disjoint).unwrap();
        assert_eq!(r.histogram[&1], 120);
        assert_eq!(r.total, 120);
        assert_eq!(r.render(Render::Tsv), "lists\ttypes\n6\t0\n5\t0\n4\t0\n3\t0\n2\t0\n1\t120\ntotal\t120\n");
    }

    #[test]
    fn focal_mismatch() {
        let lists = vec![list("FIC", "ESS", &twenty("a")), list("ESS", "FIC", &twenty("a"))];
        assert!(matches!(membership("FIC", &lists), Err(FeatureError::FocalMismatch { .. })));
    }

    #[test]
    fn membership_records_tasks() {
        let lists = vec![list("FIC", "ESS", &["A".into(), "B".into()]), list("FIC", "POP", &["A".into()])];
        let r = membership("FIC", &lists).unwrap();
        assert_eq!(r.grams[&g("A")], vec!["ESS", "POP"]);
        assert_eq!(r.histogram, BTreeMap::from([(1, 1), (2, 1)]));
    }

    fn freqs(classes: &[(&str, &[&str])]) -> ClassFrequencies {
        let mut f = ClassFrequencies::default();
        for (c, grams) in classes {
            f.add(c, &grams.iter().map(|s| g(s)).collect::<Vec<_>>());
        }
        f
    }

    #[test]
    fn per_mille_values() {
        let f = freqs(&[("FIC", &["A B C", "A B C"]), ("TOU", &["A B C", "X Y Z", "X Y Z", "X Y Z"])]);
        let rows = distribution(&[g("A B C"), g("Q Q Q")], &f);
        assert_eq!(rows[0].per_class, vec![("FIC".to_string(), 1000.0), ("TOU".to_string(), 250.0)]);
        assert_eq!(rows[1].per_class[0].1, 0.0);
        let classes = vec!["TOU".to_string(), "FIC".to_string()];
        assert_eq!(
            render_distribution(&rows, &classes, Render::Tsv),
            "ngram\tTOU\tFIC\nA B C\t250.00\t1000.00\nQ Q Q\t0.00\t0.00\n"
        );
    }

    #[test]
    fn mif_report_round_trip_of_grams() {
        let cm = binary(&[("A B", 3), ("B C", 1)], &[("C D", 2)]);
        let lists = top_features(&cm, 2).unwrap();
        let text = render_mif(&lists, &HashMap::new());
        assert!(text.starts_with("rank\tclass\tscore\tngram\texample_context\n## X vs Y\n1\tX\t"));
        let grams = grams_from_mif(&text).unwrap();
        assert!(grams.contains(&g("A B")) && grams.contains(&g("C D")));
    }

    #[test]
    fn contexts_are_surface_windows() {
        use crate::corpus::{GenreLabel, MethodLabel, TaggedSentence, Token};
        let toks = [(",", "$,"), ("so", "ADV"), ("dass", "KOUS"), ("er", "PPER")];
        let inst = LabeledInstance {
            tokens: TaggedSentence::new(toks.iter().map(|(f, p)| Token::new(*f, *p, "").unwrap()).collect()).unwrap(),
            genre: GenreLabel::FIC,
            method: MethodLabel::PT1,
            source_doc: "d".into(),
        };
        let wanted = BTreeSet::from([g("$, ADV KOUS")]);
        let found = example_contexts(
            &wanted,
            [&inst, &inst, &inst, &inst],
            RepresentationMode::Pos,
            NGramOrder::TRIGRAM,
            MAX_EXAMPLES,
        );
        assert_eq!(found[&g("$, ADV KOUS")], vec![", so dass"; 3]);
    }

    fn arb_model_counts() -> impl Strategy<Value = (Vec<u64>, Vec<u64>)> {
        (1usize..8).prop_flat_map(|n| (prop::collection::vec(0u64..30, n), prop::collection::vec(0u64..30, n)))
    }

    fn build(xs: &[u64], ys: &[u64]) -> ClassifierModel {
        let o = NGramOrder::UNIGRAM;
        let mk = |l: &str, c: &[u64]| {
            let mut counts: Vec<(NGram, u64)> = c.iter().enumerate().map(|(i, n)| (g(&format!("g{i}")), *n)).collect();
            counts.push((g("pad"), 1));
            NGramModel::from_counts(l, o, counts).unwrap()
        };
        ClassifierModel::from_models(
            RepresentationMode::Pos,
            o,
            Smoothing::Laplace,
            vec![mk("X", xs), mk("Y", ys)],
            None,
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn scores_antisymmetric((xs, ys) in arb_model_counts()) {
            let cm = build(&xs, &ys);
            for i in 0..xs.len() + 1 {
                let gram = g(&format!("g{i}"));
                let a = llr(&cm, &gram, "X", "Y").unwrap();
                let b = llr(&cm, &gram, "Y", "X").unwrap();
                prop_assert!((a + b).abs() < 1e-12);
                prop_assert!(a.is_finite());
            }
        }

        #[test]
        fn lists_sorted_strictly((xs, ys) in arb_model_counts(), k in 1usize..10) {
            let cm = build(&xs, &ys);
            for l in top_features(&cm, k).unwrap() {
                prop_assert!(l.entries.len() <= k);
                for w in l.entries.windows(2) {
                    prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].gram < w[1].gram));
                }
            }
        }

        // Dominance order survives scaling every count by the same factor.
        #[test]
        fn dominance_rank_stable((xs, ys) in arb_model_counts(), k in 2u64..20) {
            let cm = build(&xs, &ys);
            let scaled = build(&xs.iter().map(|c| c * k).collect::<Vec<_>>(), &ys.iter().map(|c| c * k).collect::<Vec<_>>());
            prop_assert_eq!(cm.vocab(), scaled.vocab());
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    let dominates = xs[i] >= xs[j] && ys[i] <= ys[j] && (xs[i], ys[i]) != (xs[j], ys[j]);
                    if !dominates { continue; }
                    let (gi, gj) = (g(&format!("g{i}")), g(&format!("g{j}")));
                    prop_assert!(llr(&cm, &gi, "X", "Y").unwrap() > llr(&cm, &gj, "X", "Y").unwrap());
                    prop_assert!(llr(&scaled, &gi, "X", "Y").unwrap() > llr(&scaled, &gj, "X", "Y").unwrap());
                }
            }
        }

        #[test]
        fn membership_conservation(lists in prop::collection::vec(prop::collection::btree_set("[a-f]{1,2}", 0..12), 1..7)) {
            let others = ["A", "B", "C", "D", "E", "F", "G"];
            let mifs: Vec<MifList> = lists
                .iter()
                .zip(others)
                .map(|(set, o)| list("Z", o, &set.iter().cloned().collect::<Vec<_>>()))
                .collect();
            let r = membership("Z", &mifs).unwrap();
            let weighted: usize = r.histogram.iter().map(|(m, c)| m * c).sum();
            let pairs: usize = lists.iter().map(|s| s.len()).sum();
            prop_assert_eq!(weighted, pairs);
            prop_assert_eq!(r.histogram.values().sum::<usize>(), r.total);
        }

        #[test]
        fn full_vocabulary_rows_sum_to_1000(grams in prop::collection::vec("[a-d]", 1..40)) {
            let refs: Vec<&str> = grams.iter().map(String::as_str).collect();
            let f = freqs(&[("C", &refs)]);
            let rows = distribution(&f.vocabulary("C"), &f);
            let sum: f64 = rows.iter().map(|r| r.per_class[0].1).sum();
            prop_assert!((sum - 1000.0).abs() < 1e-9);
        }
    }
}
