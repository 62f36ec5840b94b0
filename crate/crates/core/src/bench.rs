//! Multi-answer QA benchmarks from graph patterns, and their grading:
//! exact match, set precision/recall, per-pattern breakdowns, and a
//! train/test leakage filter.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::tokenize;
use crate::kg::KnowledgeGraph;
use crate::pattern::{answer_set, canonical_hash, ground, GroundConfig, GroundedInstance, InstanceRecord, PatternError, PatternType};
use crate::verbalize::{verbalize_template, VerbalizeError, VerbalizedInstance};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("the graph has no triples")]
    EmptyGraph,
    #[error("every candidate instance was excluded")]
    AllExcluded,
    #[error("distribution asks for no items")]
    EmptyDistribution,
    #[error("{item}: gold answer disagrees with the graph")]
    GoldMismatch { item: String },
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Verbalize(#[from] VerbalizeError),
    #[error("predictions for unknown ids: {}", .0.join(", "))]
    UnknownIds(Vec<String>),
    #[error("prediction id {0} appears twice")]
    DuplicatePrediction(String),
    #[error("{path} line {line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Items requested per pattern.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution(pub BTreeMap<PatternType, usize>);

impl Distribution {
    /// Default benchmark mix: 1200 items, no one-hop questions.
    pub fn default_mix() -> Self {
        use PatternType::*;
        Self(BTreeMap::from([
            (TwoP, 200),
            (ThreeP, 200),
            (TwoI, 200),
            (ThreeI, 200),
            (IP, 50),
            (PI, 50),
            (TwoU, 200),
            (Compare, 100),
        ]))
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn get(&self, p: PatternType) -> usize {
        self.0.get(&p).copied().unwrap_or(0)
    }

    /// Same proportions rescaled to `total` items (largest-remainder rounding,
    /// ties broken in pattern order).
    pub fn scaled(&self, total: usize) -> Self {
        let sum = self.total();
        if sum == 0 {
            return self.clone();
        }
        let mut counts: Vec<(PatternType, usize, usize)> = self
            .0
            .iter()
            .map(|(&p, &c)| (p, c * total / sum, c * total % sum))
            .collect();
        let mut left = total - counts.iter().map(|c| c.1).sum::<usize>();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].2.cmp(&counts[a].2).then(a.cmp(&b)));
        for i in order {
            if left == 0 {
                break;
            }
            counts[i].1 += 1;
            left -= 1;
        }
        Self(counts.into_iter().map(|(p, c, _)| (p, c)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub pattern: PatternType,
    pub question: String,
    /// Gold answer labels; a single verdict string for compare items.
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_questions: Vec<String>,
    #[serde(default)]
    pub hash: String,
    /// The grounded instance the item came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<InstanceRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub items: Vec<BenchmarkItem>,
}

impl Benchmark {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| BenchError::Format {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("benchmark serializes") + "\n"
    }

    pub fn counts(&self) -> BTreeMap<PatternType, usize> {
        let mut out = BTreeMap::new();
        for it in &self.items {
            *out.entry(it.pattern).or_default() += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternShortfall {
    pub pattern: PatternType,
    pub requested: usize,
    pub emitted: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratedBenchmark {
    pub benchmark: Benchmark,
    pub shortfalls: Vec<PatternShortfall>,
    /// Candidates skipped because their hash was in the exclusion set.
    pub excluded: usize,
}

/// [`generate_benchmark_with`] using template questions.
pub fn generate_benchmark(
    kg: &KnowledgeGraph,
    distribution: &Distribution,
    seed: u64,
    exclusions: &HashSet<String>,
) -> Result<GeneratedBenchmark, BenchError> {
    generate_benchmark_with(kg, distribution, seed, exclusions, |inst| {
        verbalize_template(kg, inst).map(Some)
    })
}

/// Grounds each pattern's quota, verbalizes every instance and attaches the
/// gold answer set. Instances whose hash is in `exclusions` are never used;
/// a verbalizer returning `None` skips the instance.
pub fn generate_benchmark_with(
    kg: &KnowledgeGraph,
    distribution: &Distribution,
    seed: u64,
    exclusions: &HashSet<String>,
    mut verbalizer: impl FnMut(&GroundedInstance) -> Result<Option<VerbalizedInstance>, VerbalizeError>,
) -> Result<GeneratedBenchmark, BenchError> {
    if kg.triple_count() == 0 {
        return Err(BenchError::EmptyGraph);
    }
    if distribution.total() == 0 {
        return Err(BenchError::EmptyDistribution);
    }
    let mut items = Vec::new();
    let mut shortfalls = Vec::new();
    let mut excluded = 0;
    for (&pattern, &want) in &distribution.0 {
        if want == 0 {
            continue;
        }
        let cfg = GroundConfig {
            exclude: exclusions.clone(),
            ..GroundConfig::new(want, seed)
        };
        let grounding = ground(kg, pattern, &cfg)?;
        excluded += grounding.excluded;
        let mut emitted = 0;
        for inst in &grounding.instances {
            let Some(v) = verbalizer(inst)? else { continue };
            emitted += 1;
            let id = format!("{pattern}-{emitted:04}");
            // gold is recomputed from the instance, not trusted from the verbalizer
            let gold = answer_set(kg, inst)?.labels(kg);
            if gold.is_empty() || gold != v.gold() {
                return Err(BenchError::GoldMismatch { item: id });
            }
            items.push(BenchmarkItem {
                id,
                pattern,
                question: v.complex_question,
                answers: gold,
                sub_questions: v.sub_questions,
                hash: canonical_hash(kg, inst),
                provenance: Some(v.instance),
            });
        }
        if emitted < want {
            shortfalls.push(PatternShortfall {
                pattern,
                requested: want,
                emitted,
            });
        }
    }
    if items.is_empty() && excluded > 0 {
        return Err(BenchError::AllExcluded);
    }
    Ok(GeneratedBenchmark {
        benchmark: Benchmark { items },
        shortfalls,
        excluded,
    })
}

/// Lowercase, drop punctuation and the articles a/an/the, collapse spaces.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> bool {
    normalize_answer(pred) == normalize_answer(gold)
}

fn normalized_set<S: AsRef<str>>(xs: &[S]) -> BTreeSet<String> {
    xs.iter().map(|s| normalize_answer(s.as_ref())).filter(|s| !s.is_empty()).collect()
}

/// Set precision and recall under [`normalize_answer`]. Both empty scores
/// (1, 1); one side empty scores 0 for the side that has nothing right.
pub fn precision_recall<S: AsRef<str>, T: AsRef<str>>(pred: &[S], gold: &[T]) -> (f64, f64) {
    let p = normalized_set(pred);
    let g = normalized_set(gold);
    match (p.is_empty(), g.is_empty()) {
        (true, true) => (1.0, 1.0),
        (true, false) => (0.0, 0.0),
        (false, true) => (0.0, 1.0),
        (false, false) => {
            let hit = p.intersection(&g).count() as f64;
            (hit / p.len() as f64, hit / g.len() as f64)
        }
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(default)]
    pub answers: Vec<String>,
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, BenchError> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (i, line) in text.as_bytes().lines().enumerate() {
        let line = line.map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchError::Format {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, BenchError> {
    std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub em: f64,
    pub precision: f64,
    pub recall: f64,
}

impl Metrics {
    fn mean(rows: &[&ItemScore]) -> Self {
        if rows.is_empty() {
            return Self::default();
        }
        let n = rows.len() as f64;
        Self {
            count: rows.len(),
            em: rows.iter().map(|r| r.em).sum::<f64>() / n,
            precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
            recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub pattern: PatternType,
    /// 1 when the normalized prediction set equals the gold set.
    pub em: f64,
    pub precision: f64,
    pub recall: f64,
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Metrics,
    pub per_pattern: BTreeMap<PatternType, Metrics>,
    pub items: Vec<ItemScore>,
    pub benchmark_items: usize,
    pub predictions: usize,
    pub missing: usize,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>6} {:>8} {:>10} {:>8}", "pattern", "items", "EM", "precision", "recall");
        let mut row = |name: &str, m: &Metrics| {
            let _ = writeln!(
                out,
                "{name:<8} {:>6} {:>8.4} {:>10.4} {:>8.4}",
                m.count, m.em, m.precision, m.recall
            );
        };
        for (p, m) in &self.per_pattern {
            row(p.name(), m);
        }
        row("overall", &self.overall);
        out
    }
}

/// Scores predictions against the benchmark. Missing predictions count as
/// empty answers; ids not in the benchmark are an error. Compare items are
/// graded by exact match of the verdict, which then stands in for their
/// precision and recall. Aggregates are plain means over items.
pub fn evaluate_run(predictions: &[Prediction], benchmark: &Benchmark) -> Result<EvalReport, BenchError> {
    let known: HashSet<&str> = benchmark.items.iter().map(|i| i.id.as_str()).collect();
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    let mut unknown = Vec::new();
    for p in predictions {
        if !known.contains(p.id.as_str()) {
            unknown.push(p.id.clone());
        } else if by_id.insert(&p.id, p).is_some() {
            return Err(BenchError::DuplicatePrediction(p.id.clone()));
        }
    }
    if !unknown.is_empty() {
        return Err(BenchError::UnknownIds(unknown));
    }
    let items: Vec<ItemScore> = benchmark
        .items
        .iter()
        .map(|item| {
            let pred = by_id.get(item.id.as_str());
            let answers: &[String] = pred.map_or(&[], |p| &p.answers);
            let (em, precision, recall) = if item.pattern == PatternType::Compare {
                let hit = answers.len() == 1 && item.answers.len() == 1 && exact_match(&answers[0], &item.answers[0]);
                let s = if hit { 1.0 } else { 0.0 };
                (s, s, s)
            } else {
                let (p, r) = precision_recall(answers, &item.answers);
                let em = normalized_set(answers) == normalized_set(&item.answers);
                (if em { 1.0 } else { 0.0 }, p, r)
            };
            ItemScore {
                id: item.id.clone(),
                pattern: item.pattern,
                em,
                precision,
                recall,
                missing: pred.is_none(),
            }
        })
        .collect();
    let mut groups: BTreeMap<PatternType, Vec<&ItemScore>> = BTreeMap::new();
    for s in &items {
        groups.entry(s.pattern).or_default().push(s);
    }
    let all: Vec<&ItemScore> = items.iter().collect();
    Ok(EvalReport {
        overall: Metrics::mean(&all),
        per_pattern: groups.iter().map(|(p, rows)| (*p, Metrics::mean(rows))).collect(),
        missing: items.iter().filter(|s| s.missing).count(),
        benchmark_items: benchmark.items.len(),
        predictions: predictions.len(),
        items,
    })
}

/// Token-set Jaccard over lowercased alphanumeric tokens. Two token-less
/// strings are identical (1.0).
pub fn jaccard(a: &str, b: &str) -> f64 {
    let a: HashSet<String> = tokenize(a).into_iter().collect();
    let b: HashSet<String> = tokenize(b).into_iter().collect();
    jaccard_sets(&a, &b)
}

fn jaccard_sets<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

pub const LEAKAGE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageHit {
    /// Index into the benchmark questions.
    pub index: usize,
    pub question: String,
    pub nearest_train: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub threshold: f64,
    /// Indices of benchmark questions kept, ascending.
    pub retained: Vec<usize>,
    pub removed: Vec<LeakageHit>,
}

/// Drops benchmark questions whose highest similarity to any training
/// question is above `threshold`.
pub fn leakage_filter(
    train: &[String],
    bench: &[String],
    similarity: impl Fn(&str, &str) -> f64,
    threshold: f64,
) -> LeakageReport {
    filter_by(bench.len(), threshold, |i| {
        train
            .iter()
            .enumerate()
            .map(|(j, t)| (j, similarity(t, &bench[i])))
            .fold(None, |best: Option<(usize, f64)>, (j, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((j, s)),
            })
    }, |i, j| (bench[i].clone(), train[j].clone()))
}

/// [`leakage_filter`] with [`jaccard`], tokenizing every question once.
pub fn leakage_filter_jaccard(train: &[String], bench: &[String], threshold: f64) -> LeakageReport {
    let mut vocab: HashMap<String, u32> = HashMap::new();
    let mut intern = |q: &str| -> HashSet<u32> {
        tokenize(q)
            .into_iter()
            .map(|t| {
                let next = vocab.len() as u32;
                *vocab.entry(t).or_insert(next)
            })
            .collect()
    };
    let train_sets: Vec<HashSet<u32>> = train.iter().map(|q| intern(q)).collect();
    let bench_sets: Vec<HashSet<u32>> = bench.iter().map(|q| intern(q)).collect();
    filter_by(bench.len(), threshold, |i| {
        let b = &bench_sets[i];
        train_sets
            .iter()
            .enumerate()
            // a score above the threshold needs sizes within that ratio
            .filter(|(_, t)| (t.len().min(b.len()) as f64) >= threshold * t.len().max(b.len()) as f64 || threshold <= 0.0)
            .map(|(j, t)| (j, jaccard_sets(t, b)))
            .fold(None, |best: Option<(usize, f64)>, (j, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((j, s)),
            })
    }, |i, j| (bench[i].clone(), train[j].clone()))
}

fn filter_by(
    n: usize,
    threshold: f64,
    nearest: impl Fn(usize) -> Option<(usize, f64)>,
    texts: impl Fn(usize, usize) -> (String, String),
) -> LeakageReport {
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    for i in 0..n {
        match nearest(i) {
            Some((j, s)) if s > threshold => {
                let (question, nearest_train) = texts(i, j);
                removed.push(LeakageHit {
                    index: i,
                    question,
                    nearest_train,
                    similarity: s,
                });
            }
            _ => retained.push(i),
        }
    }
    LeakageReport {
        threshold,
        retained,
        removed,
    }
}
