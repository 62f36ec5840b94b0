//! Planning training data: sub-questions filled into per-pattern plan
//! templates (the output y) paired with the code-formatted prompt plus the
//! complex question (the input x).

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{self, quote, quote_fstring, FPart};
use crate::pattern::PatternType;
use crate::verbalize::{check_placeholders, OutputError, VerbalizedInstance};

#[derive(Debug, Error)]
pub enum PlanDataError {
    #[error("{pattern} takes {expected} sub-questions, got {found}")]
    Arity {
        pattern: PatternType,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Placeholder(#[from] OutputError),
    #[error("filled {pattern} template does not validate: {message}")]
    Internal { pattern: PatternType, message: String },
    #[error("quota must be at least 1")]
    ZeroQuota,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Comment line naming the question type at the top of each plan.
pub fn question_type(pattern: PatternType) -> &'static str {
    match pattern {
        PatternType::OneP => "One Projection",
        PatternType::TwoP => "Two Projection",
        PatternType::ThreeP => "Three Projection",
        PatternType::TwoI => "Two Intersection",
        PatternType::ThreeI => "Three Intersection",
        PatternType::TwoU => "Two Union",
        PatternType::IP => "Intersection Projection",
        PatternType::PI => "Projection Intersection",
        PatternType::Compare => "Comparison",
    }
}

/// Plan variable a verbalization placeholder refers to.
fn placeholder_var(name: &str) -> Option<&'static str> {
    match name {
        "A1" => Some("Ans_1"),
        "A2" => Some("Ans_2"),
        "Inter_A" => Some("Inter_A"),
        _ => None,
    }
}

/// Source form of a sub-question: a plain string, or an f-string when it
/// carries placeholders.
fn sub_question_literal(q: &str) -> String {
    let mut parts = Vec::new();
    let mut rest = q;
    while let Some(start) = rest.find('{') {
        let var = rest[start + 1..]
            .find('}')
            .and_then(|end| placeholder_var(&rest[start + 1..start + 1 + end]).map(|v| (v, end)));
        match var {
            Some((v, end)) => {
                if start > 0 {
                    parts.push(FPart::Text(rest[..start].to_string()));
                }
                parts.push(FPart::Var(v.to_string()));
                rest = &rest[start + end + 2..];
            }
            None => {
                parts.push(FPart::Text(rest[..=start].to_string()));
                rest = &rest[start + 1..];
            }
        }
    }
    if !rest.is_empty() {
        parts.push(FPart::Text(rest.to_string()));
    }
    if parts.iter().any(|p| matches!(p, FPart::Var(_))) {
        quote_fstring(&parts)
    } else {
        quote(q)
    }
}

#[derive(Clone, Copy)]
enum Hop {
    Atomic,
    First,
    Follow,
    Branch,
    Compare,
    AfterIntersection,
}

struct Plan {
    text: String,
}

impl Plan {
    fn new(pattern: PatternType) -> Self {
        Self {
            text: format!(
                "### Question Type: {}\n### Decompose the original question into sub-questions.\n",
                question_type(pattern)
            ),
        }
    }

    fn hop(&mut self, n: usize, q: &str, kind: Hop) {
        let thought = match kind {
            Hop::Atomic => "A single-hop question; search for it directly.".to_string(),
            Hop::First => format!("First I need to answer: {q}"),
            Hop::Follow => format!("With the previous answer filled in, I next need to answer: {q}"),
            Hop::Branch => format!("One condition of the question requires answering: {q}"),
            Hop::Compare => format!("To make the comparison I need to answer: {q}"),
            Hop::AfterIntersection => format!("With the shared answers filled in, I next need to answer: {q}"),
        };
        self.text.push_str(&format!(
            "\nThought{n}: str = {}\nSub_Question_{n}: str = {}\n\
             Info_{n}: str = Search(query = Sub_Question_{n}, thought = Thought{n})\n\
             Ans_{n}: str = Get_Answer(query = Sub_Question_{n}, info = Info_{n})\n",
            quote(&thought),
            sub_question_literal(q)
        ));
    }

    fn step(&mut self, comment: &str, line: &str) {
        self.text.push_str(&format!("\n### {comment}\n{line}\n"));
    }

    fn finish(mut self, var: &str) -> String {
        self.text
            .push_str(&format!("\nFinal_Answer: str = Finish_The_Plan(Answer = {var})\n"));
        self.text
    }
}

/// Fills the pattern's plan template with verbalized sub-questions. Canonical
/// placeholders `{A1}`, `{A2}` and `{Inter_A}` become f-string references to
/// `Ans_1`, `Ans_2` and `Inter_A`.
pub fn fill_template(pattern: PatternType, sub_questions: &[String]) -> Result<String, PlanDataError> {
    if sub_questions.len() != pattern.arity() {
        return Err(PlanDataError::Arity {
            pattern,
            expected: pattern.arity(),
            found: sub_questions.len(),
        });
    }
    check_placeholders(pattern, sub_questions)?;
    let q = |i: usize| sub_questions[i].as_str();
    let mut p = Plan::new(pattern);
    let text = match pattern {
        PatternType::OneP => {
            p.hop(1, q(0), Hop::Atomic);
            p.finish("Ans_1")
        }
        PatternType::TwoP => {
            p.hop(1, q(0), Hop::First);
            p.hop(2, q(1), Hop::Follow);
            p.finish("Ans_2")
        }
        PatternType::ThreeP => {
            p.hop(1, q(0), Hop::First);
            p.hop(2, q(1), Hop::Follow);
            p.hop(3, q(2), Hop::Follow);
            p.finish("Ans_3")
        }
        PatternType::TwoI => {
            p.hop(1, q(0), Hop::Branch);
            p.hop(2, q(1), Hop::Branch);
            p.step(
                "Intersect the two answer sets.",
                "Inter_Ans: str = Intersection(Answer1 = Ans_1, Answer2 = Ans_2)",
            );
            p.finish("Inter_Ans")
        }
        PatternType::ThreeI => {
            p.hop(1, q(0), Hop::Branch);
            p.hop(2, q(1), Hop::Branch);
            p.hop(3, q(2), Hop::Branch);
            p.step(
                "Intersect the first two answer sets.",
                "Inter_Ans_1: str = Intersection(Answer1 = Ans_1, Answer2 = Ans_2)",
            );
            p.step(
                "Intersect with the third answer set.",
                "Inter_Ans_2: str = Intersection(Answer1 = Inter_Ans_1, Answer2 = Ans_3)",
            );
            p.finish("Inter_Ans_2")
        }
        PatternType::TwoU => {
            p.hop(1, q(0), Hop::Branch);
            p.hop(2, q(1), Hop::Branch);
            p.step(
                "Merge the two answer sets.",
                "Union_Ans: str = Union(Answer1 = Ans_1, Answer2 = Ans_2)",
            );
            p.finish("Union_Ans")
        }
        PatternType::IP => {
            p.hop(1, q(0), Hop::Branch);
            p.hop(2, q(1), Hop::Branch);
            p.step(
                "Intersect the two answer sets.",
                "Inter_A: str = Intersection(Answer1 = Ans_1, Answer2 = Ans_2)",
            );
            p.hop(3, q(2), Hop::AfterIntersection);
            p.finish("Ans_3")
        }
        PatternType::PI => {
            p.hop(1, q(0), Hop::First);
            p.hop(2, q(1), Hop::Follow);
            p.hop(3, q(2), Hop::Branch);
            p.step(
                "Intersect the path answers with the other condition.",
                "Inter_Ans: str = Intersection(Answer1 = Ans_2, Answer2 = Ans_3)",
            );
            p.finish("Inter_Ans")
        }
        PatternType::Compare => {
            p.hop(1, q(0), Hop::Compare);
            p.hop(2, q(1), Hop::Compare);
            p.step(
                "Compare the two answers.",
                "Ans_3: str = Compare(Original_Query = Original_Question, Subquestions = [Sub_Question_1, Sub_Question_2], Answers = [Ans_1, Ans_2])",
            );
            p.finish("Ans_3")
        }
    };
    check_plan(pattern, &text)?;
    Ok(text)
}

/// Parses and validates a plan, demanding zero diagnostics of any severity.
fn check_plan(pattern: PatternType, text: &str) -> Result<(), PlanDataError> {
    let program = dsl::parse_plan(text).map_err(|e| PlanDataError::Internal {
        pattern,
        message: e.to_string(),
    })?;
    if let Some(d) = dsl::validate(&program).first() {
        return Err(PlanDataError::Internal {
            pattern,
            message: d.to_string(),
        });
    }
    Ok(())
}

/// x = instruction ∥ demonstrations ∥ question, with the question written as
/// the string literal completing `Original_Question: str = `.
pub fn build_input(instruction: &str, demos: &str, question: &str) -> String {
    format!("{instruction}{demos}{}", quote(question))
}

/// The planner prompt: code-formatted instruction and demonstrations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanningPrompt {
    pub instruction: String,
    pub demos: String,
}

impl Default for PlanningPrompt {
    fn default() -> Self {
        Self {
            instruction: include_str!("../assets/plan/instruction.txt").to_string(),
            demos: include_str!("../assets/plan/demos.txt").to_string(),
        }
    }
}

impl PlanningPrompt {
    /// Built-in assets, overridden by `instruction.txt` / `demos.txt` in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PlanDataError> {
        let mut p = Self::default();
        for (name, slot) in [("instruction.txt", &mut p.instruction), ("demos.txt", &mut p.demos)] {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(text) => *slot = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => {
                    return Err(PlanDataError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                }
            }
        }
        Ok(p)
    }

    pub fn input_for(&self, question: &str) -> String {
        build_input(&self.instruction, &self.demos, question)
    }
}

/// One line of the training JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub input: String,
    pub output: String,
    pub pattern: PatternType,
    /// Canonical hash of the source instance.
    pub instance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaLine {
    pub pattern: PatternType,
    pub quota: usize,
    pub available: usize,
    pub emitted: usize,
}

impl QuotaLine {
    pub fn shortfall(&self) -> usize {
        self.quota - self.emitted
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    pub examples: Vec<TrainingExample>,
    pub report: Vec<QuotaLine>,
}

impl TrainingSet {
    pub fn write_jsonl(&self, path: &Path) -> Result<(), PlanDataError> {
        let io = |source| PlanDataError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for ex in &self.examples {
            serde_json::to_writer(&mut w, ex).expect("training example serializes");
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn has_shortfall(&self) -> bool {
        self.report.iter().any(|l| l.shortfall() > 0)
    }
}

/// Takes up to `quota` instances per pattern, in pattern order and then input
/// order, skipping repeated instance hashes.
pub fn build_training_set(
    instances: &[VerbalizedInstance],
    quota: usize,
    prompt: &PlanningPrompt,
) -> Result<TrainingSet, PlanDataError> {
    if quota == 0 {
        return Err(PlanDataError::ZeroQuota);
    }
    let mut examples = Vec::new();
    let mut report = Vec::new();
    for pattern in PatternType::ALL {
        let mut seen = HashSet::new();
        let pool: Vec<&VerbalizedInstance> = instances
            .iter()
            .filter(|v| v.pattern == pattern && seen.insert(v.hash.as_str()))
            .collect();
        let take = pool.len().min(quota);
        for v in &pool[..take] {
            examples.push(TrainingExample {
                input: prompt.input_for(&v.complex_question),
                output: fill_template(pattern, &v.sub_questions)?,
                pattern,
                instance: v.hash.clone(),
            });
        }
        if take < quota {
            tracing::warn!(%pattern, quota, available = pool.len(), "training quota not met");
        }
        report.push(QuotaLine {
            pattern,
            quota,
            available: pool.len(),
            emitted: take,
        });
    }
    Ok(TrainingSet { examples, report })
}
