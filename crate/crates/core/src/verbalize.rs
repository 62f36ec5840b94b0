//! Turning grounded instances into sub-questions and a complex question,
//! either through a chat model with few-shot prompts or with fixed English
//! frames.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::KnowledgeGraph;
use crate::llm::{ChatEndpoint, EndpointError};
use crate::pattern::{canonical_hash, CompareKind, GroundedInstance, InstanceRecord, PatternError, PatternType};

#[derive(Debug, Error)]
pub enum VerbalizeError {
    #[error("instance refers to unknown {0}")]
    UnknownId(String),
    #[error("instance {instance}: {source}")]
    Endpoint {
        instance: String,
        #[source]
        source: EndpointError,
    },
    #[error("instance {instance}: unusable verbalization: {source}")]
    Parse {
        instance: String,
        #[source]
        source: OutputError,
    },
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("reading prompt {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Why a model's verbalization was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct OutputError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerbalizationSource {
    Llm,
    Template,
}

/// One verbalized instance, one JSONL line. `instance.answers` is the gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalizedInstance {
    pub pattern: PatternType,
    pub sub_questions: Vec<String>,
    pub complex_question: String,
    pub instance: InstanceRecord,
    pub hash: String,
    pub source: VerbalizationSource,
}

impl VerbalizedInstance {
    pub fn gold(&self) -> &[String] {
        &self.instance.answers
    }
}

const BUILTIN_PROMPTS: [(PatternType, &str); 9] = [
    (PatternType::OneP, include_str!("../assets/verbalize/1p.txt")),
    (PatternType::TwoP, include_str!("../assets/verbalize/2p.txt")),
    (PatternType::ThreeP, include_str!("../assets/verbalize/3p.txt")),
    (PatternType::TwoI, include_str!("../assets/verbalize/2i.txt")),
    (PatternType::ThreeI, include_str!("../assets/verbalize/3i.txt")),
    (PatternType::TwoU, include_str!("../assets/verbalize/2u.txt")),
    (PatternType::IP, include_str!("../assets/verbalize/ip.txt")),
    (PatternType::PI, include_str!("../assets/verbalize/pi.txt")),
    (PatternType::Compare, include_str!("../assets/verbalize/compare.txt")),
];

/// Few-shot prompt per pattern; the serialized instance is appended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbalizationPromptSet {
    prompts: BTreeMap<PatternType, String>,
}

impl Default for VerbalizationPromptSet {
    fn default() -> Self {
        Self {
            prompts: BUILTIN_PROMPTS
                .iter()
                .map(|(p, text)| (*p, text.trim_end_matches('\n').to_string()))
                .collect(),
        }
    }
}

impl VerbalizationPromptSet {
    /// Built-in prompts, overridden by any `<pattern>.txt` present in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, VerbalizeError> {
        let mut set = Self::default();
        for p in PatternType::ALL {
            let path = dir.join(format!("{}.txt", p.name()));
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    set.prompts.insert(p, text.trim_end_matches('\n').to_string());
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(source) => {
                    return Err(VerbalizeError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                }
            }
        }
        Ok(set)
    }

    pub fn get(&self, pattern: PatternType) -> &str {
        &self.prompts[&pattern]
    }
}

fn check_ids(kg: &KnowledgeGraph, inst: &GroundedInstance) -> Result<(), VerbalizeError> {
    for e in inst.anchors() {
        if !kg.contains_entity(e) {
            return Err(VerbalizeError::UnknownId(format!("entity #{}", e.0)));
        }
    }
    for r in inst.relations() {
        if !kg.contains_relation(r) {
            return Err(VerbalizeError::UnknownId(format!("relation #{}", r.0)));
        }
    }
    if let GroundedInstance::Compare { first, second, .. } = inst {
        for f in [first, second] {
            if f.literal.0 as usize >= kg.literal_count() {
                return Err(VerbalizeError::UnknownId(format!("literal #{}", f.literal.0)));
            }
        }
    }
    Ok(())
}

/// Labelled query notation used in the prompts, e.g. `(h, (r1, r2))` or
/// `(h1, (r1,)) Intersection (h2, (r2,))`.
pub fn serialize_instance(kg: &KnowledgeGraph, inst: &GroundedInstance) -> Result<String, VerbalizeError> {
    check_ids(kg, inst)?;
    let e = |id| kg.entity_label(id);
    let r = |id| kg.relation_label(id);
    let hop = |h, rel| format!("({}, ({},))", e(h), r(rel));
    let branches = |bs: &[crate::pattern::Branch], op: &str| {
        bs.iter()
            .map(|b| hop(b.anchor, b.relation))
            .collect::<Vec<_>>()
            .join(&format!(" {op} "))
    };
    Ok(match inst {
        GroundedInstance::OneP { anchor, relation } => hop(*anchor, *relation),
        GroundedInstance::TwoP { anchor, relations } => {
            format!("({}, ({}, {}))", e(*anchor), r(relations[0]), r(relations[1]))
        }
        GroundedInstance::ThreeP { anchor, relations } => format!(
            "({}, ({}, {}, {}))",
            e(*anchor),
            r(relations[0]),
            r(relations[1]),
            r(relations[2])
        ),
        GroundedInstance::TwoI { branches: bs } => branches(bs, "Intersection"),
        GroundedInstance::ThreeI { branches: bs } => branches(bs, "Intersection"),
        GroundedInstance::TwoU { branches: bs } => branches(bs, "Union"),
        GroundedInstance::IP { branches: bs, projection } => {
            format!("{} Projection {}", branches(bs, "Intersection"), r(*projection))
        }
        GroundedInstance::PI { anchor, path, branch } => format!(
            "({}, ({}, {})) Intersection {}",
            e(*anchor),
            r(path[0]),
            r(path[1]),
            hop(branch.anchor, branch.relation)
        ),
        GroundedInstance::Compare {
            relation,
            first,
            second,
            kind,
        } => format!(
            "Triple 1:({}, {}, {})\nTriple 2:({}, {}, {})\nComparison Type: {}",
            e(first.entity),
            r(*relation),
            kg.literal(first.literal).text,
            e(second.entity),
            r(*relation),
            kg.literal(second.literal).text,
            kind
        ),
    })
}

/// Prompt for one instance: the pattern's few-shot prompt followed by the
/// serialized instance.
pub fn render_verbalization_prompt(
    kg: &KnowledgeGraph,
    inst: &GroundedInstance,
    prompts: &VerbalizationPromptSet,
) -> Result<String, VerbalizeError> {
    let query = serialize_instance(kg, inst)?;
    let head = prompts.get(inst.pattern());
    // "Subgraph Query:" lead-ins take the query inline; anything else gets its own line
    let sep = if head.ends_with("Query:") || head.ends_with(' ') || head.is_empty() {
        ""
    } else {
        "\n"
    };
    Ok(format!("{head}{sep}{query}"))
}

/// Placeholders each sub-question slot must carry, by 0-based slot.
pub fn required_placeholders(pattern: PatternType, slot: usize) -> &'static [&'static str] {
    match (pattern, slot) {
        (PatternType::TwoP | PatternType::ThreeP | PatternType::PI, 1) => &["A1"],
        (PatternType::ThreeP, 2) => &["A2"],
        (PatternType::IP, 2) => &["Inter_A"],
        _ => &[],
    }
}

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());
static BARE_PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{?\b(A[1-3]|Inter_A)\b\}?").unwrap());

/// Checks that every slot carries exactly the placeholders the pattern allows.
pub fn check_placeholders(pattern: PatternType, sub_questions: &[String]) -> Result<(), OutputError> {
    for (slot, q) in sub_questions.iter().enumerate() {
        let want = required_placeholders(pattern, slot);
        for cap in PLACEHOLDER.captures_iter(q) {
            let name = &cap[1];
            if !want.contains(&name) {
                return Err(OutputError(format!("Q{} may not use placeholder {{{name}}}", slot + 1)));
            }
        }
        for name in want {
            if !q.contains(&format!("{{{name}}}")) {
                return Err(OutputError(format!("Q{} must refer to {{{name}}}", slot + 1)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedVerbalization {
    pub sub_questions: Vec<String>,
    pub complex_question: String,
    /// The `Answer:` line of compare outputs, if any.
    pub answer: Option<String>,
}

static LABELLED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:[-*]\s+)?\**\s*(Q(\d+)|Final Question|Natural Language Question|Answer)\s*\**\s*:\s*\**\s*(.*?)\s*\**\s*$")
        .unwrap()
});

/// Extracts `Q1..Qk` and `Final Question` lines from model output. Other
/// lines, including answer markers like `Q1_Answer:` and `Final Answer:`, are
/// ignored. Bare `A1`/`A2`/`Inter_A` in placeholder slots become `{A1}` etc.
pub fn parse_verbalization_output(text: &str, pattern: PatternType) -> Result<ParsedVerbalization, OutputError> {
    if text.trim().is_empty() {
        return Err(OutputError("empty output".into()));
    }
    let mut qs: BTreeMap<usize, String> = BTreeMap::new();
    let mut fin = None;
    let mut natural = None;
    let mut answer = None;
    for line in text.lines() {
        let Some(cap) = LABELLED.captures(line) else { continue };
        let value = cap[3].to_string();
        if value.is_empty() {
            continue;
        }
        let label = cap[1].to_ascii_lowercase();
        if let Some(n) = cap.get(2) {
            let n: usize = n.as_str().parse().unwrap_or(0);
            if n == 0 || n > pattern.arity() {
                return Err(OutputError(format!(
                    "found Q{n} but {pattern} has {} sub-questions",
                    pattern.arity()
                )));
            }
            qs.entry(n).or_insert(value);
        } else if label == "final question" {
            fin.get_or_insert(value);
        } else if label == "natural language question" {
            natural.get_or_insert(value);
        } else {
            answer.get_or_insert(value);
        }
    }

    if pattern == PatternType::OneP && qs.is_empty() {
        let q = natural
            .or_else(|| fin.clone())
            .or_else(|| text.lines().map(str::trim).find(|l| !l.is_empty() && !LABELLED.is_match(l)).map(str::to_string))
            .ok_or_else(|| OutputError("no question found".into()))?;
        qs.insert(1, q);
    }
    if qs.len() != pattern.arity() {
        return Err(OutputError(format!(
            "{pattern} needs {} sub-questions, found {}",
            pattern.arity(),
            qs.len()
        )));
    }
    let mut sub_questions: Vec<String> = qs.into_values().collect();
    let complex_question = match fin {
        Some(f) => f,
        None if pattern == PatternType::OneP => sub_questions[0].clone(),
        None => return Err(OutputError("missing Final Question line".into())),
    };
    for (slot, q) in sub_questions.iter_mut().enumerate() {
        if !required_placeholders(pattern, slot).is_empty() {
            *q = BARE_PLACEHOLDER.replace_all(q, "{$1}").into_owned();
        }
    }
    check_placeholders(pattern, &sub_questions)?;
    Ok(ParsedVerbalization {
        sub_questions,
        complex_question,
        answer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Use the template verbalizer.
    Template,
    /// Drop the instance.
    Skip,
    /// Fail the run.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerbalizeConfig {
    /// Extra model calls when the output cannot be parsed.
    pub retries: u32,
    pub fallback: Fallback,
}

impl Default for VerbalizeConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            fallback: Fallback::Template,
        }
    }
}

fn assemble(
    kg: &KnowledgeGraph,
    inst: &GroundedInstance,
    sub_questions: Vec<String>,
    complex_question: String,
    source: VerbalizationSource,
) -> Result<VerbalizedInstance, VerbalizeError> {
    Ok(VerbalizedInstance {
        pattern: inst.pattern(),
        sub_questions,
        complex_question,
        instance: InstanceRecord::from_instance(kg, inst)?,
        hash: canonical_hash(kg, inst),
        source,
    })
}

/// Model-backed verbalization. Returns `Ok(None)` when the output stays
/// unusable and the fallback is [`Fallback::Skip`].
pub fn verbalize(
    kg: &KnowledgeGraph,
    inst: &GroundedInstance,
    endpoint: &dyn ChatEndpoint,
    prompts: &VerbalizationPromptSet,
    config: &VerbalizeConfig,
) -> Result<Option<VerbalizedInstance>, VerbalizeError> {
    let prompt = render_verbalization_prompt(kg, inst, prompts)?;
    let hash = canonical_hash(kg, inst);
    let mut last = OutputError("no attempt".into());
    for attempt in 0..=config.retries {
        let reply = endpoint.complete(&prompt).map_err(|source| VerbalizeError::Endpoint {
            instance: hash.clone(),
            source,
        })?;
        match parse_verbalization_output(&reply, inst.pattern()) {
            Ok(p) => {
                return assemble(kg, inst, p.sub_questions, p.complex_question, VerbalizationSource::Llm).map(Some)
            }
            Err(e) => {
                tracing::debug!(attempt, instance = %hash, error = %e, "unusable verbalization");
                last = e;
            }
        }
    }
    match config.fallback {
        Fallback::Template => verbalize_template(kg, inst).map(Some),
        Fallback::Skip => Ok(None),
        Fallback::Error => Err(VerbalizeError::Parse {
            instance: hash,
            source: last,
        }),
    }
}

/// Deterministic verbalization with fixed English frames.
pub fn verbalize_template(kg: &KnowledgeGraph, inst: &GroundedInstance) -> Result<VerbalizedInstance, VerbalizeError> {
    check_ids(kg, inst)?;
    let e = |id| kg.entity_label(id);
    let r = |id| kg.relation_label(id);
    let what = |rel, of: &str| format!("What is the {} of {of}?", r(rel));
    let (subs, fin) = match *inst {
        GroundedInstance::OneP { anchor, relation } => {
            let q = what(relation, e(anchor));
            (vec![q.clone()], q)
        }
        GroundedInstance::TwoP { anchor, relations: [r1, r2] } => (
            vec![what(r1, e(anchor)), what(r2, "{A1}")],
            format!("What is the {} of the {} of {}?", r(r2), r(r1), e(anchor)),
        ),
        GroundedInstance::ThreeP {
            anchor,
            relations: [r1, r2, r3],
        } => (
            vec![what(r1, e(anchor)), what(r2, "{A1}"), what(r3, "{A2}")],
            format!("What is the {} of the {} of the {} of {}?", r(r3), r(r2), r(r1), e(anchor)),
        ),
        GroundedInstance::TwoI { branches: [a, b] } => (
            vec![what(a.relation, e(a.anchor)), what(b.relation, e(b.anchor))],
            format!(
                "What is both the {} of {} and the {} of {}?",
                r(a.relation),
                e(a.anchor),
                r(b.relation),
                e(b.anchor)
            ),
        ),
        GroundedInstance::ThreeI { branches: [a, b, c] } => (
            vec![
                what(a.relation, e(a.anchor)),
                what(b.relation, e(b.anchor)),
                what(c.relation, e(c.anchor)),
            ],
            format!(
                "What is the {} of {}, the {} of {} and the {} of {} at the same time?",
                r(a.relation),
                e(a.anchor),
                r(b.relation),
                e(b.anchor),
                r(c.relation),
                e(c.anchor)
            ),
        ),
        GroundedInstance::TwoU { branches: [a, b] } => (
            vec![what(a.relation, e(a.anchor)), what(b.relation, e(b.anchor))],
            format!(
                "What is the {} of {} or the {} of {}?",
                r(a.relation),
                e(a.anchor),
                r(b.relation),
                e(b.anchor)
            ),
        ),
        GroundedInstance::IP {
            branches: [a, b],
            projection,
        } => (
            vec![
                what(a.relation, e(a.anchor)),
                what(b.relation, e(b.anchor)),
                what(projection, "{Inter_A}"),
            ],
            format!(
                "What is the {} of what is both the {} of {} and the {} of {}?",
                r(projection),
                r(a.relation),
                e(a.anchor),
                r(b.relation),
                e(b.anchor)
            ),
        ),
        GroundedInstance::PI {
            anchor,
            path: [r1, r2],
            branch,
        } => (
            vec![
                what(r1, e(anchor)),
                what(r2, "{A1}"),
                what(branch.relation, e(branch.anchor)),
            ],
            format!(
                "What is both the {} of the {} of {} and the {} of {}?",
                r(r2),
                r(r1),
                e(anchor),
                r(branch.relation),
                e(branch.anchor)
            ),
        ),
        GroundedInstance::Compare {
            relation,
            first,
            second,
            kind,
        } => {
            let (l1, l2) = (e(first.entity), e(second.entity));
            let rel = r(relation);
            let fin = match kind {
                CompareKind::Same => format!("Is the {rel} of {l1} the same as the {rel} of {l2}?"),
                CompareKind::Lesser => format!("Which has the lesser {rel}, {l1} or {l2}?"),
                CompareKind::Greater => format!("Which has the greater {rel}, {l1} or {l2}?"),
            };
            (vec![what(relation, l1), what(relation, l2)], fin)
        }
    };
    assemble(kg, inst, subs, fin, VerbalizationSource::Template)
}

/// Renders a verbalization in the model output format, so template output can
/// be fed back through [`parse_verbalization_output`].
pub fn format_verbalization(v: &VerbalizedInstance) -> String {
    let mut out = String::new();
    for (i, q) in v.sub_questions.iter().enumerate() {
        out.push_str(&format!("Q{}: {q}\n", i + 1));
    }
    out.push_str(&format!("Final Question: {}\n", v.complex_question));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, KgFormat, RelationId};
    use crate::pattern::enumerate_instances;

    fn toy() -> KnowledgeGraph {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy50.tsv");
        KnowledgeGraph::load(&path, KgFormat::Tsv).unwrap()
    }

    const CHONGQING_OUTPUT: &str = "Q1: Which city or administrative body that is twinned with Chongqing?\n\
        Q1_Answer: A1\nQ2: What is the country of {A1}?\nQ2_Answer: A2\n\
        Final Question: Which country has a city or administrative body that is twinned with Chongqing?\n";

    fn chongqing(kg: &KnowledgeGraph) -> GroundedInstance {
        GroundedInstance::TwoP {
            anchor: kg.entity("Chongqing").unwrap(),
            relations: [
                kg.relation("twinned administrative body").unwrap(),
                kg.relation("country of citizenship").unwrap(),
            ],
        }
    }

    #[test]
    fn serializations() {
        let kg = toy();
        let booker = GroundedInstance::OneP {
            anchor: kg.entity("Booker T. Jones").unwrap(),
            relation: kg.relation("ethnic group").unwrap(),
        };
        assert_eq!(serialize_instance(&kg, &booker).unwrap(), "(Booker T. Jones, (ethnic group,))");
        let prompt = render_verbalization_prompt(&kg, &chongqing(&kg), &VerbalizationPromptSet::default()).unwrap();
        assert!(prompt.ends_with("Subgraph Query:(Chongqing, (twinned administrative body, country of citizenship))"));
        assert!(prompt.contains("Q1_Answer:") && prompt.contains("Final Question:"));
        let cmp = enumerate_instances(&kg, PatternType::Compare, 1)[0];
        let prompt = render_verbalization_prompt(&kg, &cmp, &VerbalizationPromptSet::default()).unwrap();
        assert!(prompt.contains("nothing else):\nTriple 1:("), "{prompt}");
    }

    #[test]
    fn unknown_id_fails_before_the_endpoint() {
        let kg = toy();
        let bad = GroundedInstance::OneP {
            anchor: EntityId(9999),
            relation: RelationId(0),
        };
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let ep = |_: &str| -> Result<String, EndpointError> {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(String::new())
        };
        let err = verbalize(&kg, &bad, &ep, &VerbalizationPromptSet::default(), &VerbalizeConfig::default()).unwrap_err();
        assert!(matches!(err, VerbalizeError::UnknownId(_)));
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 0);
    }

    #[test]
    fn parses_the_chongqing_demonstration() {
        let p = parse_verbalization_output(CHONGQING_OUTPUT, PatternType::TwoP).unwrap();
        assert_eq!(
            p.sub_questions,
            vec![
                "Which city or administrative body that is twinned with Chongqing?",
                "What is the country of {A1}?"
            ]
        );
        assert_eq!(
            p.complex_question,
            "Which country has a city or administrative body that is twinned with Chongqing?"
        );
    }

    #[test]
    fn echo_endpoint_yields_the_chongqing_instance() {
        let kg = toy();
        let ep = |_: &str| -> Result<String, EndpointError> { Ok(format!("Sure.\n{CHONGQING_OUTPUT}")) };
        let v = verbalize(&kg, &chongqing(&kg), &ep, &VerbalizationPromptSet::default(), &VerbalizeConfig::default())
            .unwrap()
            .unwrap();
        assert_eq!(v.source, VerbalizationSource::Llm);
        assert_eq!(v.sub_questions[1], "What is the country of {A1}?");
        assert_eq!(v.gold(), ["Canada", "United States"]);
    }

    #[test]
    fn placeholder_spellings_normalize() {
        let out = "Q1: Who is the first President of Namibia?\nQ2: Who succeeded A1?\nFinal Question: Who succeeded the first President of Namibia?";
        let p = parse_verbalization_output(out, PatternType::TwoP).unwrap();
        assert_eq!(p.sub_questions[1], "Who succeeded {A1}?");
        let bad = "Q1: Who is {A1}?\nQ2: Who succeeded {A1}?\nFinal Question: x";
        assert!(parse_verbalization_output(bad, PatternType::TwoP).is_err());
        let missing = "Q1: Who?\nQ2: Who succeeded him?\nFinal Question: x";
        assert!(parse_verbalization_output(missing, PatternType::TwoP).is_err());
    }

    #[test]
    fn structural_errors() {
        let no_final = CHONGQING_OUTPUT.lines().take(4).collect::<Vec<_>>().join("\n");
        assert_eq!(
            parse_verbalization_output(&no_final, PatternType::TwoP).unwrap_err().0,
            "missing Final Question line"
        );
        assert!(parse_verbalization_output(CHONGQING_OUTPUT, PatternType::ThreeP).is_err());
        assert!(parse_verbalization_output(CHONGQING_OUTPUT, PatternType::OneP).is_err());
        assert!(parse_verbalization_output("", PatternType::OneP).is_err());
    }

    #[test]
    fn one_p_accepts_a_bare_question() {
        let p = parse_verbalization_output("What is the ethnic group of Booker T. Jones?\n", PatternType::OneP).unwrap();
        assert_eq!(p.complex_question, "What is the ethnic group of Booker T. Jones?");
        let p = parse_verbalization_output(
            "Natural Language Question: What is the ethnic group of Booker T. Jones?",
            PatternType::OneP,
        )
        .unwrap();
        assert_eq!(p.sub_questions, vec!["What is the ethnic group of Booker T. Jones?"]);
    }

    #[test]
    fn pi_trailing_final_answer_is_ignored() {
        let out = "Q1: What is the birthplace of Drake Bell?\nQ1_Answer: A1\nQ2: Which areas border with {A1}?\n\
                   Q2_Answer: A2\nQ3: Which areas border with Santa Ana?\nQ3_Answer: A3\n\
                   Final Question: Which regions border Drake Bell's birthplace and Santa Ana at the same time?\n\
                   Final Answer: A2 Intersection A3";
        let p = parse_verbalization_output(out, PatternType::PI).unwrap();
        assert_eq!(p.sub_questions.len(), 3);
    }

    #[test]
    fn empty_reply_without_retries_is_an_error_naming_the_instance() {
        let kg = toy();
        let inst = chongqing(&kg);
        let ep = |_: &str| -> Result<String, EndpointError> { Ok(String::new()) };
        let cfg = VerbalizeConfig {
            retries: 0,
            fallback: Fallback::Error,
        };
        let err = verbalize(&kg, &inst, &ep, &VerbalizationPromptSet::default(), &cfg).unwrap_err();
        assert!(err.to_string().contains(&canonical_hash(&kg, &inst)), "{err}");
        let skip = VerbalizeConfig {
            retries: 1,
            fallback: Fallback::Skip,
        };
        assert!(verbalize(&kg, &inst, &ep, &VerbalizationPromptSet::default(), &skip).unwrap().is_none());
        let tmpl = verbalize(&kg, &inst, &ep, &VerbalizationPromptSet::default(), &VerbalizeConfig::default())
            .unwrap()
            .unwrap();
        assert_eq!(tmpl.source, VerbalizationSource::Template);
    }

    #[test]
    fn booker_template() {
        let kg = toy();
        let inst = GroundedInstance::OneP {
            anchor: kg.entity("Booker T. Jones").unwrap(),
            relation: kg.relation("ethnic group").unwrap(),
        };
        let v = verbalize_template(&kg, &inst).unwrap();
        assert_eq!(v.complex_question, "What is the ethnic group of Booker T. Jones?");
        assert_eq!(v.sub_questions, vec!["What is the ethnic group of Booker T. Jones?"]);
    }

    #[test]
    fn template_output_round_trips_for_every_pattern() {
        let kg = toy();
        for p in PatternType::ALL {
            for inst in enumerate_instances(&kg, p, usize::MAX).iter().take(100) {
                let v = verbalize_template(&kg, inst).unwrap();
                assert_eq!(v.sub_questions.len(), p.arity());
                let back = parse_verbalization_output(&format_verbalization(&v), p).unwrap();
                assert_eq!(back.sub_questions, v.sub_questions);
                assert_eq!(back.complex_question, v.complex_question);
            }
        }
    }

    #[test]
    fn prompt_override_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("1p.txt"), "Q:").unwrap();
        let set = VerbalizationPromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.get(PatternType::OneP), "Q:");
        assert_eq!(set.get(PatternType::TwoP), VerbalizationPromptSet::default().get(PatternType::TwoP));
    }
}
