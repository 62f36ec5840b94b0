use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::answers::AnswerList;
use crate::kg::{parse_leading_decimal, EntityId, KnowledgeGraph, NodeRef, RelationId};
use crate::llm::{ChatEndpoint, EndpointError};
use crate::pattern::{compare_verdict, CompareKind};

pub const QA_PROMPT: &str = include_str!("../../assets/qa/prompt.txt");

const QUESTION_MARK: &str = "### Question:\n";
const ANSWER_MARK: &str = "\n### Your Answer:";
const INFO_MARK: &str = "### Information\n";

/// Fills `{info}` and `{question}` in one pass, so braces inside retrieved
/// text are never treated as slots.
pub fn fill_slots(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        for (name, value) in slots {
            let tag = format!("{{{name}}}");
            if rest[open..].starts_with(&tag) {
                out.push_str(&rest[..open]);
                out.push_str(value);
                rest = &rest[open + tag.len()..];
                continue 'scan;
            }
        }
        out.push_str(&rest[..=open]);
        rest = &rest[open + 1..];
    }
    out.push_str(rest);
    out
}

pub fn render_qa_prompt(template: &str, question: &str, info: &str) -> String {
    fill_slots(template, &[("info", info), ("question", question)])
}

/// The question and information sections of a rendered QA prompt.
pub fn prompt_sections(prompt: &str) -> Option<(&str, &str)> {
    let q0 = prompt.rfind(QUESTION_MARK)? + QUESTION_MARK.len();
    let q1 = q0 + prompt[q0..].find(ANSWER_MARK)?;
    let info = match prompt[..q0].find(INFO_MARK) {
        Some(i0) => prompt[i0 + INFO_MARK.len()..q0 - QUESTION_MARK.len()].trim(),
        None => "",
    };
    Some((prompt[q0..q1].trim(), info))
}

static SAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^Is the (.+) of (.+) the same as the (.+) of (.+)\?$").unwrap());
static EXTREME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^Which has the (lesser|greater) (.+), (.+) or (.+)\?$").unwrap());

/// A QA model that answers template questions straight from the graph.
///
/// Understands `What is the {relation} of {subject}?`, where the subject is
/// one entity label or several joined by `, `, and the two comparison frames
/// produced by the template verbalizer. Anything else gets `[None]`.
pub struct KgQaStub<'a> {
    kg: &'a KnowledgeGraph,
}

impl<'a> KgQaStub<'a> {
    pub fn new(kg: &'a KnowledgeGraph) -> Self {
        Self { kg }
    }

    /// Entities named by `s`, and whether every `, `-separated part resolved.
    fn subjects(&self, s: &str) -> Option<(Vec<EntityId>, bool)> {
        let whole = self.kg.entities_by_label(s);
        if !whole.is_empty() {
            return Some((whole.to_vec(), true));
        }
        let mut complete = true;
        let mut ids = Vec::new();
        for p in s.split(", ") {
            let found = self.kg.entities_by_label(p.trim());
            complete &= !found.is_empty();
            ids.extend_from_slice(found);
        }
        (!ids.is_empty()).then_some((ids, complete))
    }

    /// Splits `{relation} of {subject}` at the first ` of ` that yields a
    /// known relation and fully resolvable subjects, else the first with any.
    fn relation_and_subjects(&self, body: &str) -> Option<(RelationId, Vec<EntityId>)> {
        let mut partial = None;
        for (i, _) in body.match_indices(" of ") {
            let Some(r) = self.kg.relation_by_label(&body[..i]) else { continue };
            match self.subjects(&body[i + 4..]) {
                Some((s, true)) => return Some((r, s)),
                Some((s, false)) if partial.is_none() => partial = Some((r, s)),
                _ => {}
            }
        }
        partial
    }

    pub fn answer_question(&self, question: &str) -> AnswerList {
        let Some(body) = question.strip_prefix("What is the ").and_then(|q| q.strip_suffix('?')) else {
            return AnswerList::none();
        };
        let Some((r, subjects)) = self.relation_and_subjects(body) else {
            return AnswerList::none();
        };
        let mut nodes = BTreeSet::new();
        for e in subjects {
            if let Ok(tails) = self.kg.neighbors(e, r) {
                nodes.extend(tails.iter().copied());
            }
        }
        AnswerList::new(nodes.iter().map(|&n: &NodeRef| self.kg.node_label(n)))
    }

    /// Compare questions carry `sub-question : answer` lines as information.
    fn answer_compare(&self, question: &str, info: &str) -> Option<AnswerList> {
        let (kind, l1, l2) = if let Some(c) = SAME.captures(question) {
            (CompareKind::Same, c[2].to_string(), c[4].to_string())
        } else if let Some(c) = EXTREME.captures(question) {
            let kind = if &c[1] == "lesser" {
                CompareKind::Lesser
            } else {
                CompareKind::Greater
            };
            (kind, c[3].to_string(), c[4].to_string())
        } else {
            return None;
        };
        let value_of = |label: &str| -> Option<f64> {
            info.lines().find_map(|line| {
                let (sq, ans) = line.rsplit_once(" : ")?;
                let body = sq.trim().strip_prefix("What is the ")?.strip_suffix('?')?;
                body.ends_with(&format!(" of {label}"))
                    .then(|| parse_leading_decimal(ans.trim()))
                    .flatten()
            })
        };
        let verdict = match (value_of(&l1), value_of(&l2)) {
            (Some(v1), Some(v2)) => compare_verdict(v1, v2, kind, &l1, &l2).ok(),
            _ => None,
        };
        Some(AnswerList::new(verdict))
    }

    /// Answers a rendered QA prompt.
    pub fn answer_prompt(&self, prompt: &str) -> AnswerList {
        let Some((question, info)) = prompt_sections(prompt) else {
            return AnswerList::none();
        };
        self.answer_compare(question, info)
            .unwrap_or_else(|| self.answer_question(question))
    }
}

impl ChatEndpoint for KgQaStub<'_> {
    fn complete(&self, prompt: &str) -> Result<String, EndpointError> {
        Ok(self.answer_prompt(prompt).to_bracketed())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kg() -> KnowledgeGraph {
        KnowledgeGraph::from_tsv(
            "Namibia\thead of state\tSam Nujoma\nSam Nujoma\treplaced by\tHifikepunye Pohamba\n\
             Bob\tcountry of citizenship\tRuritania\nBob\tcountry\tNowhere\n\
             Al\tcountry of citizenship\tElbonia\n\
             Vietnam\tpopulation\t94660000\tL\nHalifax\tpopulation\t424931\tL\n",
        )
        .unwrap()
    }

    #[test]
    fn one_hop_and_joined_subjects() {
        let kg = kg();
        let qa = KgQaStub::new(&kg);
        assert_eq!(qa.answer_question("What is the head of state of Namibia?").values(), ["Sam Nujoma"]);
        assert_eq!(
            qa.answer_question("What is the country of citizenship of Bob, Al?").values(),
            ["Ruritania", "Elbonia"]
        );
        assert!(qa.answer_question("What is the country of Nobody?").is_none());
        assert!(qa.answer_question("Who is this?").is_none());
    }

    #[test]
    fn through_the_prompt() {
        let kg = kg();
        let qa = KgQaStub::new(&kg);
        let prompt = render_qa_prompt(QA_PROMPT, "What is the replaced by of Sam Nujoma?", "{question} noise");
        assert_eq!(qa.complete(&prompt).unwrap(), "[Hifikepunye Pohamba]");
        let info = "What is the population of Vietnam? : 94660000\nWhat is the population of Halifax? : 424931\n";
        let prompt = render_qa_prompt(QA_PROMPT, "Which has the lesser population, Vietnam or Halifax?", info);
        assert_eq!(qa.complete(&prompt).unwrap(), "[Halifax]");
        let prompt = render_qa_prompt(
            QA_PROMPT,
            "Is the population of Vietnam the same as the population of Halifax?",
            info,
        );
        assert_eq!(qa.complete(&prompt).unwrap(), "[No]");
    }

    #[test]
    fn slots_fill_once() {
        assert_eq!(
            fill_slots("a {info} b {question} {x}", &[("info", "{question}"), ("question", "Q")]),
            "a {question} b Q {x}"
        );
    }
}
