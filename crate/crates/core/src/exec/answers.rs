use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Identity key for answers: case-folded, trimmed, inner whitespace collapsed.
pub fn answer_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Ordered answers, unique under [`answer_key`]. Empty means "None".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerList {
    values: Vec<String>,
}

impl AnswerList {
    /// Keeps the first spelling of each answer; blank items are dropped.
    pub fn new<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let values = items
            .into_iter()
            .map(|s| s.as_ref().trim().to_string())
            .filter(|s| !s.is_empty() && seen.insert(answer_key(s)))
            .collect();
        Self { values }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn into_values(self) -> Vec<String> {
        self.values
    }

    pub fn is_none(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, s: &str) -> bool {
        let k = answer_key(s);
        self.values.iter().any(|v| answer_key(v) == k)
    }

    fn keys(&self) -> HashSet<String> {
        self.values.iter().map(|v| answer_key(v)).collect()
    }

    /// `[a#b#c]`, or `[None]` when empty.
    pub fn to_bracketed(&self) -> String {
        if self.is_none() {
            "[None]".into()
        } else {
            format!("[{}]", self.values.join("#"))
        }
    }

    /// Values joined for substitution into a question.
    pub fn joined(&self) -> String {
        self.values.join(", ")
    }
}

/// Answers of `a` that also occur in `b`, in `a`'s order.
pub fn intersect(a: &AnswerList, b: &AnswerList) -> AnswerList {
    let kb = b.keys();
    AnswerList::new(a.values.iter().filter(|v| kb.contains(&answer_key(v))))
}

/// Answers of `a`, then the new ones from `b`.
pub fn union(a: &AnswerList, b: &AnswerList) -> AnswerList {
    AnswerList::new(a.values.iter().chain(&b.values))
}

/// A parsed QA reply. `lenient` is set when the reply had no `[...]` list and
/// the whole text was taken as one answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswers {
    pub answers: AnswerList,
    pub lenient: bool,
}

fn is_none_token(s: &str) -> bool {
    s.trim().eq_ignore_ascii_case("none")
}

/// Reads the first `[...]` span of a reply, split on `#`. `[None]` and `[]`
/// give an empty list.
pub fn parse_answer_list(raw: &str) -> ParsedAnswers {
    if let Some(open) = raw.find('[') {
        if let Some(len) = raw[open + 1..].find(']') {
            let inner = &raw[open + 1..open + 1 + len];
            return ParsedAnswers {
                answers: AnswerList::new(inner.split('#').filter(|s| !is_none_token(s))),
                lenient: false,
            };
        }
    }
    let whole = raw.trim();
    let answers = if whole.is_empty() || is_none_token(whole) {
        AnswerList::none()
    } else {
        AnswerList::new([whole])
    };
    ParsedAnswers { answers, lenient: true }
}
