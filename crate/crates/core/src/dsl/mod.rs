//! The code-formatted plan language.
//!
//! A plan is a sequence of typed assignments, each one of
//!
//! ```text
//! Name: str = "literal"
//! Name: str = f"text {Var} text"
//! Name: str = Builtin(kw = Var, kw = "literal", kw = [Var, Var])
//! ```
//!
//! with `#` comments and blank lines in between. Only the six builtins below
//! are callable; anything else is rejected rather than evaluated.

mod parse;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use parse::{parse_plan, ParseError, ParseErrorKind};
pub use validate::{dependencies, validate, DepGraph, DiagCode, Diagnostic, Severity, AMBIENT_VARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Builtin {
    Search,
    #[serde(rename = "Get_Answer")]
    GetAnswer,
    Compare,
    Intersection,
    Union,
    #[serde(rename = "Finish_The_Plan")]
    FinishThePlan,
}

/// Whether a keyword argument takes a single value or a list of variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgShape {
    Scalar,
    List,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::Search,
        Builtin::GetAnswer,
        Builtin::Compare,
        Builtin::Intersection,
        Builtin::Union,
        Builtin::FinishThePlan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Search => "Search",
            Builtin::GetAnswer => "Get_Answer",
            Builtin::Compare => "Compare",
            Builtin::Intersection => "Intersection",
            Builtin::Union => "Union",
            Builtin::FinishThePlan => "Finish_The_Plan",
        }
    }

    /// Keyword parameters in declaration order. All are required.
    pub fn params(self) -> &'static [(&'static str, ArgShape)] {
        use ArgShape::*;
        match self {
            Builtin::Search => &[("query", Scalar), ("thought", Scalar)],
            Builtin::GetAnswer => &[("query", Scalar), ("info", Scalar)],
            Builtin::Compare => &[("Original_Query", Scalar), ("Subquestions", List), ("Answers", List)],
            Builtin::Intersection | Builtin::Union => &[("Answer1", Scalar), ("Answer2", Scalar)],
            Builtin::FinishThePlan => &[("Answer", Scalar)],
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Builtin::ALL.into_iter().find(|b| b.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FPart {
    Text(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arg {
    Var(String),
    Literal(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kwarg {
    pub name: String,
    pub value: Arg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatementKind {
    Literal { text: String },
    FString { parts: Vec<FPart> },
    Call { builtin: Builtin, args: Vec<Kwarg> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub var: String,
    #[serde(flatten)]
    pub kind: StatementKind,
    #[serde(default)]
    pub span: Span,
}

impl Statement {
    pub fn builtin(&self) -> Option<Builtin> {
        match &self.kind {
            StatementKind::Call { builtin, .. } => Some(*builtin),
            _ => None,
        }
    }

    pub fn arg(&self, name: &str) -> Option<&Arg> {
        match &self.kind {
            StatementKind::Call { args, .. } => args.iter().find(|k| k.name == name).map(|k| &k.value),
            _ => None,
        }
    }

    /// Variables read by this statement, in source order.
    pub fn references(&self) -> Vec<&str> {
        match &self.kind {
            StatementKind::Literal { .. } => Vec::new(),
            StatementKind::FString { parts } => parts
                .iter()
                .filter_map(|p| match p {
                    FPart::Var(v) => Some(v.as_str()),
                    FPart::Text(_) => None,
                })
                .collect(),
            StatementKind::Call { args, .. } => args
                .iter()
                .flat_map(|k| match &k.value {
                    Arg::Var(v) => vec![v.as_str()],
                    Arg::List(vs) => vs.iter().map(String::as_str).collect(),
                    Arg::Literal(_) => Vec::new(),
                })
                .collect(),
        }
    }
}

/// A parsed plan. `notes` carries warnings about text the parser skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanProgram {
    pub statements: Vec<Statement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Diagnostic>,
}

impl PlanProgram {
    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plan serializes")
    }
}

/// Quotes `text` as a double-quoted plan string literal.
pub fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Renders f-string parts back to source form, `f"..."`.
pub fn quote_fstring(parts: &[FPart]) -> String {
    let mut body = String::new();
    for p in parts {
        match p {
            FPart::Var(v) => {
                body.push('{');
                body.push_str(v);
                body.push('}');
            }
            FPart::Text(t) => body.push_str(&t.replace('{', "{{").replace('}', "}}")),
        }
    }
    format!("f{}", quote(&body))
}
