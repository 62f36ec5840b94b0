use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Arg, Builtin, PlanProgram};

/// Variables the executor binds before the first statement runs.
pub const AMBIENT_VARS: &[&str] = &["Original_Question"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagCode {
    UseBeforeDef,
    MissingFinish,
    DuplicateFinish,
    FinishNotLast,
    InfoNotSearch,
    UnusedVar,
    UnusedSearch,
    Reassigned,
    RepeatedSearch,
    SkippedText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagCode, line: usize, var: Option<String>, message: String) -> Self {
        Self {
            severity: Severity::Error,
            code,
            line,
            var,
            message,
        }
    }

    pub fn warning(code: DiagCode, line: usize, var: Option<String>, message: String) -> Self {
        Self {
            severity: Severity::Warning,
            code,
            line,
            var,
            message,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "line {}: {sev}: {}", self.line, self.message)
    }
}

/// Static checks over a parsed program. Parser notes are included first, so
/// the result is the complete diagnostic list for the plan text.
pub fn validate(program: &PlanProgram) -> Vec<Diagnostic> {
    let mut out = program.notes.clone();
    let stmts = &program.statements;
    let ambient: HashSet<&str> = AMBIENT_VARS.iter().copied().collect();
    let defined_anywhere: HashSet<&str> = stmts.iter().map(|s| s.var.as_str()).collect();

    let mut defined: HashMap<&str, usize> = HashMap::new();
    let mut searches_by_query: HashMap<&str, usize> = HashMap::new();
    for (i, s) in stmts.iter().enumerate() {
        let line = s.span.line;
        let mut reported = HashSet::new();
        for r in s.references() {
            if defined.contains_key(r) || ambient.contains(r) || !reported.insert(r) {
                continue;
            }
            let message = if defined_anywhere.contains(r) {
                format!("`{r}` is used before it is assigned")
            } else {
                format!("`{r}` is never assigned")
            };
            out.push(Diagnostic::error(DiagCode::UseBeforeDef, line, Some(r.to_string()), message));
        }
        if s.builtin() == Some(Builtin::GetAnswer) {
            let ok = match s.arg("info") {
                Some(Arg::Var(v)) => stmts
                    .iter()
                    .take(i)
                    .rev()
                    .find(|d| d.var == *v)
                    .map_or(!defined_anywhere.contains(v.as_str()), |d| d.builtin() == Some(Builtin::Search)),
                _ => false,
            };
            // a never-assigned info var is already reported as use-before-def
            if !ok {
                out.push(Diagnostic::error(
                    DiagCode::InfoNotSearch,
                    line,
                    Some(s.var.clone()),
                    format!("`{}`: Get_Answer info must be the result of a Search", s.var),
                ));
            }
        }
        if s.builtin() == Some(Builtin::Search) {
            if let Some(Arg::Var(q)) = s.arg("query") {
                if searches_by_query.insert(q.as_str(), i).is_some() {
                    out.push(Diagnostic::warning(
                        DiagCode::RepeatedSearch,
                        line,
                        Some(s.var.clone()),
                        format!("`{q}` is searched more than once"),
                    ));
                }
            }
        }
        if defined.insert(s.var.as_str(), i).is_some() {
            out.push(Diagnostic::warning(
                DiagCode::Reassigned,
                line,
                Some(s.var.clone()),
                format!("`{}` is reassigned", s.var),
            ));
        }
    }

    let finishes: Vec<usize> = stmts
        .iter()
        .enumerate()
        .filter(|(_, s)| s.builtin() == Some(Builtin::FinishThePlan))
        .map(|(i, _)| i)
        .collect();
    match finishes.as_slice() {
        [] => out.push(Diagnostic::error(
            DiagCode::MissingFinish,
            stmts.last().map_or(1, |s| s.span.line),
            None,
            "the plan never calls Finish_The_Plan".into(),
        )),
        [first, rest @ ..] => {
            for &d in rest {
                out.push(Diagnostic::error(
                    DiagCode::DuplicateFinish,
                    stmts[d].span.line,
                    Some(stmts[d].var.clone()),
                    "Finish_The_Plan is called more than once".into(),
                ));
            }
            if rest.is_empty() && *first + 1 != stmts.len() {
                out.push(Diagnostic::error(
                    DiagCode::FinishNotLast,
                    stmts[*first].span.line,
                    Some(stmts[*first].var.clone()),
                    "Finish_The_Plan must be the last statement".into(),
                ));
            }
        }
    }

    let used: HashSet<&str> = stmts.iter().flat_map(|s| s.references()).collect();
    let mut warned = HashSet::new();
    for s in stmts {
        if s.builtin() == Some(Builtin::FinishThePlan) || used.contains(s.var.as_str()) || !warned.insert(&s.var) {
            continue;
        }
        let (code, message) = if s.builtin() == Some(Builtin::Search) {
            (DiagCode::UnusedSearch, format!("search result `{}` feeds nothing", s.var))
        } else {
            (DiagCode::UnusedVar, format!("`{}` is never used", s.var))
        };
        out.push(Diagnostic::warning(code, s.span.line, Some(s.var.clone()), message));
    }
    out
}

/// Data dependencies between assignments: one node per statement, and an
/// edge `u -> v` when statement `v` reads the variable assigned by `u`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DepGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl DepGraph {
    pub fn predecessors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == v).map(|e| e.0)
    }

    pub fn successors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == u).map(|e| e.1)
    }

    /// Edges as `(from_var, to_var)` pairs.
    pub fn named_edges(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .map(|&(u, v)| (self.nodes[u].as_str(), self.nodes[v].as_str()))
            .collect()
    }
}

/// Builds the dependency graph. A reference resolves to the latest earlier
/// assignment of that name; unresolved and ambient references add no edge.
pub fn dependencies(program: &PlanProgram) -> DepGraph {
    let mut latest: HashMap<&str, usize> = HashMap::new();
    let mut edges = Vec::new();
    for (v, s) in program.statements.iter().enumerate() {
        let mut seen = HashSet::new();
        for r in s.references() {
            if let Some(&u) = latest.get(r) {
                if seen.insert(u) {
                    edges.push((u, v));
                }
            }
        }
        latest.insert(s.var.as_str(), v);
    }
    DepGraph {
        nodes: program.statements.iter().map(|s| s.var.clone()).collect(),
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_plan;
    use super::*;

    const ONE_P: &str = r#"Thought1: str = "t"
Sub_Question_1: str = "What is the capital of Ruritania?"
Info_1: str = Search(query = Sub_Question_1, thought = Thought1)
Ans_1: str = Get_Answer(query = Sub_Question_1, info = Info_1)
Final_Answer: str = Finish_The_Plan(Answer = Ans_1)
"#;

    fn errors(text: &str) -> Vec<Diagnostic> {
        validate(&parse_plan(text).unwrap()).into_iter().filter(|d| d.is_error()).collect()
    }

    #[test]
    fn clean_plan_has_no_diagnostics() {
        assert_eq!(validate(&parse_plan(ONE_P).unwrap()), vec![]);
    }

    #[test]
    fn use_before_def_names_the_var() {
        let text = ONE_P.replace("Answer = Ans_1", "Answer = Ans_2");
        let errs = errors(&text);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, DiagCode::UseBeforeDef);
        assert_eq!(errs[0].var.as_deref(), Some("Ans_2"));
        assert!(errs[0].message.contains("Ans_2"));
    }

    #[test]
    fn ambient_question_is_defined() {
        let text = "Ans_3: str = Compare(Original_Query = Original_Question, Subquestions = [A], Answers = [B])\n";
        let text = format!("A: str = \"a\"\nB: str = \"b\"\n{text}F: str = Finish_The_Plan(Answer = Ans_3)\n");
        assert_eq!(errors(&text), vec![]);
    }

    #[test]
    fn finish_rules() {
        let no_finish = ONE_P.lines().take(4).collect::<Vec<_>>().join("\n");
        let errs = errors(&no_finish);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, DiagCode::MissingFinish);

        let mut p = parse_plan(ONE_P).unwrap();
        let fin = p.statements[4].clone();
        p.statements.insert(2, fin.clone());
        let codes: Vec<_> = validate(&p).into_iter().filter(|d| d.is_error()).map(|d| d.code).collect();
        assert!(codes.contains(&DiagCode::DuplicateFinish));

        let mut p = parse_plan(ONE_P).unwrap();
        p.statements.swap(3, 4);
        let codes: Vec<_> = validate(&p).into_iter().filter(|d| d.is_error()).map(|d| d.code).collect();
        assert!(codes.contains(&DiagCode::FinishNotLast));
    }

    #[test]
    fn info_must_come_from_search() {
        let text = ONE_P.replace("info = Info_1", "info = Thought1");
        let errs = errors(&text);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code, DiagCode::InfoNotSearch);
    }

    #[test]
    fn warnings() {
        let text = ONE_P.replace(
            "Ans_1: str",
            "Spare: str = \"x\"\nInfo_9: str = Search(query = Sub_Question_1, thought = Thought1)\nAns_1: str",
        );
        let diags = validate(&parse_plan(&text).unwrap());
        let codes: Vec<_> = diags.iter().map(|d| d.code).collect();
        assert!(diags.iter().all(|d| !d.is_error()));
        assert!(codes.contains(&DiagCode::UnusedVar));
        assert!(codes.contains(&DiagCode::UnusedSearch));
        assert!(codes.contains(&DiagCode::RepeatedSearch));
    }

    #[test]
    fn one_p_dependency_chain() {
        let g = dependencies(&parse_plan(ONE_P).unwrap());
        assert_eq!(g.nodes.len(), 5);
        let mut e = g.named_edges();
        e.sort();
        assert_eq!(
            e,
            vec![
                ("Ans_1", "Final_Answer"),
                ("Info_1", "Ans_1"),
                ("Sub_Question_1", "Ans_1"),
                ("Sub_Question_1", "Info_1"),
                ("Thought1", "Info_1"),
            ]
        );
    }
}
