//! Plan execution: retrieval for `Search`, a QA model for `Get_Answer` and
//! `Compare`, real set operations for `Intersection`/`Union`, with
//! placeholder substitution between steps and a replayable trace.

mod answers;
mod planner;
mod qa;
mod retrieve;

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use answers::{answer_key, intersect, parse_answer_list, union, AnswerList, ParsedAnswers};
pub use planner::{LlmPlanner, OraclePlanner, PlanError, Planner};
pub use qa::{fill_slots, prompt_sections, render_qa_prompt, KgQaStub, QA_PROMPT};
pub use retrieve::{
    kg_corpus, tokenize, Bm25Retriever, Document, HttpRetriever, Passage, RetrieveError, RetrievedInfo, Retriever,
};

use crate::dsl::{self, Arg, Builtin, Diagnostic, FPart, PlanProgram, Statement, StatementKind, AMBIENT_VARS};
use crate::llm::{ChatEndpoint, RetryPolicy};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("refusing to run an invalid plan: {}", summarize(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("variable `{0}` is not bound")]
    Unbound(String),
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    /// Passages per Search.
    pub k: usize,
    pub retry: RetryPolicy,
    /// Record wall-clock step durations. Off by default so traces are
    /// reproducible byte for byte.
    pub record_durations: bool,
    /// Ask a follow-up question per intermediate answer instead of one
    /// question naming all of them, then merge the answers.
    pub fan_out: bool,
    /// QA prompt with `{info}` and `{question}` slots.
    pub qa_prompt: String,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            k: 5,
            retry: RetryPolicy::default(),
            record_durations: false,
            fan_out: false,
            qa_prompt: QA_PROMPT.to_string(),
        }
    }
}

/// Runtime value of a plan variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Value {
    Text(String),
    /// Fanned-out sub-question, one per intermediate answer.
    Questions(Vec<String>),
    Answers(AnswerList),
    Info(Vec<RetrievedInfo>),
}

impl Value {
    fn as_answers(&self) -> AnswerList {
        match self {
            Value::Answers(a) => a.clone(),
            Value::Text(s) => parse_answer_list(s).answers,
            Value::Questions(qs) => AnswerList::new(qs),
            Value::Info(_) => AnswerList::none(),
        }
    }

    fn questions(&self) -> Vec<String> {
        match self {
            Value::Questions(qs) => qs.clone(),
            other => vec![render(other).0],
        }
    }
}

/// Text form of a value inside a question; empty answer lists read "None".
fn render(v: &Value) -> (String, Option<String>) {
    match v {
        Value::Text(s) => (s.clone(), None),
        Value::Answers(a) if a.is_none() => ("None".into(), Some("substituted an empty answer list as None".into())),
        Value::Answers(a) => (a.joined(), None),
        Value::Questions(qs) => (qs.join(", "), None),
        Value::Info(infos) => (infos.iter().map(RetrievedInfo::render).collect::<Vec<_>>().join("\n\n"), None),
    }
}

/// Fills an f-string from bound variables. Returns the text and any warnings.
pub fn substitute(parts: &[FPart], env: &HashMap<String, Value>) -> Result<(String, Vec<String>), ExecError> {
    let mut out = String::new();
    let mut warnings = Vec::new();
    for p in parts {
        match p {
            FPart::Text(t) => out.push_str(t),
            FPart::Var(v) => {
                let value = env.get(v).ok_or_else(|| ExecError::Unbound(v.clone()))?;
                let (text, warn) = render(value);
                out.push_str(&text);
                warnings.extend(warn.map(|w| format!("{v}: {w}")));
            }
        }
    }
    Ok((out, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// One executed statement, with inputs as they were after substitution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Value>,
    /// Endpoint calls made, retries included.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub question: String,
    pub steps: Vec<StepRecord>,
    pub answer: AnswerList,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Gold answer, when the caller knows it (e.g. the graph's compare verdict
    /// next to what the QA model said).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<AnswerList>,
}

impl ExecutionTrace {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

struct StepFailure(String);

struct Interp<'a> {
    retriever: &'a dyn Retriever,
    qa: &'a dyn ChatEndpoint,
    config: &'a ExecConfig,
    env: HashMap<String, Value>,
}

impl Interp<'_> {
    fn value(&self, arg: &Arg) -> Result<Value, StepFailure> {
        match arg {
            Arg::Literal(s) => Ok(Value::Text(s.clone())),
            Arg::Var(v) => self
                .env
                .get(v)
                .cloned()
                .ok_or_else(|| StepFailure(format!("variable `{v}` is not bound"))),
            Arg::List(_) => Err(StepFailure("unexpected list argument".into())),
        }
    }

    fn list(&self, arg: Option<&Arg>) -> Result<Vec<Value>, StepFailure> {
        match arg {
            Some(Arg::List(vs)) => vs.iter().map(|v| self.value(&Arg::Var(v.clone()))).collect(),
            Some(other) => Ok(vec![self.value(other)?]),
            None => Ok(Vec::new()),
        }
    }

    fn arg(&self, s: &Statement, name: &str) -> Result<Value, StepFailure> {
        let a = s
            .arg(name)
            .ok_or_else(|| StepFailure(format!("missing argument `{name}`")))?;
        self.value(a)
    }

    fn ask(&self, question: &str, info: &str, rec: &mut StepRecord) -> Result<AnswerList, StepFailure> {
        let prompt = render_qa_prompt(&self.config.qa_prompt, question, info);
        let (reply, attempts) = self
            .config
            .retry
            .run(|| self.qa.complete(&prompt))
            .map_err(|e| StepFailure(format!("QA endpoint: {e}")))?;
        rec.attempts += attempts;
        let parsed = parse_answer_list(&reply);
        if parsed.lenient {
            rec.warnings.push(format!("QA reply had no [..] list: {reply:?}"));
        }
        Ok(parsed.answers)
    }

    fn fstring(&self, parts: &[FPart], rec: &mut StepRecord) -> Result<Value, StepFailure> {
        for p in parts {
            if let FPart::Var(v) = p {
                if let Some(val) = self.env.get(v) {
                    rec.inputs.insert(v.clone(), serde_json::to_value(val).expect("value serializes"));
                }
            }
        }
        if self.config.fan_out {
            let multi: Vec<&String> = parts
                .iter()
                .filter_map(|p| match p {
                    FPart::Var(v) if matches!(self.env.get(v), Some(Value::Answers(a)) if a.len() > 1) => Some(v),
                    _ => None,
                })
                .collect();
            if let [var] = multi.as_slice() {
                let Some(Value::Answers(list)) = self.env.get(*var) else { unreachable!() };
                let mut qs = Vec::new();
                for item in list.values() {
                    let mut env = self.env.clone();
                    env.insert((*var).clone(), Value::Answers(AnswerList::new([item])));
                    let (text, warns) = substitute(parts, &env).map_err(|e| StepFailure(e.to_string()))?;
                    rec.warnings.extend(warns);
                    qs.push(text);
                }
                return Ok(Value::Questions(qs));
            }
        }
        let (text, warns) = substitute(parts, &self.env).map_err(|e| StepFailure(e.to_string()))?;
        rec.warnings.extend(warns);
        Ok(Value::Text(text))
    }

    fn call(&self, s: &Statement, builtin: Builtin, rec: &mut StepRecord) -> Result<Value, StepFailure> {
        let record = |rec: &mut StepRecord, name: &str, v: &Value| {
            rec.inputs
                .insert(name.to_string(), serde_json::to_value(v).expect("value serializes"));
        };
        match builtin {
            Builtin::Search => {
                let query = self.arg(s, "query")?;
                let thought = self.arg(s, "thought")?;
                record(rec, "query", &query);
                record(rec, "thought", &thought);
                let mut infos = Vec::new();
                for q in query.questions() {
                    let (info, attempts) = self
                        .config
                        .retry
                        .run(|| self.retriever.retrieve(&q, self.config.k))
                        .map_err(|e| StepFailure(format!("retrieval: {e}")))?;
                    rec.attempts += attempts;
                    infos.push(info);
                }
                Ok(Value::Info(infos))
            }
            Builtin::GetAnswer => {
                let query = self.arg(s, "query")?;
                let info = self.arg(s, "info")?;
                record(rec, "query", &query);
                let questions = query.questions();
                let infos = match info {
                    Value::Info(infos) => infos,
                    other => vec![RetrievedInfo {
                        query: String::new(),
                        passages: vec![Passage {
                            doc_id: String::new(),
                            title: String::new(),
                            text: render(&other).0,
                            score: 0.0,
                        }],
                    }],
                };
                let mut merged = AnswerList::none();
                for (i, q) in questions.iter().enumerate() {
                    let info = infos.get(i).or(infos.last()).map(RetrievedInfo::render).unwrap_or_default();
                    merged = union(&merged, &self.ask(q, &info, rec)?);
                }
                Ok(Value::Answers(merged))
            }
            Builtin::Compare => {
                let query = self.arg(s, "Original_Query")?;
                let subs = self.list(s.arg("Subquestions"))?;
                let answers = self.list(s.arg("Answers"))?;
                let query = render(&query).0;
                let mut info = String::new();
                for (sq, ans) in subs.iter().zip(&answers) {
                    info.push_str(&format!("{} : {}\n", render(sq).0, render(ans).0));
                }
                rec.inputs.insert("Original_Query".into(), query.clone().into());
                rec.inputs.insert("info".into(), info.clone().into());
                Ok(Value::Answers(self.ask(&query, &info, rec)?))
            }
            Builtin::Intersection | Builtin::Union => {
                let a = self.arg(s, "Answer1")?.as_answers();
                let b = self.arg(s, "Answer2")?.as_answers();
                record(rec, "Answer1", &Value::Answers(a.clone()));
                record(rec, "Answer2", &Value::Answers(b.clone()));
                Ok(Value::Answers(if builtin == Builtin::Intersection {
                    intersect(&a, &b)
                } else {
                    union(&a, &b)
                }))
            }
            Builtin::FinishThePlan => {
                let a = self.arg(s, "Answer")?.as_answers();
                record(rec, "Answer", &Value::Answers(a.clone()));
                Ok(Value::Answers(a))
            }
        }
    }
}

/// Validates `program`, then runs it statement by statement for `question`.
///
/// An invalid plan is refused with an error. A step that fails at run time
/// (retrieval or QA endpoint out of retries) ends the run with
/// [`Status::Failed`] and the trace up to and including that step.
pub fn execute(
    program: &PlanProgram,
    question: &str,
    retriever: &dyn Retriever,
    qa: &dyn ChatEndpoint,
    config: &ExecConfig,
) -> Result<ExecutionTrace, ExecError> {
    let errors: Vec<Diagnostic> = dsl::validate(program).into_iter().filter(|d| d.is_error()).collect();
    if !errors.is_empty() {
        return Err(ExecError::Invalid(errors));
    }
    let mut interp = Interp {
        retriever,
        qa,
        config,
        env: HashMap::new(),
    };
    for v in AMBIENT_VARS {
        interp.env.insert(v.to_string(), Value::Text(question.to_string()));
    }
    let mut trace = ExecutionTrace {
        question: question.to_string(),
        steps: Vec::new(),
        answer: AnswerList::none(),
        status: Status::Ok,
        error: None,
        gold: None,
    };
    for s in &program.statements {
        let started = Instant::now();
        let mut rec = StepRecord {
            var: s.var.clone(),
            builtin: s.builtin(),
            inputs: BTreeMap::new(),
            output: None,
            attempts: 0,
            duration_ms: None,
            warnings: Vec::new(),
            error: None,
        };
        let result = match &s.kind {
            StatementKind::Literal { text } => Ok(Value::Text(text.clone())),
            StatementKind::FString { parts } => interp.fstring(parts, &mut rec),
            StatementKind::Call { builtin, .. } => interp.call(s, *builtin, &mut rec),
        };
        if config.record_durations {
            rec.duration_ms = Some(started.elapsed().as_millis() as u64);
        }
        match result {
            Ok(v) => {
                rec.output = Some(v.clone());
                trace.steps.push(rec);
                if s.builtin() == Some(Builtin::FinishThePlan) {
                    trace.answer = v.as_answers();
                    break;
                }
                interp.env.insert(s.var.clone(), v);
            }
            Err(StepFailure(msg)) => {
                tracing::warn!(var = %s.var, error = %msg, "plan step failed");
                rec.error = Some(msg.clone());
                trace.steps.push(rec);
                trace.status = Status::Failed;
                trace.error = Some(format!("{}: {msg}", s.var));
                break;
            }
        }
    }
    Ok(trace)
}
