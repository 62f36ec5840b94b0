use std::collections::HashMap;

use thiserror::Error;

use crate::llm::{ChatEndpoint, EndpointError};
use crate::pattern::PatternType;
use crate::plandata::{fill_template, PlanDataError, PlanningPrompt};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no plan known for question {0:?}")]
    Unknown(String),
    #[error("planner endpoint: {0}")]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Template(#[from] PlanDataError),
}

/// Produces plan text for a question.
pub trait Planner: Send + Sync {
    fn plan(&self, question: &str) -> Result<String, PlanError>;
}

/// Planner that looks up the gold decomposition of known questions and fills
/// the pattern's template, i.e. a perfect planner for benchmark items.
#[derive(Debug, Clone, Default)]
pub struct OraclePlanner {
    known: HashMap<String, (PatternType, Vec<String>)>,
}

impl OraclePlanner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, question: impl Into<String>, pattern: PatternType, sub_questions: Vec<String>) {
        self.known.insert(question.into(), (pattern, sub_questions));
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

impl Planner for OraclePlanner {
    fn plan(&self, question: &str) -> Result<String, PlanError> {
        let (pattern, subs) = self
            .known
            .get(question)
            .ok_or_else(|| PlanError::Unknown(question.to_string()))?;
        Ok(fill_template(*pattern, subs)?)
    }
}

/// Planner backed by a chat model prompted with the code-formatted
/// instruction and demonstrations.
pub struct LlmPlanner<E> {
    endpoint: E,
    prompt: PlanningPrompt,
}

impl<E: ChatEndpoint> LlmPlanner<E> {
    pub fn new(endpoint: E, prompt: PlanningPrompt) -> Self {
        Self { endpoint, prompt }
    }
}

impl<E: ChatEndpoint> Planner for LlmPlanner<E> {
    fn plan(&self, question: &str) -> Result<String, PlanError> {
        Ok(self.endpoint.complete(&self.prompt.input_for(question))?)
    }
}
