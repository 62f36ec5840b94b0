//! Chat-completion endpoints: the trait every model-backed step goes through,
//! an OpenAI-style HTTP client, and the retry policy shared with retrievers.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("endpoint not configured: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<EndpointError> },
}

impl EndpointError {
    /// Transport failures, throttling and server errors are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            EndpointError::Transport(_) => true,
            EndpointError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A model that maps a prompt to a completion. Implementations must be safe to
/// call from several threads at once.
pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, EndpointError>;
}

impl<F> ChatEndpoint for F
where
    F: Fn(&str) -> Result<String, EndpointError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, EndpointError> {
        self(prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            base_delay: Duration::from_millis(500),
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based): base · 2^attempt.
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or the
    /// retry budget is spent. Returns the value and the number of attempts.
    pub fn run<T, E: Retryable>(&self, mut op: impl FnMut() -> Result<T, E>) -> Result<(T, u32), E> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok((v, attempt + 1)),
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    tracing::warn!(attempt, error = %e, "retrying endpoint call");
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) if attempt == 0 => return Err(e),
                Err(e) => return Err(e.exhausted(attempt + 1)),
            }
        }
    }
}

/// Errors that [`RetryPolicy::run`] knows how to classify.
pub trait Retryable: std::fmt::Display + Sized {
    fn is_retryable(&self) -> bool;
    /// Wraps the last error once retries are used up.
    fn exhausted(self, attempts: u32) -> Self;
}

impl Retryable for EndpointError {
    fn is_retryable(&self) -> bool {
        EndpointError::is_retryable(self)
    }

    fn exhausted(self, attempts: u32) -> Self {
        EndpointError::Exhausted {
            attempts,
            last: Box::new(self),
        }
    }
}

/// Connection settings for one chat endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

impl EndpointConfig {
    /// Reads `{PREFIX}_BASE_URL`, `{PREFIX}_MODEL` and optional `{PREFIX}_API_KEY`.
    pub fn from_env(prefix: &str) -> Result<Self, EndpointError> {
        let var = |name: &str| std::env::var(format!("{prefix}_{name}")).ok().filter(|v| !v.is_empty());
        let base_url = var("BASE_URL").ok_or_else(|| EndpointError::Config(format!("{prefix}_BASE_URL is not set")))?;
        let model = var("MODEL").ok_or_else(|| EndpointError::Config(format!("{prefix}_MODEL is not set")))?;
        Ok(Self {
            base_url,
            model,
            api_key: var("API_KEY"),
            timeout_secs: default_timeout(),
        })
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Blocking client for `POST {base_url}/chat/completions`.
pub struct HttpChatClient {
    config: EndpointConfig,
    retry: RetryPolicy,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: EndpointConfig, retry: RetryPolicy) -> Result<Self, EndpointError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| EndpointError::Config(e.to_string()))?;
        Ok(Self { config, retry, http })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn once(&self, prompt: &str) -> Result<String, EndpointError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: 0.0,
        };
        let mut req = self.http.post(self.url()).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EndpointError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(EndpointError::Status {
                status: status.as_u16(),
                body: body.chars().take(500).collect(),
            });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| EndpointError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| EndpointError::Decode("no choices[0].message.content".into()))
    }
}

impl ChatEndpoint for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, EndpointError> {
        self.retry.run(|| self.once(prompt)).map(|(text, _)| text)
    }
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;

    fn fast(retries: u32) -> RetryPolicy {
        RetryPolicy {
            max_retries: retries,
            base_delay: Duration::ZERO,
        }
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0), Duration::from_millis(500));
        assert_eq!(p.delay(2), Duration::from_millis(2000));
    }

    #[test]
    fn retries_transient_failures() {
        let calls = Cell::new(0);
        let (v, attempts) = fast(2)
            .run(|| {
                calls.set(calls.get() + 1);
                if calls.get() < 3 {
                    Err(EndpointError::Status {
                        status: 503,
                        body: String::new(),
                    })
                } else {
                    Ok(7)
                }
            })
            .unwrap();
        assert_eq!((v, attempts), (7, 3));
    }

    #[test]
    fn gives_up_and_reports_attempts() {
        let err = fast(2)
            .run(|| -> Result<(), _> { Err(EndpointError::Transport("refused".into())) })
            .unwrap_err();
        assert!(matches!(err, EndpointError::Exhausted { attempts: 3, .. }));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let calls = Cell::new(0);
        let err = fast(5)
            .run(|| -> Result<(), _> {
                calls.set(calls.get() + 1);
                Err(EndpointError::Status {
                    status: 400,
                    body: "bad".into(),
                })
            })
            .unwrap_err();
        assert_eq!(calls.get(), 1);
        assert!(matches!(err, EndpointError::Status { status: 400, .. }));
    }

    #[test]
    fn unreachable_server_is_a_transport_error() {
        let cfg = EndpointConfig {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            api_key: None,
            timeout_secs: 2,
        };
        let client = HttpChatClient::new(cfg, RetryPolicy::none()).unwrap();
        assert!(matches!(client.complete("hi"), Err(EndpointError::Transport(_))));
    }
}
