//! Pipeline configuration: one TOML document, with endpoint secrets and URLs
//! overridable from the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lpkg_core::bench::Distribution;
use lpkg_core::llm::{EndpointConfig, RetryPolicy};
use lpkg_core::pattern::PatternType;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub kg: Option<PathBuf>,
    /// `tsv` or `ntriples`.
    pub kg_format: Option<String>,
    /// Optional `id<TAB>label` file for N-Triples graphs.
    pub labels: Option<PathBuf>,
    /// Directory overriding bundled prompts: `verbalize/<pattern>.txt`,
    /// `plan/instruction.txt`, `plan/demos.txt`, `qa/prompt.txt`.
    pub prompts: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub stub: bool,
    pub ground: GroundSection,
    pub train: TrainSection,
    pub bench: BenchSection,
    pub exec: ExecSection,
    pub retry: RetryPolicy,
    pub endpoints: Endpoints,
    pub retriever: RetrieverSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundSection {
    pub budget: usize,
    pub max_answers: usize,
}

impl Default for GroundSection {
    fn default() -> Self {
        Self {
            budget: 1000,
            max_answers: lpkg_core::pattern::DEFAULT_MAX_ANSWERS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub quota: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { quota: 1000 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Pattern name -> item count. Defaults to the 1200-item mix.
    pub distribution: Option<BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecSection {
    pub k: usize,
    pub fan_out: bool,
}

impl Default for ExecSection {
    fn default() -> Self {
        Self { k: 5, fan_out: false }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointFile {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub planner: EndpointFile,
    pub qa: EndpointFile,
    pub verbalizer: EndpointFile,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieverSection {
    /// Remote retriever URL (`LPKG_RETRIEVER_URL` overrides).
    pub url: Option<String>,
    /// Local JSONL corpus `{id, title, text}` for the bundled BM25 retriever.
    pub corpus: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for RetrieverSection {
    fn default() -> Self {
        Self {
            url: None,
            corpus: None,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Role {
    Planner,
    Qa,
    Verbalizer,
}

impl Role {
    pub fn env_prefix(self) -> &'static str {
        match self {
            Role::Planner => "LPKG_PLANNER",
            Role::Qa => "LPKG_QA",
            Role::Verbalizer => "LPKG_VERBALIZER",
        }
    }
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// File settings for `role`, with `LPKG_<ROLE>_{BASE_URL,MODEL,API_KEY}` taking precedence.
    pub fn endpoint(&self, role: Role) -> anyhow::Result<EndpointConfig> {
        let file = match role {
            Role::Planner => &self.endpoints.planner,
            Role::Qa => &self.endpoints.qa,
            Role::Verbalizer => &self.endpoints.verbalizer,
        };
        let prefix = role.env_prefix();
        let base_url = env(&format!("{prefix}_BASE_URL")).or_else(|| file.base_url.clone());
        let model = env(&format!("{prefix}_MODEL")).or_else(|| file.model.clone());
        let (Some(base_url), Some(model)) = (base_url, model) else {
            bail!("no endpoint configured; set {prefix}_BASE_URL and {prefix}_MODEL or use --stub");
        };
        Ok(EndpointConfig {
            base_url,
            model,
            api_key: env(&format!("{prefix}_API_KEY")).or_else(|| file.api_key.clone()),
            timeout_secs: file.timeout_secs.unwrap_or(60),
        })
    }

    pub fn retriever_url(&self) -> Option<String> {
        env("LPKG_RETRIEVER_URL").or_else(|| self.retriever.url.clone())
    }

    pub fn distribution(&self) -> anyhow::Result<Distribution> {
        let Some(map) = &self.bench.distribution else {
            return Ok(Distribution::default_mix());
        };
        let mut d = BTreeMap::new();
        for (name, &count) in map {
            let p: PatternType = name.parse()?;
            d.insert(p, count);
        }
        Ok(Distribution(d))
    }
}
