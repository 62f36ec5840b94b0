use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KnowledgeGraph, NodeRef};
use crate::llm::{EndpointError, Retryable};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("retrieval corpus is empty")]
    EmptyCorpus,
    #[error("corpus {path} line {line}: {message}")]
    Corpus { path: String, line: usize, message: String },
    #[error("reading corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("retrieval backend: {0}")]
    Backend(EndpointError),
}

impl Retryable for RetrieveError {
    fn is_retryable(&self) -> bool {
        matches!(self, RetrieveError::Backend(e) if e.is_retryable())
    }

    fn exhausted(self, attempts: u32) -> Self {
        match self {
            RetrieveError::Backend(e) => RetrieveError::Backend(e.exhausted(attempts)),
            other => other,
        }
    }
}

/// One corpus line: `{"id", "title", "text"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
}

/// Top passages for a query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedInfo {
    pub query: String,
    pub passages: Vec<Passage>,
}

impl RetrievedInfo {
    /// Passages as prompt text, one block per document.
    pub fn render(&self) -> String {
        self.passages
            .iter()
            .map(|p| {
                if p.title.is_empty() {
                    p.text.clone()
                } else {
                    format!("{}\n{}", p.title, p.text)
                }
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<RetrievedInfo, RetrieveError>;
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Okapi BM25 over title + text.
pub struct Bm25Retriever {
    docs: Vec<Document>,
    /// term -> (doc index, term frequency), doc indices ascending
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_len: Vec<f64>,
    avg_len: f64,
    k1: f64,
    b: f64,
}

impl Bm25Retriever {
    pub const K1: f64 = 1.2;
    pub const B: f64 = 0.75;

    pub fn new(docs: Vec<Document>) -> Result<Self, RetrieveError> {
        if docs.is_empty() {
            return Err(RetrieveError::EmptyCorpus);
        }
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            let toks = tokenize(&format!("{} {}", d.title, d.text));
            doc_len.push(toks.len() as f64);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i, n));
            }
        }
        let avg_len = doc_len.iter().sum::<f64>() / docs.len() as f64;
        Ok(Self {
            docs,
            postings,
            doc_len,
            avg_len: avg_len.max(f64::MIN_POSITIVE),
            k1: Self::K1,
            b: Self::B,
        })
    }

    pub fn from_jsonl(path: &Path) -> Result<Self, RetrieveError> {
        let file = std::fs::File::open(path).map_err(|source| RetrieveError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut docs = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| RetrieveError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            docs.push(serde_json::from_str(&line).map_err(|e| RetrieveError::Corpus {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(docs)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of every document; zero where no query term occurs.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.docs.len()];
        for term in tokenize(query) {
            let Some(post) = self.postings.get(&term) else { continue };
            let idf = self.idf(&term);
            for &(d, tf) in post {
                let tf = tf as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * self.doc_len[d] / self.avg_len);
                scores[d] += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        scores
    }
}

impl Retriever for Bm25Retriever {
    /// Positive-scoring documents, best first; ties keep corpus order.
    fn retrieve(&self, query: &str, k: usize) -> Result<RetrievedInfo, RetrieveError> {
        let scores = self.scores(query);
        let mut ranked: Vec<usize> = (0..self.docs.len()).filter(|&i| scores[i] > 0.0).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        ranked.truncate(k);
        Ok(RetrievedInfo {
            query: query.to_string(),
            passages: ranked
                .into_iter()
                .map(|i| Passage {
                    doc_id: self.docs[i].id.clone(),
                    title: self.docs[i].title.clone(),
                    text: self.docs[i].text.clone(),
                    score: scores[i],
                })
                .collect(),
        })
    }
}

/// One document per entity, listing its outgoing facts as sentences.
pub fn kg_corpus(kg: &KnowledgeGraph) -> Vec<Document> {
    let mut docs = Vec::new();
    for e in kg.entity_ids() {
        let label = kg.entity_label(e);
        let mut lines = Vec::new();
        for &r in kg.out_relations(e) {
            let tails = kg.neighbors(e, r).expect("indexed relation");
            let names: Vec<&str> = tails.iter().map(|&n: &NodeRef| kg.node_label(n)).collect();
            lines.push(format!("The {} of {label} is {}.", kg.relation_label(r), names.join(", ")));
        }
        if lines.is_empty() {
            continue;
        }
        docs.push(Document {
            id: kg.entity_key(e).to_string(),
            title: label.to_string(),
            text: lines.join(" "),
        });
    }
    docs
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    query: &'a str,
    k: usize,
}

#[derive(Deserialize)]
struct RemoteResponse {
    passages: Vec<Passage>,
}

/// Remote retriever: `POST url` with `{"query", "k"}`, answering
/// `{"passages": [{"doc_id", "title", "text", "score"}]}`.
pub struct HttpRetriever {
    url: String,
    http: reqwest::blocking::Client,
}

impl HttpRetriever {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, RetrieveError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RetrieveError::Backend(EndpointError::Config(e.to_string())))?;
        Ok(Self { url: url.into(), http })
    }
}

impl Retriever for HttpRetriever {
    fn retrieve(&self, query: &str, k: usize) -> Result<RetrievedInfo, RetrieveError> {
        let backend = RetrieveError::Backend;
        let resp = self
            .http
            .post(&self.url)
            .json(&RemoteRequest { query, k })
            .send()
            .map_err(|e| backend(EndpointError::Transport(e.to_string())))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(backend(EndpointError::Status {
                status: status.as_u16(),
                body: resp.text().unwrap_or_default(),
            }));
        }
        let mut parsed: RemoteResponse = resp.json().map_err(|e| backend(EndpointError::Decode(e.to_string())))?;
        parsed.passages.sort_by(|a, b| b.score.total_cmp(&a.score));
        parsed.passages.truncate(k);
        Ok(RetrievedInfo {
            query: query.to_string(),
            passages: parsed.passages,
        })
    }
}
