//! Service records, trace events and API errors.

use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use trustrag_core::chunking::ChunkStrategy;
use trustrag_core::citation::AnnotatedAnswer;
use trustrag_core::ingest::DocumentFormat;
use trustrag_core::pipeline::Stage;
use trustrag_core::query::RewriteKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexState {
    Empty,
    Building,
    Ready,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRef {
    pub id: String,
    pub title: String,
    pub source_uri: String,
    pub format: DocumentFormat,
    pub publish_date: Option<chrono::NaiveDate>,
    pub sentences: usize,
    pub added_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexInfo {
    /// Hash of the sorted document ids the index was built from.
    pub document_set: String,
    pub chunk_count: usize,
    pub dense: bool,
    pub built_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub name: String,
    pub chunk_config: ChunkStrategy,
    pub index_state: IndexState,
    pub created_at: DateTime<Utc>,
    pub documents: Vec<DocumentRef>,
    #[serde(default)]
    pub index: Option<IndexInfo>,
    #[serde(default)]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    /// BM25 plus dense vectors, fused.
    #[default]
    Hybrid,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSettings {
    pub search: SearchMethod,
    pub rewrite_modes: Vec<RewriteKind>,
    pub k_final: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    /// Model name for an HTTP generator; other generators ignore it.
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub stage: Stage,
    pub payload: Value,
    pub timestamp: DateTime<Utc>,
    pub sequence: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub status: TurnStatus,
    pub answer: Option<AnnotatedAnswer>,
    pub error: Option<ApiError>,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub corpus_id: String,
    pub retrieval: RetrievalSettings,
    pub generation: GenerationSettings,
    pub created_at: DateTime<Utc>,
    pub turns: Vec<Turn>,
}

/// `{code, message}` error body; `status` is the HTTP status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip, default = "internal_status")]
    pub status: u16,
}

fn internal_status() -> u16 {
    500
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into(), status }
    }
    pub fn corpus_not_found(id: &str) -> Self {
        Self::new(404, "CorpusNotFound", format!("no corpus {id}"))
    }
    pub fn conversation_not_found(id: &str) -> Self {
        Self::new(404, "ConversationNotFound", format!("no conversation {id}"))
    }
    pub fn corpus_busy(id: &str) -> Self {
        Self::new(409, "CorpusBusy", format!("corpus {id} is being indexed"))
    }
    pub fn corpus_not_ready(id: &str) -> Self {
        Self::new(409, "CorpusNotReady", format!("corpus {id} has no ready index"))
    }
    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(400, code, message)
    }
    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "Internal", message)
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always returns the same instant; for reproducible records and traces.
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// Record id source: random UUIDs, or `<prefix>-0001`, `<prefix>-0002`, ...
pub enum IdGen {
    Random,
    Sequential(AtomicU64),
}

impl IdGen {
    pub fn sequential() -> Self {
        Self::Sequential(AtomicU64::new(0))
    }

    pub fn next(&self, prefix: &str) -> String {
        match self {
            Self::Random => format!("{prefix}-{}", uuid::Uuid::new_v4().simple()),
            Self::Sequential(n) => format!("{prefix}-{:04}", n.fetch_add(1, Ordering::Relaxed) + 1),
        }
    }

    /// Makes sure sequential ids continue after `existing` ones.
    pub fn observe(&self, existing: &str) {
        if let Self::Sequential(n) = self {
            if let Some(v) = existing.rsplit('-').next().and_then(|s| s.parse::<u64>().ok()) {
                n.fetch_max(v, Ordering::Relaxed);
            }
        }
    }
}
