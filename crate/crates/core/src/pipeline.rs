//! End-to-end orchestration: corpus building and the per-question pipeline
//! that reports each stage through a trace sink.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chunking::{chunk_document, enrich, Chunk, ChunkError, ChunkStrategy};
use crate::citation::{annotate, evidence_pool, AnnotatedAnswer, CitationConfig};
use crate::generation::{assemble_prompt, generate, parse_structured_answer, GenerationError, DEFAULT_BUDGET_CHARS};
use crate::index::{build_dense, build_sparse, DenseIndex, IndexError, SparseIndex};
use crate::ingest::Document;
use crate::provider::{Embedder, Llm};
use crate::query::{rewrite, HistoryTurn, QueryError, RewriteKind};
use crate::retrieval::{
    extract_evidence, judge_usefulness, retrieve_multipath, EvidenceScorer, EvidenceSpan, RetrievalError,
    RetrievalParams, VerdictStatus,
};

/// Answer used when no evidence survives retrieval and judging; the
/// generator is not called.
pub const INSUFFICIENT_ANSWER: &str = "The knowledge base does not contain enough information to answer this question.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    QueryUnderstanding,
    Retrieval,
    Utility,
    Generation,
    Citation,
    Error,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::QueryUnderstanding => "query_understanding",
            Self::Retrieval => "retrieval",
            Self::Utility => "utility",
            Self::Generation => "generation",
            Self::Citation => "citation",
            Self::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("no documents to index")]
    NoDocuments,
    #[error(transparent)]
    Chunking(#[from] ChunkError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Chunks, sparse index and (when an embedder is given) dense index of a
/// document set.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltCorpus {
    pub chunks: Vec<Chunk>,
    pub sparse: SparseIndex,
    pub dense: Option<DenseIndex>,
}

/// Chunking, decontextualization and indexing. `coref` is the optional
/// coreference provider.
pub fn build_corpus(
    docs: &[Document],
    strategy: ChunkStrategy,
    coref: Option<&dyn Llm>,
    embedder: Option<&dyn Embedder>,
) -> Result<BuiltCorpus, BuildError> {
    if docs.is_empty() {
        return Err(BuildError::NoDocuments);
    }
    let mut chunks = Vec::new();
    for doc in docs {
        for mut chunk in chunk_document(doc, strategy, embedder)? {
            enrich(&mut chunk, doc, coref);
            chunks.push(chunk);
        }
    }
    chunks.sort_by(|a, b| a.id.cmp(&b.id));
    let sparse = build_sparse(&chunks)?;
    let dense = embedder.map(|e| build_dense(&chunks, e)).transpose()?;
    Ok(BuiltCorpus { chunks, sparse, dense })
}

/// Read-only view of an indexed corpus.
#[derive(Clone, Copy)]
pub struct CorpusView<'a> {
    pub docs: &'a BTreeMap<String, Document>,
    pub chunks: &'a BTreeMap<String, Chunk>,
    pub sparse: &'a SparseIndex,
    pub dense: Option<&'a DenseIndex>,
}

#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub rewriter: Option<&'a dyn Llm>,
    pub judge: Option<&'a dyn Llm>,
    pub generator: &'a dyn Llm,
    pub embedder: Option<&'a dyn Embedder>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceMode {
    #[default]
    Lexical,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub rewrite_modes: Vec<RewriteKind>,
    pub retrieval: RetrievalParams,
    pub evidence: EvidenceMode,
    pub evidence_per_chunk: usize,
    /// Evidence sentences must score strictly above this.
    pub min_evidence_score: f64,
    pub budget_chars: usize,
    pub citation: CitationConfig,
    /// Emit one generation event per streamed delta; otherwise one event
    /// with the whole answer.
    pub stream: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rewrite_modes: Vec::new(),
            retrieval: RetrievalParams::default(),
            evidence: EvidenceMode::Lexical,
            evidence_per_chunk: 3,
            min_evidence_score: 0.0,
            budget_chars: DEFAULT_BUDGET_CHARS,
            citation: CitationConfig::default(),
            stream: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("index refers to unknown chunk {0}")]
    UnknownChunk(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Query(_) => "EmptyQuery",
            Self::Retrieval(_) | Self::UnknownChunk(_) => "IndexMismatch",
            Self::Generation(GenerationError::ProviderTimeout) => "ProviderTimeout",
            Self::Generation(GenerationError::LlmUnavailable(_)) => "LlmUnavailable",
            Self::Generation(_) => "GenerationFailed",
        }
    }
}

/// Receives `(stage, payload)` in pipeline order.
pub type TraceSink<'a> = dyn FnMut(Stage, Value) + 'a;

fn fail(sink: &mut TraceSink<'_>, stage: Stage, e: PipelineError) -> PipelineError {
    sink(Stage::Error, json!({"stage": stage.as_str(), "code": e.code(), "message": e.to_string()}));
    e
}

/// Answers one question. An empty query fails before any event; any later
/// failure emits a terminal `error` event. On success the last event is
/// `citation` carrying the annotated answer.
pub fn answer_question(
    query: &str,
    history: &[HistoryTurn],
    corpus: CorpusView<'_>,
    providers: Providers<'_>,
    config: &PipelineConfig,
    sink: &mut TraceSink<'_>,
) -> Result<AnnotatedAnswer, PipelineError> {
    let rewritten = rewrite(query, &config.rewrite_modes, providers.rewriter, history)?;
    let bundle = rewritten.bundle;
    sink(
        Stage::QueryUnderstanding,
        json!({"original": bundle.original, "variants": bundle.variants, "warnings": rewritten.warnings}),
    );

    let retrieved = retrieve_multipath(&bundle, corpus.sparse, corpus.dense, providers.embedder, config.retrieval)
        .map_err(|e| fail(sink, Stage::Retrieval, e.into()))?;
    let mut hits = Vec::with_capacity(retrieved.hits.len());
    for h in &retrieved.hits {
        let chunk = corpus
            .chunks
            .get(&h.chunk_id)
            .ok_or_else(|| fail(sink, Stage::Retrieval, PipelineError::UnknownChunk(h.chunk_id.clone())))?;
        hits.push((h, chunk));
    }
    sink(
        Stage::Retrieval,
        json!({
            "hits": hits.iter().map(|(h, c)| json!({
                "chunk_id": h.chunk_id, "doc_id": c.doc_id, "rank": h.rank, "score": h.score,
                "title": corpus.docs.get(&c.doc_id).map(|d| d.title.as_str()).unwrap_or(""),
            })).collect::<Vec<_>>(),
            "warnings": retrieved.warnings,
        }),
    );

    let query = bundle.original.as_str();
    let verdicts: Vec<_> = hits.iter().map(|(_, c)| judge_usefulness(query, c, providers.judge)).collect();
    let degraded = verdicts.iter().any(|v| v.status == VerdictStatus::Degraded);
    let scorer = match (config.evidence, providers.embedder) {
        (EvidenceMode::Embedding, Some(e)) => EvidenceScorer::Embedding(e),
        _ => EvidenceScorer::Lexical,
    };
    let mut evidence: Vec<EvidenceSpan> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    for ((_, chunk), verdict) in hits.iter().zip(&verdicts) {
        let Some(doc) = corpus.docs.get(&chunk.doc_id).filter(|_| verdict.useful) else { continue };
        let spans = match extract_evidence(query, chunk, doc, scorer, config.evidence_per_chunk) {
            Ok(s) => s,
            Err(e) => {
                warnings.push(format!("embedding evidence scorer failed, used lexical: {e}"));
                extract_evidence(query, chunk, doc, EvidenceScorer::Lexical, config.evidence_per_chunk)
                    .expect("lexical scoring cannot fail")
            }
        };
        for s in spans.into_iter().filter(|s| s.score > config.min_evidence_score) {
            if !evidence.iter().any(|e| e.doc_id == s.doc_id && e.sentence_span == s.sentence_span) {
                evidence.push(s);
            }
        }
    }
    sink(
        Stage::Utility,
        json!({
            "verdicts": verdicts,
            "judger_degraded": degraded,
            "evidence": evidence.iter().map(|e| json!({
                "chunk_id": e.chunk_id, "doc_id": e.doc_id, "span": e.sentence_span,
                "sentence_index": e.sentence_index, "score": e.score,
                "text": corpus.docs.get(&e.doc_id).and_then(|d| d.body.get(e.sentence_span.0..e.sentence_span.1)),
            })).collect::<Vec<_>>(),
            "warnings": warnings,
        }),
    );

    let raw = if evidence.is_empty() {
        sink(Stage::Generation, json!({"context_blocks": [], "insufficient_evidence": true}));
        sink(Stage::Generation, json!({"delta": INSUFFICIENT_ANSWER}));
        INSUFFICIENT_ANSWER.to_string()
    } else {
        let prompt = assemble_prompt(query, &evidence, corpus.docs, history, config.budget_chars)
            .map_err(|e| fail(sink, Stage::Generation, e.into()))?;
        sink(
            Stage::Generation,
            json!({"context_blocks": prompt.context_blocks.iter().map(|b| json!({
                "block_id": b.block_id, "doc_id": b.doc_id, "title": b.title, "sentences": b.sentences.len(),
            })).collect::<Vec<_>>()}),
        );
        let result = if config.stream {
            generate(&prompt, providers.generator, Some(&mut |d: &str| sink(Stage::Generation, json!({"delta": d}))))
        } else {
            generate(&prompt, providers.generator, None)
        };
        let raw = result.map_err(|e| fail(sink, Stage::Generation, e.into()))?;
        if !config.stream {
            sink(Stage::Generation, json!({"delta": raw}));
        }
        raw
    };

    let answer = parse_structured_answer(&raw);
    let pool = evidence_pool(&evidence, corpus.docs);
    let annotated = annotate(&answer, &pool, corpus.docs, &config.citation);
    sink(Stage::Citation, serde_json::to_value(&annotated).expect("annotated answer serializes"));
    Ok(annotated)
}
