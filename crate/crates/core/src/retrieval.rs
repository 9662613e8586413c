//! Multi-path retrieval with reciprocal rank fusion, LLM usefulness judging
//! and sentence-level evidence extraction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::chunking::Chunk;
use crate::embedding::cosine;
use crate::index::{search_dense, search_sparse, DenseIndex, SparseIndex};
use crate::ingest::Document;
use crate::prompts;
use crate::provider::{ChatRequest, Embedder, Llm, ProviderError};
use crate::query::QueryBundle;
use crate::text::{fill, intersection_len, token_set};

pub const RRF_K: usize = 60;
pub const K_PER_PATH: usize = 20;
pub const K_FINAL: usize = 8;

/// Scores this close (relative) count as tied and fall back to chunk id.
const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitPath {
    Sparse,
    Dense,
    Fused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f64,
    pub path: HitPath,
    pub rank: usize,
    pub variant_text: String,
}

/// Sorts by score (descending) then chunk id, keeps `k`, assigns ranks.
pub(crate) fn ranked_hits<'a>(
    scored: impl Iterator<Item = (&'a str, f64)>,
    k: usize,
    path: HitPath,
    variant: &str,
) -> Vec<RetrievalHit> {
    let mut v: Vec<(&str, f64)> = scored.collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.truncate(k);
    v.into_iter()
        .enumerate()
        .map(|(i, (id, score))| RetrievalHit {
            chunk_id: id.to_string(),
            score,
            path,
            rank: i + 1,
            variant_text: variant.to_string(),
        })
        .collect()
}

/// One ranked list entering fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub chunk_ids: Vec<String>,
    pub weight: f64,
    /// Query variant that produced the list.
    pub label: String,
}

impl Ranking {
    pub fn new(chunk_ids: Vec<String>, weight: f64, label: impl Into<String>) -> Self {
        Self { chunk_ids, weight, label: label.into() }
    }

    pub fn from_hits(hits: &[RetrievalHit], weight: f64, label: &str) -> Self {
        Self::new(hits.iter().map(|h| h.chunk_id.clone()).collect(), weight, label)
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_EPSILON * a.abs().max(b.abs())
}

/// Reciprocal rank fusion: `score(c) = Σ weight / (k_const + rank(c))`.
///
/// Contributions are summed largest-first so the result does not depend on
/// the order of `rankings`.
pub fn rrf_fuse(rankings: &[Ranking], k_const: usize) -> Vec<RetrievalHit> {
    let mut contributions: BTreeMap<&str, Vec<(f64, &str)>> = BTreeMap::new();
    for ranking in rankings {
        let mut seen: Vec<&str> = Vec::new();
        for (i, id) in ranking.chunk_ids.iter().enumerate() {
            if seen.contains(&id.as_str()) {
                continue;
            }
            seen.push(id);
            let c = ranking.weight / (k_const + i + 1) as f64;
            contributions.entry(id).or_default().push((c, &ranking.label));
        }
    }

    let mut fused: Vec<(&str, f64, &str)> = contributions
        .into_iter()
        .map(|(id, mut parts)| {
            parts.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            let score = parts.iter().map(|p| p.0).sum::<f64>();
            (id, score, parts[0].1)
        })
        .collect();
    fused.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    // Re-sort near-equal runs by id so float noise cannot reorder ties.
    let mut start = 0;
    while start < fused.len() {
        let mut end = start + 1;
        while end < fused.len() && near(fused[start].1, fused[end].1) {
            end += 1;
        }
        fused[start..end].sort_by(|a, b| a.0.cmp(b.0));
        start = end;
    }

    fused
        .into_iter()
        .enumerate()
        .map(|(i, (id, score, label))| RetrievalHit {
            chunk_id: id.to_string(),
            score,
            path: HitPath::Fused,
            rank: i + 1,
            variant_text: label.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("sparse and dense indexes cover different chunk sets")]
    IndexMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalParams {
    pub k_per_path: usize,
    pub k_final: usize,
    pub k_const: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self { k_per_path: K_PER_PATH, k_final: K_FINAL, k_const: RRF_K }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub hits: Vec<RetrievalHit>,
    pub warnings: Vec<String>,
}

/// Runs sparse and (when available) dense search for every query variant and
/// fuses all lists, each weighted by its variant's weight.
pub fn retrieve_multipath(
    bundle: &QueryBundle,
    sparse: &SparseIndex,
    dense: Option<&DenseIndex>,
    embedder: Option<&dyn Embedder>,
    params: RetrievalParams,
) -> Result<Retrieved, RetrievalError> {
    if dense.is_some_and(|d| d.corpus_id != sparse.corpus_id) {
        return Err(RetrievalError::IndexMismatch);
    }
    let variants = bundle.weighted();
    let mut rankings = Vec::new();
    let mut warnings = Vec::new();
    for &(text, weight) in &variants {
        let hits = search_sparse(sparse, text, params.k_per_path);
        rankings.push(Ranking::from_hits(&hits, weight, text));
    }
    if let (Some(dense), Some(embedder)) = (dense, embedder) {
        let texts: Vec<&str> = variants.iter().map(|v| v.0).collect();
        match embedder.embed(&texts) {
            Ok(vectors) if vectors.len() == texts.len() => {
                for (&(text, weight), v) in variants.iter().zip(&vectors) {
                    match search_dense(dense, v, params.k_per_path) {
                        Ok(hits) => rankings.push(Ranking::from_hits(&hits, weight, text)),
                        Err(e) => warnings.push(format!("dense path skipped: {e}")),
                    }
                }
            }
            Ok(_) => warnings.push("dense path skipped: embedder returned the wrong number of vectors".into()),
            Err(e) => warnings.push(format!("dense path skipped: {e}")),
        }
    }
    let mut hits = rrf_fuse(&rankings, params.k_const);
    hits.truncate(params.k_final);
    Ok(Retrieved { hits, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Judged,
    /// Reply was not the expected JSON; kept (fail-open).
    ParseFailure,
    /// Provider failed; kept (fail-open).
    Degraded,
    /// No judge configured; kept.
    Unjudged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityVerdict {
    pub chunk_id: String,
    pub useful: bool,
    pub rationale: String,
    pub status: VerdictStatus,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JudgeReply {
    useful: bool,
    #[serde(default)]
    rationale: String,
}

pub fn usefulness_request(query: &str, chunk: &Chunk) -> ChatRequest {
    ChatRequest::user(fill(
        prompts::USEFULNESS,
        &[("query", query), ("title", &chunk.context_header), ("passage", chunk.enriched_text.trim())],
    ))
}

fn strip_fence(s: &str) -> &str {
    let s = s.trim();
    match s.strip_prefix("```") {
        Some(rest) => {
            let rest = rest.strip_prefix("json").unwrap_or(rest);
            rest.strip_suffix("```").unwrap_or(rest).trim()
        }
        None => s,
    }
}

/// Asks the judge whether `chunk` helps answer `query`. Any failure keeps
/// the chunk.
pub fn judge_usefulness(query: &str, chunk: &Chunk, llm: Option<&dyn Llm>) -> UtilityVerdict {
    let verdict = |useful, rationale: &str, status| UtilityVerdict {
        chunk_id: chunk.id.clone(),
        useful,
        rationale: rationale.to_string(),
        status,
    };
    let Some(llm) = llm else {
        return verdict(true, "", VerdictStatus::Unjudged);
    };
    match llm.complete(&usefulness_request(query, chunk)) {
        Err(_) => verdict(true, "judger_degraded", VerdictStatus::Degraded),
        Ok(reply) => match serde_json::from_str::<JudgeReply>(strip_fence(&reply)) {
            Ok(r) => verdict(r.useful, &r.rationale, VerdictStatus::Judged),
            Err(_) => verdict(true, "parse_failure", VerdictStatus::ParseFailure),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSpan {
    pub chunk_id: String,
    pub doc_id: String,
    /// Byte range of a document sentence.
    pub sentence_span: (usize, usize),
    pub sentence_index: usize,
    pub score: f64,
}

#[derive(Clone, Copy)]
pub enum EvidenceScorer<'a> {
    /// `|query tokens ∩ sentence tokens| / |query tokens|`
    Lexical,
    Embedding(&'a dyn Embedder),
}

pub fn lexical_overlap(query: &str, sentence: &str) -> f64 {
    let q = token_set(query);
    if q.is_empty() {
        return 0.0;
    }
    intersection_len(&q, &token_set(sentence)) as f64 / q.len() as f64
}

/// Picks the `max_sentences` best-scoring sentences of `chunk` and returns
/// them in document order.
pub fn extract_evidence(
    query: &str,
    chunk: &Chunk,
    doc: &Document,
    scorer: EvidenceScorer<'_>,
    max_sentences: usize,
) -> Result<Vec<EvidenceSpan>, ProviderError> {
    let (first, last) = chunk.sentences;
    let sentences = doc.sentences.get(first..last.min(doc.sentences.len())).unwrap_or_default();
    if sentences.is_empty() || max_sentences == 0 {
        return Ok(Vec::new());
    }
    let texts: Vec<&str> = sentences.iter().map(|s| s.text(&doc.body)).collect();
    let scores: Vec<f64> = match scorer {
        EvidenceScorer::Lexical => texts.iter().map(|t| lexical_overlap(query, t)).collect(),
        EvidenceScorer::Embedding(embedder) => {
            let mut batch = Vec::with_capacity(texts.len() + 1);
            batch.push(query);
            batch.extend_from_slice(&texts);
            let vectors = embedder.embed(&batch)?;
            if vectors.len() != batch.len() {
                return Err(ProviderError::Protocol("embedding count mismatch".into()));
            }
            vectors[1..].iter().map(|v| cosine(&vectors[0], v)).collect()
        }
    };
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(max_sentences);
    order.sort_unstable();
    Ok(order
        .into_iter()
        .map(|i| EvidenceSpan {
            chunk_id: chunk.id.clone(),
            doc_id: doc.id.clone(),
            sentence_span: (sentences[i].start, sentences[i].end),
            sentence_index: sentences[i].index,
            score: scores[i].clamp(0.0, 1.0),
        })
        .collect())
}
