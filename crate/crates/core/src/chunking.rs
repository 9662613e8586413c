//! Sentence-aligned chunking with hierarchical context headers and
//! decontextualization (date normalization plus LLM coreference rewriting).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dates::normalize_relative_dates;
use crate::embedding::{cosine, EmbeddingVector};
use crate::ingest::Document;
use crate::prompts;
use crate::provider::{ChatRequest, Embedder, Llm, ProviderError};
use crate::text::fill;

pub const DEFAULT_BREAKPOINT_PERCENTILE: f64 = 90.0;
/// Sentences of preceding context handed to the coreference prompt.
pub const COREF_LOOKBACK: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChunkError {
    #[error("invalid chunk parameters: {0}")]
    InvalidChunkParams(String),
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub doc_id: String,
    /// Byte range into the document body.
    pub span: (usize, usize),
    pub seq: usize,
    /// Sentence index range `[first, last)` into the document.
    pub sentences: (usize, usize),
    pub text: String,
    pub context_header: String,
    pub enriched_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum ChunkStrategy {
    Fixed { target_size: usize, overlap: usize },
    Semantic { breakpoint_percentile: f64 },
}

impl Default for ChunkStrategy {
    fn default() -> Self {
        Self::Fixed { target_size: 4, overlap: 0 }
    }
}

pub fn chunk_id(doc_id: &str, seq: usize) -> String {
    format!("{}-{:04}", doc_id.get(..16).unwrap_or(doc_id), seq)
}

/// `title > heading > subheading` for the section enclosing `offset`.
pub fn context_header_at(doc: &Document, offset: usize) -> String {
    let mut stack: Vec<(u8, &str)> = Vec::new();
    for h in doc.headings.iter().take_while(|h| h.offset <= offset) {
        while stack.last().is_some_and(|&(level, _)| level >= h.level) {
            stack.pop();
        }
        stack.push((h.level, &h.text));
    }
    let mut header = doc.title.clone();
    for (_, text) in stack {
        header.push_str(" > ");
        header.push_str(text);
    }
    header
}

fn join_header(header: &str, text: &str) -> String {
    let text = text.trim();
    if header.is_empty() {
        return text.to_string();
    }
    let mut s = String::with_capacity(header.len() + text.len() + 1);
    s.push_str(header);
    s.push('\n');
    s.push_str(text);
    s
}

/// Recomputes `context_header` from the document outline and refreshes
/// `enriched_text` as header plus text.
pub fn attach_context_header(mut chunk: Chunk, doc: &Document) -> Chunk {
    let anchor = doc.sentences.get(chunk.sentences.0).map_or(chunk.span.0, |s| s.start);
    chunk.context_header = context_header_at(doc, anchor);
    chunk.enriched_text = join_header(&chunk.context_header, &chunk.text);
    chunk
}

/// Materializes sentence groups as chunks. Without overlap each chunk runs to
/// the start of the next, so spans tile the body exactly.
fn build_chunks(doc: &Document, groups: &[(usize, usize)], overlapping: bool) -> Vec<Chunk> {
    let s = &doc.sentences;
    groups
        .iter()
        .enumerate()
        .map(|(seq, &(first, last))| {
            let start = if seq == 0 { 0 } else { s[first].start };
            let end = if seq + 1 == groups.len() {
                doc.body.len()
            } else if overlapping {
                s[last - 1].end
            } else {
                s[groups[seq + 1].0].start
            };
            let chunk = Chunk {
                id: chunk_id(&doc.id, seq),
                doc_id: doc.id.clone(),
                span: (start, end),
                seq,
                sentences: (first, last),
                text: doc.body[start..end].to_string(),
                context_header: String::new(),
                enriched_text: String::new(),
                embedding: None,
                metadata: BTreeMap::new(),
            };
            attach_context_header(chunk, doc)
        })
        .collect()
}

/// Windows of `target_size` sentences; consecutive windows share `overlap`.
pub fn chunk_fixed(doc: &Document, target_size: usize, overlap: usize) -> Result<Vec<Chunk>, ChunkError> {
    if target_size == 0 || overlap >= target_size {
        return Err(ChunkError::InvalidChunkParams(format!(
            "need target_size >= 1 and overlap < target_size (got {target_size}, {overlap})"
        )));
    }
    let n = doc.sentences.len();
    let mut groups = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + target_size).min(n);
        groups.push((start, end));
        if end == n {
            break;
        }
        start += target_size - overlap;
    }
    Ok(build_chunks(doc, &groups, overlap > 0))
}

/// Linear-interpolated percentile (`p` in 0..=100) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(rank) as usize;
    let hi = libm::ceil(rank) as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Cosine distances between consecutive windows of sentence `i` and its
/// immediate neighbours.
pub fn adjacent_distances(doc: &Document, embedder: &dyn Embedder) -> Result<Vec<f64>, ChunkError> {
    let s = &doc.sentences;
    if s.len() < 2 {
        return Ok(Vec::new());
    }
    let windows: Vec<&str> = (0..s.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(s.len() - 1);
            &doc.body[s[lo].start..s[hi].end]
        })
        .collect();
    let vectors = embedder.embed(&windows).map_err(ChunkError::EmbedderUnavailable)?;
    if vectors.len() != windows.len() {
        return Err(ChunkError::EmbedderUnavailable(ProviderError::Protocol(format!(
            "asked for {} embeddings, got {}",
            windows.len(),
            vectors.len()
        ))));
    }
    Ok(vectors
        .windows(2)
        .map(|w| {
            let d = 1.0 - cosine(&w[0], &w[1]);
            // rounding noise on identical vectors
            if d < 1e-12 {
                0.0
            } else {
                d
            }
        })
        .collect())
}

/// Places a boundary after sentence `i` when the distance to sentence `i+1`
/// strictly exceeds the threshold. The threshold is the percentile of all
/// distances, except at 0 where it is 0 (split wherever windows differ).
pub fn breakpoints(distances: &[f64], breakpoint_percentile: f64) -> Vec<usize> {
    let threshold = if breakpoint_percentile <= 0.0 { 0.0 } else { percentile(distances, breakpoint_percentile) };
    distances.iter().enumerate().filter(|&(_, &d)| d > threshold).map(|(i, _)| i).collect()
}

/// Splits where adjacent sentence windows drift apart in embedding space.
pub fn chunk_semantic(
    doc: &Document,
    embedder: &dyn Embedder,
    breakpoint_percentile: f64,
) -> Result<Vec<Chunk>, ChunkError> {
    if !(0.0..=100.0).contains(&breakpoint_percentile) {
        return Err(ChunkError::InvalidChunkParams(format!(
            "breakpoint_percentile must be within 0..=100 (got {breakpoint_percentile})"
        )));
    }
    let n = doc.sentences.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let distances = adjacent_distances(doc, embedder)?;
    let mut groups = Vec::new();
    let mut first = 0;
    for b in breakpoints(&distances, breakpoint_percentile) {
        groups.push((first, b + 1));
        first = b + 1;
    }
    groups.push((first, n));
    Ok(build_chunks(doc, &groups, false))
}

pub fn chunk_document(
    doc: &Document,
    strategy: ChunkStrategy,
    embedder: Option<&dyn Embedder>,
) -> Result<Vec<Chunk>, ChunkError> {
    match strategy {
        ChunkStrategy::Fixed { target_size, overlap } => chunk_fixed(doc, target_size, overlap),
        ChunkStrategy::Semantic { breakpoint_percentile } => {
            let embedder = embedder.ok_or_else(|| {
                ChunkError::EmbedderUnavailable(ProviderError::Unavailable("no embedder configured".into()))
            })?;
            chunk_semantic(doc, embedder, breakpoint_percentile)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorefStatus {
    Applied,
    /// The provider failed; only rule-based steps ran.
    Skipped,
    /// No provider was supplied.
    Disabled,
}

impl CorefStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Applied => "applied",
            Self::Skipped => "skipped",
            Self::Disabled => "disabled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decontextualized {
    pub enriched_text: String,
    pub coref: CorefStatus,
    pub dates_normalized: bool,
}

pub fn coreference_request(context: &str, passage: &str) -> ChatRequest {
    let context = if context.trim().is_empty() { "(none)" } else { context.trim() };
    ChatRequest::user(fill(prompts::COREFERENCE, &[("context", context), ("passage", passage.trim())]))
}

/// Date normalization, then coreference rewriting with up to two sentences of
/// preceding context, then the context header. The chunk is not modified.
pub fn decontextualize(chunk: &Chunk, doc: &Document, llm: Option<&dyn Llm>) -> Decontextualized {
    let text = chunk.text.trim();
    let (text, dates_normalized) = match doc.publish_date {
        Some(date) => (normalize_relative_dates(text, date), true),
        None => (text.to_string(), false),
    };

    let (text, coref) = match llm {
        None => (text, CorefStatus::Disabled),
        Some(llm) => {
            let first = chunk.sentences.0;
            let context = match doc.sentences.get(first.saturating_sub(COREF_LOOKBACK)..first) {
                Some(prev) if !prev.is_empty() => &doc.body[prev[0].start..prev[prev.len() - 1].end],
                _ => "",
            };
            match llm.complete(&coreference_request(context, &text)) {
                Ok(out) => {
                    let out = out.trim();
                    let out = out.strip_prefix("Rewritten passage:").unwrap_or(out).trim();
                    if out.is_empty() {
                        (text, CorefStatus::Skipped)
                    } else {
                        (out.to_string(), CorefStatus::Applied)
                    }
                }
                Err(_) => (text, CorefStatus::Skipped),
            }
        }
    };

    Decontextualized { enriched_text: join_header(&chunk.context_header, &text), coref, dates_normalized }
}

/// Runs [`decontextualize`] and stores the result plus `coref` / `dates`
/// metadata flags on the chunk.
pub fn enrich(chunk: &mut Chunk, doc: &Document, llm: Option<&dyn Llm>) {
    let d = decontextualize(chunk, doc, llm);
    chunk.enriched_text = d.enriched_text;
    chunk.metadata.insert("coref".into(), d.coref.as_str().into());
    let dates = if d.dates_normalized { "normalized" } else { "no_publish_date" };
    chunk.metadata.insert("dates".into(), dates.into());
}
