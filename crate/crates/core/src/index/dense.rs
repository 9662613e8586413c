use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{corpus_fingerprint, IndexError};
use crate::chunking::Chunk;
use crate::embedding::{dot, EmbeddingVector};
use crate::provider::Embedder;
use crate::retrieval::{HitPath, RetrievalHit};

const EMBED_BATCH: usize = 64;

/// Flat exhaustive-scan vector index. Rows are unit length and ordered by
/// chunk id; `vectors` is row-major with `dims` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    pub dims: usize,
    pub chunk_ids: Vec<String>,
    pub vectors: Vec<f64>,
    pub corpus_id: String,
}

impl DenseIndex {
    /// Builds from raw `(chunk_id, vector)` rows, normalizing each.
    pub fn from_rows(mut rows: Vec<(String, Vec<f64>)>) -> Result<Self, IndexError> {
        let dims = rows.first().ok_or(IndexError::EmptyCorpus)?.1.len();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IndexError::DuplicateChunkId(w[0].0.clone()));
        }
        let mut vectors = Vec::with_capacity(rows.len() * dims);
        let mut ids = Vec::with_capacity(rows.len());
        for (id, v) in rows {
            if v.len() != dims {
                return Err(IndexError::DimensionMismatch { expected: dims, got: v.len() });
            }
            let unit = EmbeddingVector::unit(v).ok_or_else(|| IndexError::DegenerateEmbedding(id.clone()))?;
            vectors.extend_from_slice(&unit.values);
            ids.push(id);
        }
        let corpus_id = corpus_fingerprint(ids.iter().map(String::as_str));
        Ok(Self { dims, chunk_ids: ids, vectors, corpus_id })
    }

    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dims..(i + 1) * self.dims]
    }

    pub fn vector(&self, chunk_id: &str) -> Option<&[f64]> {
        let i = self.chunk_ids.binary_search_by(|c| c.as_str().cmp(chunk_id)).ok()?;
        Some(self.row(i))
    }
}

/// Embeds each chunk's `enriched_text` and indexes the result.
pub fn build_dense(chunks: &[Chunk], embedder: &dyn Embedder) -> Result<DenseIndex, IndexError> {
    if chunks.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut rows = Vec::with_capacity(chunks.len());
    for batch in chunks.chunks(EMBED_BATCH) {
        let texts: Vec<&str> = batch.iter().map(|c| c.enriched_text.as_str()).collect();
        let vectors = embedder.embed(&texts).map_err(IndexError::Embedder)?;
        if vectors.len() != batch.len() {
            return Err(IndexError::Embedder(crate::provider::ProviderError::Protocol(alloc::format!(
                "asked for {} embeddings, got {}",
                batch.len(),
                vectors.len()
            ))));
        }
        rows.extend(batch.iter().map(|c| c.id.clone()).zip(vectors));
    }
    DenseIndex::from_rows(rows)
}

/// Exact top-`k` by cosine similarity. A zero query vector matches nothing.
pub fn search_dense(index: &DenseIndex, query: &[f64], k: usize) -> Result<Vec<RetrievalHit>, IndexError> {
    if query.len() != index.dims {
        return Err(IndexError::DimensionMismatch { expected: index.dims, got: query.len() });
    }
    let Some(q) = EmbeddingVector::unit(query.to_vec()) else {
        return Ok(Vec::new());
    };
    let scored = (0..index.len()).map(|i| (index.chunk_ids[i].as_str(), dot(index.row(i), &q.values)));
    Ok(crate::retrieval::ranked_hits(scored, k, HitPath::Dense, ""))
}
