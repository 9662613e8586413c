use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{corpus_fingerprint, IndexError};
use crate::chunking::Chunk;
use crate::retrieval::{HitPath, RetrievalHit};
use crate::text::tokenize;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position in [`SparseIndex::chunk_ids`].
    pub chunk: u32,
    pub tf: u32,
}

/// Inverted index over chunk `enriched_text`. Chunk ids are stored sorted,
/// so postings ordered by position are ordered by chunk id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    pub chunk_ids: Vec<String>,
    pub doc_lengths: Vec<u32>,
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub avg_doc_length: f64,
    pub k1: f64,
    pub b: f64,
    pub corpus_id: String,
}

impl SparseIndex {
    pub fn len(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }

    pub fn doc_length(&self, chunk_id: &str) -> Option<u32> {
        self.position(chunk_id).map(|i| self.doc_lengths[i])
    }

    pub fn position(&self, chunk_id: &str) -> Option<usize> {
        self.chunk_ids.binary_search_by(|c| c.as_str().cmp(chunk_id)).ok()
    }

    /// `(chunk_id, term_frequency)` pairs for `term`, ordered by chunk id.
    pub fn postings_for<'a>(&'a self, term: &str) -> impl Iterator<Item = (&'a str, u32)> + 'a {
        self.postings.get(term).into_iter().flatten().map(|p| (self.chunk_ids[p.chunk as usize].as_str(), p.tf))
    }

    pub(crate) fn from_parts(
        chunk_ids: Vec<String>,
        doc_lengths: Vec<u32>,
        postings: BTreeMap<String, Vec<Posting>>,
        k1: f64,
        b: f64,
    ) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if doc_lengths.is_empty() { 0.0 } else { total as f64 / doc_lengths.len() as f64 };
        let corpus_id = corpus_fingerprint(chunk_ids.iter().map(String::as_str));
        Self { chunk_ids, doc_lengths, postings, avg_doc_length, k1, b, corpus_id }
    }
}

pub fn build_sparse(chunks: &[Chunk]) -> Result<SparseIndex, IndexError> {
    if chunks.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut order: Vec<&Chunk> = chunks.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = order.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(IndexError::DuplicateChunkId(w[0].id.clone()));
    }

    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(order.len());
    for (pos, chunk) in order.iter().enumerate() {
        let tokens = tokenize(&chunk.enriched_text);
        doc_lengths.push(tokens.len() as u32);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (term, n) in tf {
            postings.entry(term).or_default().push(Posting { chunk: pos as u32, tf: n });
        }
    }
    let ids = order.into_iter().map(|c| c.id.clone()).collect();
    Ok(SparseIndex::from_parts(ids, doc_lengths, postings, BM25_K1, BM25_B))
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`
pub fn idf(n: f64, df: f64) -> f64 {
    libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
}

/// One query term's BM25 contribution.
pub fn bm25_term(tf: f64, doc_len: f64, avg_doc_len: f64, idf: f64, k1: f64, b: f64) -> f64 {
    idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * doc_len / avg_doc_len))
}

/// Top-`k` chunks by BM25 over the distinct query terms. Chunks sharing no
/// term with the query are not returned; ties go to the smaller chunk id.
pub fn search_sparse(index: &SparseIndex, query: &str, k: usize) -> Vec<RetrievalHit> {
    let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    let n = index.len() as f64;
    let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
    for term in &terms {
        let Some(list) = index.postings.get(term) else { continue };
        let w = idf(n, list.len() as f64);
        for p in list {
            let dl = index.doc_lengths[p.chunk as usize] as f64;
            *scores.entry(p.chunk).or_default() +=
                bm25_term(p.tf as f64, dl, index.avg_doc_length, w, index.k1, index.b);
        }
    }
    let scored = scores.into_iter().map(|(pos, s)| (index.chunk_ids[pos as usize].as_str(), s));
    crate::retrieval::ranked_hits(scored, k, HitPath::Sparse, query)
}
