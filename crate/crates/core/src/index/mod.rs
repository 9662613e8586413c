//! Sparse (BM25) and dense (cosine) chunk indexes.

mod codec;
mod dense;
mod sparse;

use alloc::string::String;
use alloc::vec::Vec;
use sha2::{Digest, Sha256};

pub use codec::{
    decode_dense, decode_sparse, encode_dense, encode_sparse, CodecError, DENSE_MAGIC, FORMAT_VERSION, SPARSE_MAGIC,
};
pub use dense::{build_dense, search_dense, DenseIndex};
pub use sparse::{bm25_term, build_sparse, idf, search_sparse, Posting, SparseIndex, BM25_B, BM25_K1};

use crate::provider::ProviderError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("cannot build an index over zero chunks")]
    EmptyCorpus,
    #[error("duplicate chunk id {0}")]
    DuplicateChunkId(String),
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chunk {0} has a zero or non-finite embedding")]
    DegenerateEmbedding(String),
    #[error("embedder failed: {0}")]
    Embedder(ProviderError),
}

/// Fingerprint of a chunk set: SHA-256 over the sorted chunk ids.
pub fn corpus_fingerprint<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    crate::text::hex(&h.finalize())
}
