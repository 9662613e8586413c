//! Attribution-first retrieval-augmented generation.
//!
//! The crate holds every pure stage of the pipeline: document parsing and
//! sentence segmentation, semantic chunking with decontextualization, sparse
//! (BM25) and dense indexes, query rewriting, multi-path retrieval with rank
//! fusion, usefulness judging, evidence extraction, grounded prompt assembly,
//! structured answer parsing and post-generation citation.
//!
//! It is `no_std` (with `alloc`). Model access goes through the [`provider`]
//! traits; IO, persistence, HTTP and the CLI live in the `trustrag` crate.

#![no_std]

#[macro_use]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chunking;
pub mod citation;
pub mod dates;
pub mod embedding;
pub mod generation;
pub mod index;
pub mod ingest;
pub mod pipeline;
pub mod prompts;
pub mod provider;
pub mod query;
pub mod retrieval;
pub mod text;

pub use chunking::{Chunk, ChunkError};
pub use citation::{AnnotatedAnswer, Citation, CitationGroup, CrossReference};
pub use embedding::EmbeddingVector;
pub use generation::{AnswerSentence, Prompt, StructuredAnswer};
pub use index::{DenseIndex, SparseIndex};
pub use ingest::{Document, DocumentFormat, IngestError, SentenceSpan};
pub use pipeline::{answer_question, build_corpus, Stage};
pub use provider::{ChatRequest, Embedder, Llm, ProviderError};
pub use query::QueryBundle;
pub use retrieval::{EvidenceSpan, RetrievalHit, UtilityVerdict};
