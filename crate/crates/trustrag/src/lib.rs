//! TrustRAG engine: persistent corpora and conversations, HTTP model
//! providers, the HTTP service and the `trustrag` CLI.
//!
//! The pipeline stages themselves live in [`trustrag_core`], re-exported
//! here as [`rag`].

pub use trustrag_core as rag;

pub mod config;
pub mod engine;
pub mod http;
pub mod model;
pub mod report;
pub mod server;
pub mod storage;
pub mod store;

pub use config::{Config, ProviderSet};
pub use engine::Engine;
pub use model::{ApiError, TraceEvent};
pub use storage::FileStorage;
pub use store::StoreError;
