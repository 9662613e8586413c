//! JSON-file persistence for corpora, documents and conversations.
//!
//! ```text
//! <root>/corpora/<corpus>/corpus.json
//! <root>/corpora/<corpus>/documents/<doc>.json
//! <root>/corpora/<corpus>/index/            see `store`
//! <root>/conversations/<conversation>.json
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use trustrag_core::ingest::Document;

use crate::model::{Conversation, CorpusRecord};

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("storage io failure at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("unreadable record {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

pub trait Storage: Send + Sync {
    fn load_corpora(&self) -> Result<Vec<CorpusRecord>, StorageError>;
    fn save_corpus(&self, corpus: &CorpusRecord) -> Result<(), StorageError>;
    fn delete_corpus(&self, corpus_id: &str) -> Result<(), StorageError>;
    fn save_document(&self, corpus_id: &str, doc: &Document) -> Result<(), StorageError>;
    fn load_documents(&self, corpus_id: &str) -> Result<Vec<Document>, StorageError>;
    /// Directory holding the corpus' persisted index.
    fn index_dir(&self, corpus_id: &str) -> PathBuf;
    fn load_conversations(&self) -> Result<Vec<Conversation>, StorageError>;
    fn save_conversation(&self, conversation: &Conversation) -> Result<(), StorageError>;
}

#[derive(Debug, Clone)]
pub struct FileStorage {
    root: PathBuf,
}

fn io(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.to_path_buf(), source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StorageError> {
    let dir = path.parent().expect("record paths have a parent");
    fs::create_dir_all(dir).map_err(io(dir))?;
    let tmp = path.with_extension("json.tmp");
    let bytes = serde_json::to_vec_pretty(value).expect("records serialize");
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StorageError> {
    let bytes = fs::read(path).map_err(io(path))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| StorageError::Corrupt { path: path.to_path_buf(), message: e.to_string() })
}

/// `*.json` files directly inside `dir`, sorted; empty when `dir` is absent.
fn json_files(dir: &Path) -> Result<Vec<PathBuf>, StorageError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StorageError::Io { path: dir.to_path_buf(), source: e }),
    };
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(io(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

impl FileStorage {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn corpus_dir(&self, id: &str) -> PathBuf {
        self.root.join("corpora").join(id)
    }
}

impl Storage for FileStorage {
    fn load_corpora(&self) -> Result<Vec<CorpusRecord>, StorageError> {
        let dir = self.root.join("corpora");
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StorageError::Io { path: dir, source: e }),
        };
        let mut out = Vec::new();
        for entry in entries {
            let record = entry.map_err(io(&dir))?.path().join("corpus.json");
            if record.exists() {
                out.push(read_json(&record)?);
            }
        }
        out.sort_by(|a: &CorpusRecord, b| a.id.cmp(&b.id));
        Ok(out)
    }

    fn save_corpus(&self, corpus: &CorpusRecord) -> Result<(), StorageError> {
        write_json(&self.corpus_dir(&corpus.id).join("corpus.json"), corpus)
    }

    fn delete_corpus(&self, corpus_id: &str) -> Result<(), StorageError> {
        let dir = self.corpus_dir(corpus_id);
        match fs::remove_dir_all(&dir) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(StorageError::Io { path: dir, source: e }),
            _ => Ok(()),
        }
    }

    fn save_document(&self, corpus_id: &str, doc: &Document) -> Result<(), StorageError> {
        write_json(&self.corpus_dir(corpus_id).join("documents").join(format!("{}.json", doc.id)), doc)
    }

    fn load_documents(&self, corpus_id: &str) -> Result<Vec<Document>, StorageError> {
        json_files(&self.corpus_dir(corpus_id).join("documents"))?.iter().map(|p| read_json(p)).collect()
    }

    fn index_dir(&self, corpus_id: &str) -> PathBuf {
        self.corpus_dir(corpus_id).join("index")
    }

    fn load_conversations(&self) -> Result<Vec<Conversation>, StorageError> {
        json_files(&self.root.join("conversations"))?.iter().map(|p| read_json(p)).collect()
    }

    fn save_conversation(&self, conversation: &Conversation) -> Result<(), StorageError> {
        write_json(&self.root.join("conversations").join(format!("{}.json", conversation.id)), conversation)
    }
}
