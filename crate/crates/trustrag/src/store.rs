//! On-disk index directories.
//!
//! Layout:
//!
//! ```text
//! <dir>/manifest.json   format version, counts, per-file size and SHA-256
//! <dir>/sparse.bin      BM25 index (little-endian binary)
//! <dir>/dense.bin       vector index, absent when built without an embedder
//! <dir>/chunks.json     chunk records, including enriched text
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trustrag_core::chunking::Chunk;
use trustrag_core::index::{decode_dense, decode_sparse, encode_dense, encode_sparse, CodecError, FORMAT_VERSION};
use trustrag_core::pipeline::BuiltCorpus;
use trustrag_core::text::hex;

pub const MANIFEST: &str = "manifest.json";
const SPARSE_FILE: &str = "sparse.bin";
const DENSE_FILE: &str = "dense.bin";
const CHUNKS_FILE: &str = "chunks.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("index io failure at {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::IoFailure { path: path.to_path_buf(), source }
}

impl From<CodecError> for StoreError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Version { found, expected } => Self::VersionMismatch { found, expected },
            CodecError::Corrupt(m) => Self::CorruptIndex(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub corpus_id: String,
    pub chunk_count: usize,
    pub term_count: usize,
    pub avg_doc_length: f64,
    pub dense_dims: Option<usize>,
    pub files: BTreeMap<String, FileEntry>,
    /// Caller-supplied facts, e.g. the document-set hash.
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

fn sha256(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut BTreeMap<String, FileEntry>) -> Result<(), StoreError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(&path))?;
    files.insert(name.to_string(), FileEntry { bytes: bytes.len() as u64, sha256: sha256(bytes) });
    Ok(())
}

/// Writes `corpus` to `dir`, replacing any previous index there. The new
/// index is written next to `dir` and swapped in by rename.
pub fn persist(dir: &Path, corpus: &BuiltCorpus, extra: BTreeMap<String, String>) -> Result<Manifest, StoreError> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("index");
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(io_err(&staging))?;

    let mut files = BTreeMap::new();
    write_file(&staging, SPARSE_FILE, &encode_sparse(&corpus.sparse), &mut files)?;
    if let Some(dense) = &corpus.dense {
        write_file(&staging, DENSE_FILE, &encode_dense(dense), &mut files)?;
    }
    let chunks = serde_json::to_vec(&corpus.chunks).map_err(|e| StoreError::CorruptIndex(e.to_string()))?;
    write_file(&staging, CHUNKS_FILE, &chunks, &mut files)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        corpus_id: corpus.sparse.corpus_id.clone(),
        chunk_count: corpus.sparse.len(),
        term_count: corpus.sparse.postings.len(),
        avg_doc_length: corpus.sparse.avg_doc_length,
        dense_dims: corpus.dense.as_ref().map(|d| d.dims),
        files,
        extra,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let path = staging.join(MANIFEST);
    fs::write(&path, json).map_err(io_err(&path))?;

    let retired = parent.join(format!(".{name}.retired-{}", std::process::id()));
    if dir.exists() {
        fs::rename(dir, &retired).map_err(io_err(dir))?;
    }
    fs::rename(&staging, dir).map_err(io_err(dir))?;
    if retired.exists() {
        fs::remove_dir_all(&retired).map_err(io_err(&retired))?;
    }
    Ok(manifest)
}

/// Reads and version-checks the manifest only.
pub fn inspect(dir: &Path) -> Result<Manifest, StoreError> {
    let path = dir.join(MANIFEST);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    #[derive(Deserialize)]
    struct Version {
        format_version: u32,
    }
    let v: Version = serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptIndex(format!("manifest: {e}")))?;
    if v.format_version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch { found: v.format_version, expected: FORMAT_VERSION });
    }
    serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptIndex(format!("manifest: {e}")))
}

fn read_checked(dir: &Path, name: &str, manifest: &Manifest) -> Result<Vec<u8>, StoreError> {
    let entry = manifest.files.get(name).ok_or_else(|| StoreError::CorruptIndex(format!("{name} not in manifest")))?;
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() as u64 != entry.bytes || sha256(&bytes) != entry.sha256 {
        return Err(StoreError::CorruptIndex(format!("{name}: checksum mismatch")));
    }
    Ok(bytes)
}

pub fn load(dir: &Path) -> Result<(BuiltCorpus, Manifest), StoreError> {
    let manifest = inspect(dir)?;
    let sparse = decode_sparse(&read_checked(dir, SPARSE_FILE, &manifest)?)?;
    let dense = match manifest.files.contains_key(DENSE_FILE) {
        true => Some(decode_dense(&read_checked(dir, DENSE_FILE, &manifest)?)?),
        false => None,
    };
    let chunks: Vec<Chunk> = serde_json::from_slice(&read_checked(dir, CHUNKS_FILE, &manifest)?)
        .map_err(|e| StoreError::CorruptIndex(format!("{CHUNKS_FILE}: {e}")))?;
    if sparse.corpus_id != manifest.corpus_id
        || dense.as_ref().is_some_and(|d| d.corpus_id != manifest.corpus_id)
        || chunks.len() != sparse.len()
    {
        return Err(StoreError::CorruptIndex("index files describe different chunk sets".into()));
    }
    Ok((BuiltCorpus { chunks, sparse, dense }, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use trustrag_core::chunking::ChunkStrategy;
    use trustrag_core::index::{search_dense, search_sparse};
    use trustrag_core::ingest::{parse_document, DocumentFormat};
    use trustrag_core::pipeline::build_corpus;
    use trustrag_core::provider::{Embedder, HashEmbedder};

    fn built() -> BuiltCorpus {
        let docs: Vec<_> =
            ["Corals bleach in warm water. Reefs recover slowly.", "Markets rallied. Bonds fell sharply."]
                .iter()
                .map(|t| parse_document(t.as_bytes(), DocumentFormat::Text, &BTreeMap::new()).unwrap())
                .collect();
        build_corpus(&docs, ChunkStrategy::Fixed { target_size: 1, overlap: 0 }, None, Some(&HashEmbedder::default()))
            .unwrap()
    }

    #[test]
    fn round_trip_is_query_equivalent() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("index");
        let corpus = built();
        let m = persist(&dir, &corpus, [("k".to_string(), "v".to_string())].into()).unwrap();
        let (back, m2) = load(&dir).unwrap();
        assert_eq!(m, m2);
        assert_eq!(back, corpus);
        let q = HashEmbedder::default().embed(&["warm corals"]).unwrap().remove(0);
        assert_eq!(search_sparse(&back.sparse, "warm corals", 3), search_sparse(&corpus.sparse, "warm corals", 3));
        assert_eq!(
            search_dense(back.dense.as_ref().unwrap(), &q, 3).unwrap(),
            search_dense(corpus.dense.as_ref().unwrap(), &q, 3).unwrap()
        );
        // second persist replaces the first
        persist(&dir, &corpus, BTreeMap::new()).unwrap();
        assert!(inspect(&dir).unwrap().extra.is_empty());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
    }

    #[test]
    fn corruption_and_missing_files() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("index");
        persist(&dir, &built(), BTreeMap::new()).unwrap();
        let sparse = dir.join(SPARSE_FILE);
        let bytes = fs::read(&sparse).unwrap();
        fs::write(&sparse, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load(&dir), Err(StoreError::CorruptIndex(_))));

        let empty = tmp.path().join("empty");
        fs::create_dir(&empty).unwrap();
        assert!(matches!(load(&empty), Err(StoreError::IoFailure { .. })));

        persist(&dir, &built(), BTreeMap::new()).unwrap();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
        fs::write(&path, text).unwrap();
        assert!(matches!(load(&dir), Err(StoreError::VersionMismatch { found: 99, expected: 1 })));
        fs::write(&path, b"{not json").unwrap();
        assert!(matches!(load(&dir), Err(StoreError::CorruptIndex(_))));
    }
}
