//! Little-endian binary encoding of the indexes.
//!
//! Sparse: magic `TRSP`, u32 version, f64 k1, f64 b, u64 chunk count, then
//! per chunk (string id, u32 length), u64 term count, then per term (string,
//! u32 posting count, postings as u32 chunk position + u32 tf).
//! Dense: magic `TRDV`, u32 version, u32 dims, u64 count, then per row
//! (string id, `dims` f64 values). Strings are u32 byte length + UTF-8.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{DenseIndex, Posting, SparseIndex};
use crate::index::corpus_fingerprint;

pub const SPARSE_MAGIC: &[u8; 4] = b"TRSP";
pub const DENSE_MAGIC: &[u8; 4] = b"TRDV";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("corrupt index data: {0}")]
    Corrupt(String),
    #[error("unsupported index format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CodecError::Corrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap_or_default()))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap_or_default()))
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap_or_default()))
    }
    fn str(&mut self) -> Result<String, CodecError> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        core::str::from_utf8(bytes).map(String::from).map_err(|_| CodecError::Corrupt("string is not UTF-8".into()))
    }
    /// A count that must fit in the remaining bytes at `min_item` bytes each.
    fn count(&mut self, wide: bool, min_item: usize) -> Result<usize, CodecError> {
        let n = if wide { self.u64()? } else { self.u32()? as u64 };
        let remaining = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(min_item as u64) > remaining {
            return Err(CodecError::Corrupt(format!("count {n} exceeds remaining data")));
        }
        Ok(n as usize)
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<(), CodecError> {
        if self.take(4)? != magic {
            return Err(CodecError::Corrupt("bad magic".into()));
        }
        let found = self.u32()?;
        if found != FORMAT_VERSION {
            return Err(CodecError::Version { found, expected: FORMAT_VERSION });
        }
        Ok(())
    }
    fn finish(&self) -> Result<(), CodecError> {
        if self.pos != self.buf.len() {
            return Err(CodecError::Corrupt("trailing bytes".into()));
        }
        Ok(())
    }
}

pub fn encode_sparse(index: &SparseIndex) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(SPARSE_MAGIC);
    w.u32(FORMAT_VERSION);
    w.f64(index.k1);
    w.f64(index.b);
    w.u64(index.chunk_ids.len() as u64);
    for (id, len) in index.chunk_ids.iter().zip(&index.doc_lengths) {
        w.str(id);
        w.u32(*len);
    }
    w.u64(index.postings.len() as u64);
    for (term, list) in &index.postings {
        w.str(term);
        w.u32(list.len() as u32);
        for p in list {
            w.u32(p.chunk);
            w.u32(p.tf);
        }
    }
    w.0
}

pub fn decode_sparse(bytes: &[u8]) -> Result<SparseIndex, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(SPARSE_MAGIC)?;
    let k1 = r.f64()?;
    let b = r.f64()?;
    let n = r.count(true, 8)?;
    let mut ids = Vec::with_capacity(n);
    let mut lengths = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(r.str()?);
        lengths.push(r.u32()?);
    }
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CodecError::Corrupt("chunk ids not strictly sorted".into()));
    }
    let terms = r.count(true, 8)?;
    let mut postings = BTreeMap::new();
    for _ in 0..terms {
        let term = r.str()?;
        let len = r.count(false, 8)?;
        let mut list = Vec::with_capacity(len);
        for _ in 0..len {
            let chunk = r.u32()?;
            if chunk as usize >= n {
                return Err(CodecError::Corrupt(format!("posting refers to chunk {chunk} of {n}")));
            }
            list.push(Posting { chunk, tf: r.u32()? });
        }
        postings.insert(term, list);
    }
    r.finish()?;
    Ok(SparseIndex::from_parts(ids, lengths, postings, k1, b))
}

pub fn encode_dense(index: &DenseIndex) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(DENSE_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(index.dims as u32);
    w.u64(index.len() as u64);
    for i in 0..index.len() {
        w.str(&index.chunk_ids[i]);
        for v in index.row(i) {
            w.f64(*v);
        }
    }
    w.0
}

pub fn decode_dense(bytes: &[u8]) -> Result<DenseIndex, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(DENSE_MAGIC)?;
    let dims = r.u32()? as usize;
    let n = r.count(true, 4 + dims * 8)?;
    let mut ids = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * dims);
    for _ in 0..n {
        ids.push(r.str()?);
        for _ in 0..dims {
            vectors.push(r.f64()?);
        }
    }
    r.finish()?;
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CodecError::Corrupt("chunk ids not strictly sorted".into()));
    }
    let corpus_id = corpus_fingerprint(ids.iter().map(String::as_str));
    Ok(DenseIndex { dims, chunk_ids: ids, vectors, corpus_id })
}
