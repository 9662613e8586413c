//! Model provider interfaces plus deterministic local implementations.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider timed out")]
    Timeout,
    #[error("provider protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn user(content: impl Into<String>) -> Self {
        Self { messages: vec![ChatMessage::new(Role::User, content)] }
    }

    /// All message contents joined, for matching in mocks and logs.
    pub fn transcript(&self) -> String {
        let mut s = String::new();
        for m in &self.messages {
            s.push_str(&m.content);
            s.push('\n');
        }
        s
    }
}

/// Text generation.
pub trait Llm: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;

    /// Streams the completion through `on_delta` and returns the full text.
    /// The concatenated deltas equal the returned text.
    fn complete_streaming(
        &self,
        request: &ChatRequest,
        on_delta: &mut dyn FnMut(&str),
    ) -> Result<String, ProviderError> {
        let text = self.complete(request)?;
        on_delta(&text);
        Ok(text)
    }
}

/// Batch text embedding. Every returned vector has the same length.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

impl<T: Llm + ?Sized> Llm for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
    fn complete_streaming(
        &self,
        request: &ChatRequest,
        on_delta: &mut dyn FnMut(&str),
    ) -> Result<String, ProviderError> {
        (**self).complete_streaming(request, on_delta)
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed(texts)
    }
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing over lowercase unigrams and bigrams. Needs no
/// model, is fully deterministic, and gives lexical-overlap similarity.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dims: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dims: 256 }
    }
}

impl HashEmbedder {
    fn add(&self, v: &mut [f64], feature: &[u8], weight: f64) {
        let h = fnv1a(feature, 0);
        let slot = (h % self.dims as u64) as usize;
        v[slot] += if h >> 63 == 1 { -weight } else { weight };
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dims.max(1)];
        let tokens = tokenize(text);
        for t in &tokens {
            self.add(&mut v, t.as_bytes(), 1.0);
        }
        for pair in tokens.windows(2) {
            let mut f = Vec::with_capacity(pair[0].len() + pair[1].len() + 1);
            f.extend_from_slice(pair[0].as_bytes());
            f.push(b' ');
            f.extend_from_slice(pair[1].as_bytes());
            self.add(&mut v, &f, 0.5);
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Scriptable providers for tests and fault injection.
pub mod mock {
    use super::*;
    use core::sync::atomic::{AtomicUsize, Ordering};

    type Responder = Box<dyn Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync>;

    /// An [`Llm`] answering through a closure. Streaming splits the answer
    /// into `chunk_chars`-sized deltas and can be made to fail part-way.
    pub struct MockLlm {
        responder: Responder,
        chunk_chars: usize,
        fail_after_deltas: Option<usize>,
        calls: AtomicUsize,
    }

    impl MockLlm {
        pub fn new(f: impl Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static) -> Self {
            Self { responder: Box::new(f), chunk_chars: 16, fail_after_deltas: None, calls: AtomicUsize::new(0) }
        }

        pub fn fixed(text: impl Into<String>) -> Self {
            let text = text.into();
            Self::new(move |_| Ok(text.clone()))
        }

        /// Always fails with [`ProviderError::Unavailable`].
        pub fn down() -> Self {
            Self::new(|_| Err(ProviderError::Unavailable("mock provider is down".into())))
        }

        pub fn with_chunk_chars(mut self, n: usize) -> Self {
            self.chunk_chars = n.max(1);
            self
        }

        /// Emit `n` deltas, then fail with [`ProviderError::Timeout`].
        pub fn timing_out_after(mut self, n: usize) -> Self {
            self.fail_after_deltas = Some(n);
            self
        }

        pub fn calls(&self) -> usize {
            self.calls.load(Ordering::Relaxed)
        }
    }

    impl Llm for MockLlm {
        fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            if self.fail_after_deltas.is_some() {
                return Err(ProviderError::Timeout);
            }
            (self.responder)(request)
        }

        fn complete_streaming(
            &self,
            request: &ChatRequest,
            on_delta: &mut dyn FnMut(&str),
        ) -> Result<String, ProviderError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            let text = (self.responder)(request)?;
            let chars: Vec<char> = text.chars().collect();
            for (i, chunk) in chars.chunks(self.chunk_chars).enumerate() {
                if self.fail_after_deltas == Some(i) {
                    return Err(ProviderError::Timeout);
                }
                let delta: String = chunk.iter().collect();
                on_delta(&delta);
            }
            if self.fail_after_deltas.is_some() {
                return Err(ProviderError::Timeout);
            }
            Ok(text)
        }
    }

    type EmbedFn = dyn Fn(&str) -> Result<Vec<f64>, ProviderError> + Send + Sync;

    /// An [`Embedder`] backed by a closure over single texts.
    pub struct MockEmbedder {
        f: Box<EmbedFn>,
        calls: AtomicUsize,
    }

    impl MockEmbedder {
        pub fn new(f: impl Fn(&str) -> Result<Vec<f64>, ProviderError> + Send + Sync + 'static) -> Self {
            Self { f: Box::new(f), calls: AtomicUsize::new(0) }
        }

        pub fn down() -> Self {
            Self::new(|_| Err(ProviderError::Unavailable("mock embedder is down".into())))
        }

        /// Number of `embed` batch calls so far.
        pub fn calls(&self) -> usize {
            self.calls.load(Ordering::Relaxed)
        }
    }

    impl Embedder for MockEmbedder {
        fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            texts.iter().map(|t| (self.f)(t)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::mock::*;
    use super::*;
    use crate::embedding::cosine;

    #[test]
    fn hash_embedder_is_deterministic_and_lexical() {
        let e = HashEmbedder::default();
        let a = e.embed_one("coral reefs bleach in warm water");
        assert_eq!(a, e.embed_one("Coral reefs bleach in warm water!"));
        let b = e.embed_one("coral reefs bleach");
        let c = e.embed_one("stock markets fell sharply");
        assert!(cosine(&a, &b) > cosine(&a, &c));
    }

    #[test]
    fn mock_streaming_concatenates() {
        let llm = MockLlm::fixed("héllo wörld, streaming").with_chunk_chars(3);
        let mut parts = Vec::new();
        let full = llm.complete_streaming(&ChatRequest::user("x"), &mut |d| parts.push(String::from(d))).unwrap();
        assert_eq!(parts.concat(), full);
        assert!(parts.len() > 3);
    }

    #[test]
    fn mock_timeout_after_deltas() {
        let llm = MockLlm::fixed("abcdefgh").with_chunk_chars(2).timing_out_after(2);
        let mut n = 0;
        let r = llm.complete_streaming(&ChatRequest::user("x"), &mut |_| n += 1);
        assert_eq!(r, Err(ProviderError::Timeout));
        assert_eq!(n, 2);
    }
}
