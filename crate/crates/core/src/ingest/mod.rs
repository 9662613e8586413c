//! Document parsing: plain text, Markdown, HTML and JSON into normalized
//! [`Document`]s with a sentence map and heading outline.

mod markup;
mod sentences;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[allow(unused_imports)]
pub(crate) use markup::{list_item, strip_inline_markdown};
pub use sentences::{abbreviations, segment_sentences, sentence_texts, SentenceSpan};

use crate::text::{hex, normalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentFormat {
    Text,
    Markdown,
    Html,
    Json,
}

impl DocumentFormat {
    /// Guesses the format from a file extension.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "txt" | "text" => Some(Self::Text),
            "md" | "markdown" => Some(Self::Markdown),
            "html" | "htm" => Some(Self::Html),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("input is not valid UTF-8 (at byte {0})")]
    UndecodableInput(usize),
    #[error("malformed JSON document: {0}")]
    MalformedJson(String),
    #[error("document body is empty")]
    EmptyDocument,
}

/// A section heading. `offset` is the body position where the section's
/// content begins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heading {
    pub level: u8,
    pub text: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub source_uri: String,
    pub publish_date: Option<NaiveDate>,
    pub body: String,
    pub sentences: Vec<SentenceSpan>,
    #[serde(default)]
    pub headings: Vec<Heading>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn sentence_text(&self, index: usize) -> Option<&str> {
        self.sentences.get(index).map(|s| s.text(&self.body))
    }

    /// Index of the sentence whose span is exactly `(start, end)`.
    pub fn sentence_at(&self, start: usize, end: usize) -> Option<&SentenceSpan> {
        let i = self.sentences.partition_point(|s| s.start < start);
        self.sentences.get(i).filter(|s| s.start == start && s.end == end)
    }
}

/// Deterministic document id: SHA-256 over the source URI and the body.
pub fn document_id(source_uri: &str, body: &str) -> String {
    let mut h = Sha256::new();
    h.update((source_uri.len() as u64).to_le_bytes());
    h.update(source_uri.as_bytes());
    h.update(body.as_bytes());
    hex(&h.finalize())
}

#[derive(Deserialize)]
struct JsonDocument {
    title: Option<String>,
    text: String,
    publish_date: Option<String>,
    source_uri: Option<String>,
}

/// Joins paragraphs with blank lines and places headings at the offset where
/// the following paragraph begins.
fn assemble(blocks: Vec<markup::Block>) -> (String, Vec<Heading>) {
    let mut body = String::new();
    let mut headings = Vec::new();
    let mut pending: Vec<(u8, String)> = Vec::new();
    for block in blocks {
        match block {
            markup::Block::Heading { level, text } => pending.push((level, text)),
            markup::Block::Para(p) => {
                let p = normalize(&p);
                if p.is_empty() {
                    continue;
                }
                if !body.is_empty() {
                    body.push_str("\n\n");
                }
                for (level, text) in pending.drain(..) {
                    headings.push(Heading { level, text, offset: body.len() });
                }
                body.push_str(&p);
            }
        }
    }
    for (level, text) in pending {
        headings.push(Heading { level, text, offset: body.len() });
    }
    (body, headings)
}

fn first_line(body: &str) -> String {
    body.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default().to_string()
}

/// Parses raw bytes into a [`Document`].
///
/// Title comes from the first level-1 heading (Markdown), `<title>` or the
/// first `<h1>` (HTML), the `"title"` field (JSON) or the first line (text),
/// falling back to metadata `"title"` and then the first body line.
/// `publish_date` and `source_uri` are read from metadata, or from the JSON
/// fields of the same name when metadata lacks them.
pub fn parse_document(
    raw: &[u8],
    format: DocumentFormat,
    metadata: &BTreeMap<String, String>,
) -> Result<Document, IngestError> {
    let text = core::str::from_utf8(raw).map_err(|e| IngestError::UndecodableInput(e.valid_up_to()))?;
    let text = normalize(text);
    let mut metadata = metadata.clone();

    let (title, body, headings) = match format {
        DocumentFormat::Text => (Some(first_line(&text)), text, Vec::new()),
        DocumentFormat::Markdown => {
            let mut blocks = markup::markdown_blocks(&text);
            let title_at = blocks.iter().position(|b| matches!(b, markup::Block::Heading { level: 1, .. }));
            let title = title_at.map(|i| match blocks.remove(i) {
                markup::Block::Heading { text, .. } => text,
                markup::Block::Para(p) => p,
            });
            let (body, headings) = assemble(blocks);
            (title, body, headings)
        }
        DocumentFormat::Html => {
            let mut outline = markup::html_outline(&text);
            let first_h1 = outline.blocks.iter().position(|b| matches!(b, markup::Block::Heading { level: 1, .. }));
            let h1_text = first_h1.and_then(|i| match &outline.blocks[i] {
                markup::Block::Heading { text, .. } => Some(text.clone()),
                markup::Block::Para(_) => None,
            });
            let title = match (outline.title.take(), h1_text) {
                (None, Some(h1)) => {
                    outline.blocks.remove(first_h1.unwrap_or_default());
                    Some(h1)
                }
                (Some(t), Some(h1)) if t == h1 => {
                    outline.blocks.remove(first_h1.unwrap_or_default());
                    Some(t)
                }
                (t, _) => t,
            };
            let (body, headings) = assemble(outline.blocks);
            (title, body, headings)
        }
        DocumentFormat::Json => {
            let doc: JsonDocument =
                serde_json::from_str(&text).map_err(|e| IngestError::MalformedJson(e.to_string()))?;
            if let Some(d) = doc.publish_date {
                metadata.entry("publish_date".into()).or_insert(d);
            }
            if let Some(u) = doc.source_uri {
                metadata.entry("source_uri".into()).or_insert(u);
            }
            let body = normalize(&doc.text);
            (doc.title.map(|t| normalize(&t)), body, Vec::new())
        }
    };

    if body.trim().is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    let title =
        title.filter(|t| !t.is_empty()).or_else(|| metadata.get("title").cloned()).unwrap_or_else(|| first_line(&body));
    let publish_date = metadata.get("publish_date").and_then(|d| NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").ok());
    let source_uri = metadata.get("source_uri").cloned().unwrap_or_default();
    let id = document_id(&source_uri, &body);
    let sentences = segment_sentences(&body);

    Ok(Document { id, title, source_uri, publish_date, body, sentences, headings, metadata })
}
