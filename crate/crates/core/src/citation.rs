//! Post-generation citation: answer sentences are matched to evidence
//! sentences after the answer exists, then grouped per source document and
//! cross-referenced.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::embedding::cosine;
use crate::generation::{AnswerSentence, SentenceKind, StructuredAnswer};
use crate::ingest::Document;
use crate::provider::{Embedder, ProviderError};
use crate::retrieval::EvidenceSpan;
use crate::text::{fold, intersection_len, token_set};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const MAX_PER_SENTENCE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CitationKind {
    Exact,
    Aligned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub answer_sentence_index: usize,
    pub doc_id: String,
    pub source_span: (usize, usize),
    pub score: f64,
    pub kind: CitationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationGroup {
    pub group_id: usize,
    pub doc_id: String,
    pub members: Vec<Citation>,
    pub display_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossReference {
    pub from_group: usize,
    pub to_group: usize,
    pub shared_sentence_indexes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CitationConfig {
    pub threshold: f64,
    pub cite_summary: bool,
    pub cite_headings: bool,
    pub max_per_sentence: usize,
}

impl Default for CitationConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            cite_summary: true,
            cite_headings: false,
            max_per_sentence: MAX_PER_SENTENCE,
        }
    }
}

#[derive(Clone, Copy)]
pub enum CitationScorer<'a> {
    /// Answer-coverage token precision.
    Lexical,
    /// Cosine of sentence embeddings; verbatim matches still score 1.0 exact.
    Embedding(&'a dyn Embedder),
}

/// An evidence sentence with its text resolved and the rank of its document
/// (order of first appearance in the evidence list).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSentence {
    pub doc_id: String,
    pub doc_rank: usize,
    pub span: (usize, usize),
    pub text: String,
}

/// Resolves evidence against its documents, dropping duplicates and spans
/// that do not name a sentence of a known document.
pub fn evidence_pool(evidence: &[EvidenceSpan], docs: &BTreeMap<String, Document>) -> Vec<PoolSentence> {
    let mut ranks: Vec<&str> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut pool = Vec::new();
    for e in evidence {
        let Some(doc) = docs.get(&e.doc_id) else { continue };
        let (start, end) = e.sentence_span;
        if doc.sentence_at(start, end).is_none() || !seen.insert((e.doc_id.as_str(), e.sentence_span)) {
            continue;
        }
        let doc_rank = match ranks.iter().position(|d| *d == e.doc_id) {
            Some(r) => r,
            None => {
                ranks.push(&e.doc_id);
                ranks.len() - 1
            }
        };
        pool.push(PoolSentence {
            doc_id: e.doc_id.clone(),
            doc_rank,
            span: e.sentence_span,
            text: doc.body[start..end].to_string(),
        });
    }
    pool
}

fn is_exact(answer: &str, source: &str) -> bool {
    let (a, s) = (fold(answer), fold(source));
    !a.is_empty() && !s.is_empty() && (s.contains(a.as_str()) || a.contains(s.as_str()))
}

/// `(1.0, exact)` when one sentence (whitespace-collapsed, case-folded)
/// contains the other; otherwise the share of answer tokens found in the
/// source.
pub fn sentence_score(answer: &str, source: &str) -> (f64, CitationKind) {
    if is_exact(answer, source) {
        return (1.0, CitationKind::Exact);
    }
    let a = token_set(answer);
    if a.is_empty() {
        return (0.0, CitationKind::Aligned);
    }
    (intersection_len(&a, &token_set(source)) as f64 / a.len() as f64, CitationKind::Aligned)
}

fn eligible(s: &AnswerSentence, config: &CitationConfig) -> bool {
    match s.kind {
        SentenceKind::Heading => config.cite_headings && !s.text.trim().is_empty(),
        SentenceKind::Summary => config.cite_summary && s.opinion_bearing,
        SentenceKind::Content => s.opinion_bearing,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// Ordered by answer sentence, then best first.
    pub citations: Vec<Citation>,
    /// Eligible sentences that no evidence sentence supports at the threshold.
    pub unsupported: Vec<usize>,
}

pub fn match_citations(answer: &StructuredAnswer, pool: &[PoolSentence], config: &CitationConfig) -> Matching {
    match_citations_with(answer, pool, config, CitationScorer::Lexical).expect("lexical scoring cannot fail")
}

/// Scores every eligible answer sentence against every pool sentence and
/// keeps up to `max_per_sentence` citations at or above the threshold,
/// best first, ties by document rank then span. When any exact match
/// exists only exact matches are kept.
pub fn match_citations_with(
    answer: &StructuredAnswer,
    pool: &[PoolSentence],
    config: &CitationConfig,
    scorer: CitationScorer<'_>,
) -> Result<Matching, ProviderError> {
    let targets: Vec<&AnswerSentence> = answer.sentences().filter(|s| eligible(s, config)).collect();
    let similarity: Option<Vec<Vec<f64>>> = match scorer {
        CitationScorer::Lexical => None,
        CitationScorer::Embedding(embedder) => {
            let texts: Vec<&str> =
                targets.iter().map(|s| s.text.as_str()).chain(pool.iter().map(|p| p.text.as_str())).collect();
            let vectors = if texts.is_empty() { Vec::new() } else { embedder.embed(&texts)? };
            if vectors.len() != texts.len() {
                return Err(ProviderError::Protocol("embedding count mismatch".into()));
            }
            let (a, s) = vectors.split_at(targets.len());
            Some(a.iter().map(|av| s.iter().map(|sv| cosine(av, sv).clamp(0.0, 1.0)).collect()).collect())
        }
    };

    let mut out = Matching::default();
    for (ti, sentence) in targets.iter().enumerate() {
        let mut scored: Vec<(f64, CitationKind, &PoolSentence)> = pool
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                let (score, kind) = match &similarity {
                    _ if is_exact(&sentence.text, &p.text) => (1.0, CitationKind::Exact),
                    None => sentence_score(&sentence.text, &p.text),
                    Some(sim) => (sim[ti][pi], CitationKind::Aligned),
                };
                (score, kind, p)
            })
            .filter(|(score, _, _)| *score >= config.threshold)
            .collect();
        if scored.iter().any(|c| c.1 == CitationKind::Exact) {
            scored.retain(|c| c.1 == CitationKind::Exact);
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.2.doc_rank.cmp(&y.2.doc_rank)).then(x.2.span.cmp(&y.2.span)));
        scored.truncate(config.max_per_sentence);
        if scored.is_empty() {
            out.unsupported.push(sentence.index);
        }
        out.citations.extend(scored.into_iter().map(|(score, kind, p)| Citation {
            answer_sentence_index: sentence.index,
            doc_id: p.doc_id.clone(),
            source_span: p.span,
            score,
            kind,
        }));
    }
    Ok(out)
}

/// One group per cited document, numbered by first appearance in the
/// answer. The returned answer has ` [n]` markers appended to every cited
/// sentence (ascending, deduplicated).
pub fn group_citations(answer: &StructuredAnswer, citations: &[Citation]) -> (Vec<CitationGroup>, StructuredAnswer) {
    let mut ordered: Vec<&Citation> = citations.iter().collect();
    ordered.sort_by_key(|c| c.answer_sentence_index);
    let mut groups: Vec<CitationGroup> = Vec::new();
    for c in ordered {
        let i = match groups.iter().position(|g| g.doc_id == c.doc_id) {
            Some(i) => i,
            None => {
                let id = groups.len() + 1;
                groups.push(CitationGroup {
                    group_id: id,
                    doc_id: c.doc_id.clone(),
                    members: Vec::new(),
                    display_label: format!("[{id}]"),
                });
                id - 1
            }
        };
        groups[i].members.push(c.clone());
    }
    for g in &mut groups {
        g.members.sort_by(|a, b| {
            a.source_span.cmp(&b.source_span).then(a.answer_sentence_index.cmp(&b.answer_sentence_index))
        });
    }

    let mut labels: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for g in &groups {
        for m in &g.members {
            labels.entry(m.answer_sentence_index).or_default().insert(g.group_id);
        }
    }
    let mut annotated = answer.clone();
    for s in annotated.sentences_mut() {
        if let Some(ids) = labels.get(&s.index) {
            s.text.push(' ');
            for id in ids {
                s.text.push_str(&format!("[{id}]"));
            }
        }
    }
    (groups, annotated)
}

/// Links every pair of groups that support at least one common answer
/// sentence.
pub fn cross_reference(groups: &[CitationGroup]) -> Vec<CrossReference> {
    let sets: Vec<BTreeSet<usize>> =
        groups.iter().map(|g| g.members.iter().map(|m| m.answer_sentence_index).collect()).collect();
    let mut out = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let shared: Vec<usize> = sets[i].intersection(&sets[j]).copied().collect();
            if !shared.is_empty() {
                let (a, b) = (groups[i].group_id, groups[j].group_id);
                out.push(CrossReference { from_group: a.min(b), to_group: a.max(b), shared_sentence_indexes: shared });
            }
        }
    }
    out.sort_by_key(|x| (x.from_group, x.to_group));
    out
}

// Wire format of an annotated answer.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCitation {
    pub group: usize,
    pub doc_id: String,
    pub span: (usize, usize),
    pub score: f64,
    pub kind: CitationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSentence {
    pub index: usize,
    pub text: String,
    /// `text` with its `[n]` labels appended.
    pub annotated: String,
    pub citations: Vec<WireCitation>,
    pub unsupported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSection {
    pub heading: String,
    pub sentences: Vec<WireSentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireGroup {
    pub id: usize,
    pub label: String,
    pub doc_id: String,
    pub title: String,
    pub source_uri: String,
    pub publish_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    pub spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedAnswer {
    pub summary: Vec<WireSentence>,
    pub sections: Vec<WireSection>,
    pub groups: Vec<WireGroup>,
    pub cross_references: Vec<CrossReference>,
    pub raw: String,
}

impl AnnotatedAnswer {
    pub fn sentences(&self) -> impl Iterator<Item = &WireSentence> {
        self.summary.iter().chain(self.sections.iter().flat_map(|s| s.sentences.iter()))
    }

    pub fn citations(&self) -> impl Iterator<Item = (&WireSentence, &WireCitation)> {
        self.sentences().flat_map(|s| s.citations.iter().map(move |c| (s, c)))
    }

    /// Plain-text rendering: summary paragraph, then each section heading
    /// in bold with its sentences as bullets, labels included.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let summary: Vec<&str> = self.summary.iter().map(|s| s.annotated.as_str()).collect();
        if !summary.is_empty() {
            out.push_str(&summary.join(" "));
            out.push('\n');
        }
        for section in &self.sections {
            if !out.is_empty() {
                out.push('\n');
            }
            if !section.heading.is_empty() {
                out.push_str(&format!("**{}**\n", section.heading));
                for s in &section.sentences {
                    out.push_str(&format!("- {}\n", s.annotated));
                }
            } else {
                let body: Vec<&str> = section.sentences.iter().map(|s| s.annotated.as_str()).collect();
                out.push_str(&body.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

/// Runs matching, grouping and cross-referencing and assembles the wire
/// answer.
pub fn annotate(
    answer: &StructuredAnswer,
    pool: &[PoolSentence],
    docs: &BTreeMap<String, Document>,
    config: &CitationConfig,
) -> AnnotatedAnswer {
    let matching = match_citations(answer, pool, config);
    assemble_annotated(answer, &matching, docs)
}

pub fn assemble_annotated(
    answer: &StructuredAnswer,
    matching: &Matching,
    docs: &BTreeMap<String, Document>,
) -> AnnotatedAnswer {
    let (groups, labelled) = group_citations(answer, &matching.citations);
    let cross_references = cross_reference(&groups);
    let group_of: BTreeMap<&str, usize> = groups.iter().map(|g| (g.doc_id.as_str(), g.group_id)).collect();
    let annotated_text: BTreeMap<usize, &str> = labelled.sentences().map(|s| (s.index, s.text.as_str())).collect();
    let wire = |s: &AnswerSentence| WireSentence {
        index: s.index,
        text: s.text.clone(),
        annotated: annotated_text.get(&s.index).copied().unwrap_or(&s.text).to_string(),
        citations: matching
            .citations
            .iter()
            .filter(|c| c.answer_sentence_index == s.index)
            .map(|c| WireCitation {
                group: group_of[c.doc_id.as_str()],
                doc_id: c.doc_id.clone(),
                span: c.source_span,
                score: c.score,
                kind: c.kind,
            })
            .collect(),
        unsupported: matching.unsupported.contains(&s.index),
    };
    AnnotatedAnswer {
        summary: answer.summary.iter().map(wire).collect(),
        sections: answer
            .sections
            .iter()
            .map(|sec| WireSection {
                heading: sec.heading.clone(),
                sentences: sec.sentences.iter().map(wire).collect(),
            })
            .collect(),
        groups: groups
            .iter()
            .map(|g| {
                let doc = docs.get(&g.doc_id);
                let mut spans: Vec<(usize, usize)> = g.members.iter().map(|m| m.source_span).collect();
                spans.dedup();
                WireGroup {
                    id: g.group_id,
                    label: g.display_label.clone(),
                    doc_id: g.doc_id.clone(),
                    title: doc.map(|d| d.title.clone()).unwrap_or_default(),
                    source_uri: doc.map(|d| d.source_uri.clone()).unwrap_or_default(),
                    publish_date: doc.and_then(|d| d.publish_date),
                    author: doc.and_then(|d| d.metadata.get("author").cloned()),
                    spans,
                }
            })
            .collect(),
        cross_references,
        raw: answer.raw.clone(),
    }
}
