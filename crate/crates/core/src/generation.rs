//! Grounded prompt assembly, provider invocation, and parsing of the
//! summary-plus-aspects answer layout.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::ingest::{list_item, segment_sentences, strip_inline_markdown, Document};
use crate::prompts;
use crate::provider::{ChatMessage, ChatRequest, Llm, ProviderError, Role};
use crate::query::{render_history, HistoryTurn};
use crate::retrieval::EvidenceSpan;
use crate::text::{fill, fold, tokenize};

pub const DEFAULT_BUDGET_CHARS: usize = 6000;
const STRUCTURAL_PATTERNS: &str = include_str!("../data/structural_patterns.txt");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("no evidence to ground an answer")]
    EmptyEvidence,
    #[error("evidence refers to unknown document {0}")]
    UnknownDocument(String),
    #[error("generation provider unavailable: {0}")]
    LlmUnavailable(String),
    #[error("generation provider timed out")]
    ProviderTimeout,
    #[error("generation provider error: {0}")]
    Provider(String),
}

impl From<ProviderError> for GenerationError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Unavailable(m) => Self::LlmUnavailable(m),
            ProviderError::Timeout => Self::ProviderTimeout,
            ProviderError::Protocol(m) => Self::Provider(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSentence {
    pub span: (usize, usize),
    pub sentence_index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub block_id: usize,
    pub doc_id: String,
    pub title: String,
    pub sentences: Vec<ContextSentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub context_blocks: Vec<ContextBlock>,
    pub user_query: String,
    pub history: Vec<HistoryTurn>,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Prompt {
    /// Context section: `[n] title` followed by one evidence sentence per line.
    pub fn render_context(&self) -> String {
        render_blocks(&self.context_blocks)
    }

    pub fn to_request(&self) -> ChatRequest {
        let user = fill(
            prompts::ANSWER_USER,
            &[
                ("context", &self.render_context()),
                ("history", &render_history(&self.history)),
                ("query", self.user_query.trim()),
            ],
        );
        ChatRequest {
            messages: vec![ChatMessage::new(Role::System, self.system.clone()), ChatMessage::new(Role::User, user)],
        }
    }
}

fn render_blocks(blocks: &[ContextBlock]) -> String {
    let mut s = String::new();
    for b in blocks {
        s.push_str(&format!("[{}] {}\n", b.block_id, one_line(&b.title)));
        for sentence in &b.sentences {
            s.push_str(&one_line(&sentence.text));
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

/// Groups evidence by document into numbered blocks (first appearance order,
/// sentences in document order), then trims to `budget` characters of
/// rendered context: whole blocks from the tail first, then sentences from
/// the end of the first block. The first block keeps at least one sentence.
pub fn assemble_prompt(
    query: &str,
    evidence: &[EvidenceSpan],
    docs: &BTreeMap<String, Document>,
    history: &[HistoryTurn],
    budget: usize,
) -> Result<Prompt, GenerationError> {
    if evidence.is_empty() {
        return Err(GenerationError::EmptyEvidence);
    }
    let mut blocks: Vec<ContextBlock> = Vec::new();
    for e in evidence {
        let doc = docs.get(&e.doc_id).ok_or_else(|| GenerationError::UnknownDocument(e.doc_id.clone()))?;
        let block = match blocks.iter_mut().position(|b| b.doc_id == e.doc_id) {
            Some(i) => &mut blocks[i],
            None => {
                blocks.push(ContextBlock {
                    block_id: blocks.len() + 1,
                    doc_id: doc.id.clone(),
                    title: doc.title.clone(),
                    sentences: Vec::new(),
                });
                blocks.last_mut().expect("just pushed")
            }
        };
        if block.sentences.iter().any(|s| s.span == e.sentence_span) {
            continue;
        }
        let text = doc.body.get(e.sentence_span.0..e.sentence_span.1).unwrap_or_default();
        block.sentences.push(ContextSentence {
            span: e.sentence_span,
            sentence_index: e.sentence_index,
            text: text.to_string(),
        });
    }
    for b in &mut blocks {
        b.sentences.sort_by_key(|s| s.span.0);
    }
    while render_blocks(&blocks).chars().count() > budget {
        if blocks.len() > 1 {
            blocks.pop();
        } else if blocks[0].sentences.len() > 1 {
            blocks[0].sentences.pop();
        } else {
            break;
        }
    }
    Ok(Prompt {
        system: prompts::ANSWER_SYSTEM.trim_end().to_string(),
        context_blocks: blocks,
        user_query: query.to_string(),
        history: history.to_vec(),
    })
}

/// Calls the provider. With `on_delta` the answer is streamed; on failure
/// the partial text is dropped and only the error is returned.
pub fn generate(
    prompt: &Prompt,
    llm: &dyn Llm,
    on_delta: Option<&mut dyn FnMut(&str)>,
) -> Result<String, GenerationError> {
    let request = prompt.to_request();
    let text = match on_delta {
        Some(sink) => llm.complete_streaming(&request, sink)?,
        None => llm.complete(&request)?,
    };
    Ok(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceKind {
    Summary,
    Heading,
    Content,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSentence {
    pub text: String,
    pub index: usize,
    pub kind: SentenceKind,
    pub opinion_bearing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSection {
    /// Empty for the untitled section of a headingless answer.
    pub heading: String,
    pub heading_sentence: Option<AnswerSentence>,
    pub sentences: Vec<AnswerSentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredAnswer {
    pub summary: Vec<AnswerSentence>,
    pub sections: Vec<AnswerSection>,
    pub raw: String,
}

impl StructuredAnswer {
    pub fn summary_text(&self) -> String {
        self.summary.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    /// Every sentence, headings included, in index order.
    pub fn sentences(&self) -> impl Iterator<Item = &AnswerSentence> {
        self.summary
            .iter()
            .chain(self.sections.iter().flat_map(|s| s.heading_sentence.iter().chain(s.sentences.iter())))
    }

    pub fn sentences_mut(&mut self) -> impl Iterator<Item = &mut AnswerSentence> {
        self.summary
            .iter_mut()
            .chain(self.sections.iter_mut().flat_map(|s| s.heading_sentence.iter_mut().chain(s.sentences.iter_mut())))
    }
}

fn bold_inner(s: &str) -> Option<&str> {
    let s = s.trim();
    let inner = s
        .strip_prefix("**")
        .and_then(|r| r.strip_suffix("**:").or_else(|| r.strip_suffix("**")))
        .or_else(|| s.strip_prefix("__").and_then(|r| r.strip_suffix("__")))?;
    (!inner.trim().is_empty() && !inner.contains("**")).then_some(inner)
}

/// Heading text when `line` is a Markdown heading, a fully bold line, or a
/// numbered item whose whole text is bold.
fn heading_text(line: &str) -> Option<String> {
    let t = line.trim();
    let hashes = t.bytes().take_while(|&b| b == b'#').count();
    if (1..=6).contains(&hashes) && t[hashes..].starts_with(' ') {
        let h = strip_inline_markdown(t[hashes..].trim().trim_end_matches('#'));
        return Some(h.trim().trim_end_matches(':').trim().to_string());
    }
    if let Some(inner) = bold_inner(t) {
        return Some(strip_inline_markdown(inner).trim().trim_end_matches(':').trim().to_string());
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 && t[digits..].starts_with(". ") {
        if let Some(inner) = bold_inner(&t[digits + 2..]) {
            let inner = strip_inline_markdown(inner);
            return Some(format!("{}. {}", &t[..digits], inner.trim().trim_end_matches(':').trim()));
        }
    }
    None
}

const FUNCTION_WORDS: &[&str] = &[
    "a",
    "about",
    "additionally",
    "also",
    "an",
    "and",
    "are",
    "as",
    "at",
    "be",
    "below",
    "but",
    "by",
    "conclusion",
    "finally",
    "first",
    "following",
    "for",
    "from",
    "furthermore",
    "here",
    "however",
    "in",
    "instance",
    "is",
    "it",
    "its",
    "key",
    "moreover",
    "of",
    "on",
    "or",
    "overall",
    "points",
    "second",
    "short",
    "so",
    "sum",
    "summarize",
    "summary",
    "that",
    "the",
    "then",
    "these",
    "third",
    "this",
    "those",
    "thus",
    "to",
    "up",
    "was",
    "were",
    "with",
];

fn is_structural(sentence: &str) -> bool {
    let folded = fold(sentence);
    let bare = folded.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    let lead_in = folded.trim_end().ends_with(':');
    STRUCTURAL_PATTERNS.lines().any(|line| {
        if let Some(p) = line.strip_prefix("= ") {
            bare == p.trim()
        } else if let Some(p) = line.strip_prefix("> ") {
            lead_in && bare.starts_with(p.trim())
        } else {
            false
        }
    })
}

/// A sentence needs support when it has a content word and is not pure
/// answer scaffolding ("In summary,", "Here are the key points:").
pub fn is_opinion_bearing(sentence: &str) -> bool {
    let has_content =
        tokenize(sentence).iter().any(|t| t.chars().any(char::is_alphabetic) && !FUNCTION_WORDS.contains(&t.as_str()));
    has_content && !is_structural(sentence)
}

/// Parses a generated answer. Text before the first heading is the summary;
/// each heading opens a section; list items and paragraphs are split into
/// sentences. Without any heading, everything is one untitled section.
pub fn parse_structured_answer(raw: &str) -> StructuredAnswer {
    enum Piece {
        Heading(String),
        Paragraph(String),
    }
    let mut pieces = Vec::new();
    let mut para = String::new();
    let flush = |para: &mut String, pieces: &mut Vec<Piece>| {
        if !para.trim().is_empty() {
            pieces.push(Piece::Paragraph(strip_inline_markdown(para)));
        }
        para.clear();
    };
    for line in raw.lines() {
        let t = line.trim();
        if t.is_empty() {
            flush(&mut para, &mut pieces);
        } else if let Some(h) = heading_text(t) {
            flush(&mut para, &mut pieces);
            pieces.push(Piece::Heading(h));
        } else if let Some(item) = list_item(t) {
            flush(&mut para, &mut pieces);
            para.push_str(item);
            flush(&mut para, &mut pieces);
        } else {
            if !para.is_empty() {
                para.push('\n');
            }
            para.push_str(t);
        }
    }
    flush(&mut para, &mut pieces);

    let has_headings = pieces.iter().any(|p| matches!(p, Piece::Heading(_)));
    let mut answer = StructuredAnswer { summary: Vec::new(), sections: Vec::new(), raw: raw.to_string() };
    if !has_headings {
        answer.sections.push(AnswerSection { heading: String::new(), heading_sentence: None, sentences: Vec::new() });
    }
    let mut index = 0;
    for piece in pieces {
        match piece {
            Piece::Heading(h) => {
                let sentence =
                    AnswerSentence { text: h.clone(), index, kind: SentenceKind::Heading, opinion_bearing: false };
                index += 1;
                answer.sections.push(AnswerSection {
                    heading: h,
                    heading_sentence: Some(sentence),
                    sentences: Vec::new(),
                });
            }
            Piece::Paragraph(p) => {
                let kind = if answer.sections.is_empty() { SentenceKind::Summary } else { SentenceKind::Content };
                for span in segment_sentences(&p) {
                    let text = one_line(span.text(&p));
                    let sentence = AnswerSentence { opinion_bearing: is_opinion_bearing(&text), text, index, kind };
                    index += 1;
                    match answer.sections.last_mut() {
                        Some(section) => section.sentences.push(sentence),
                        None => answer.summary.push(sentence),
                    }
                }
            }
        }
    }
    answer
}

/// Offline generator that answers extractively from the context blocks of a
/// prompt built by [`Prompt::to_request`]: the first evidence sentence as
/// summary, then one bold section per block listing its sentences.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveLlm;

pub const NO_CONTEXT_ANSWER: &str = "The provided context does not contain information to answer this question.";

impl ExtractiveLlm {
    fn blocks(request: &ChatRequest) -> Vec<(String, Vec<String>)> {
        let Some(user) = request.messages.iter().rev().find(|m| m.role == Role::User) else {
            return Vec::new();
        };
        let Some(context) = user.content.split_once("Context:\n").map(|x| x.1) else {
            return Vec::new();
        };
        let mut blocks: Vec<(String, Vec<String>)> = Vec::new();
        let mut open = false;
        for line in context.lines() {
            let t = line.trim();
            if t.is_empty() {
                open = false;
                continue;
            }
            if let Some(title) = t
                .strip_prefix('[')
                .and_then(|r| r.split_once("] "))
                .filter(|(n, _)| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
            {
                blocks.push((title.1.to_string(), Vec::new()));
                open = true;
            } else if open {
                if let Some(b) = blocks.last_mut() {
                    b.1.push(t.to_string());
                }
            } else {
                break;
            }
        }
        blocks
    }
}

impl Llm for ExtractiveLlm {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let blocks = Self::blocks(request);
        let Some(first) = blocks.iter().flat_map(|b| b.1.first()).next() else {
            return Ok(NO_CONTEXT_ANSWER.to_string());
        };
        let mut out = format!("{first}\n");
        for (i, (title, sentences)) in blocks.iter().enumerate() {
            out.push_str(&format!("\n**{}. {}**\n", i + 1, title));
            for s in sentences {
                out.push_str(&format!("- {s}\n"));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_document, DocumentFormat};
    use crate::provider::mock::MockLlm;
    use proptest::prelude::*;

    fn docs(texts: &[(&str, &str)]) -> BTreeMap<String, Document> {
        texts
            .iter()
            .map(|(title, body)| {
                let meta = [("title".to_string(), title.to_string())].into_iter().collect();
                let d = parse_document(body.as_bytes(), DocumentFormat::Json, &meta)
                    .or_else(|_| {
                        let json = serde_json::json!({"title": title, "text": body}).to_string();
                        parse_document(json.as_bytes(), DocumentFormat::Json, &BTreeMap::new())
                    })
                    .unwrap();
                (d.id.clone(), d)
            })
            .collect()
    }

    fn evidence_for(docs: &BTreeMap<String, Document>, order: &[&str]) -> Vec<EvidenceSpan> {
        let mut out = Vec::new();
        for title in order {
            let d = docs.values().find(|d| d.title == *title).unwrap();
            for s in &d.sentences {
                out.push(EvidenceSpan {
                    chunk_id: format!("{}-0000", d.id),
                    doc_id: d.id.clone(),
                    sentence_span: (s.start, s.end),
                    sentence_index: s.index,
                    score: 1.0,
                });
            }
        }
        out
    }

    #[test]
    fn blocks_grouped_by_document() {
        let d = docs(&[("A", "A one. A two."), ("B", "B one. B two.")]);
        let ev = evidence_for(&d, &["B", "A"]);
        let p = assemble_prompt("q", &ev, &d, &[], 10_000).unwrap();
        assert_eq!(p.context_blocks.len(), 2);
        assert_eq!(p.context_blocks[0].block_id, 1);
        assert_eq!(p.context_blocks[0].title, "B");
        assert_eq!(p.context_blocks[1].block_id, 2);
        assert_eq!(p.render_context(), "[1] B\nB one.\nB two.\n\n[2] A\nA one.\nA two.\n\n");
        let req = p.to_request();
        assert_eq!(req.messages[0].role, Role::System);
        assert!(req.messages[1].content.ends_with("Question: q\n"));
    }

    #[test]
    fn budget_trims_blocks_then_sentences() {
        let d = docs(&[("A", "A one. A two. A three."), ("B", "B one.")]);
        let ev = evidence_for(&d, &["A", "B"]);
        let full = assemble_prompt("q", &ev, &d, &[], 10_000).unwrap().render_context();
        let one_block = "[1] A\nA one.\nA two.\nA three.\n\n".chars().count();
        assert!(full.chars().count() > one_block);
        let p = assemble_prompt("q", &ev, &d, &[], one_block).unwrap();
        assert_eq!(p.context_blocks.len(), 1);
        assert_eq!(p.context_blocks[0].sentences.len(), 3);
        let p = assemble_prompt("q", &ev, &d, &[], one_block - 1).unwrap();
        let texts: Vec<_> = p.context_blocks[0].sentences.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["A one.", "A two."]);
        let p = assemble_prompt("q", &ev, &d, &[], 1).unwrap();
        assert_eq!(p.context_blocks[0].sentences.len(), 1);
        assert_eq!(assemble_prompt("q", &[], &d, &[], 100), Err(GenerationError::EmptyEvidence));
    }

    #[test]
    fn generate_plain_stream_and_timeout() {
        let d = docs(&[("A", "A one.")]);
        let p = assemble_prompt("q", &evidence_for(&d, &["A"]), &d, &[], 1000).unwrap();
        let fixture = "Summary here.\n\n**1. Aspect**\n- Point one.";
        let llm = MockLlm::fixed(fixture).with_chunk_chars(5);
        assert_eq!(generate(&p, &llm, None).unwrap(), fixture);
        let mut deltas = String::new();
        let streamed = generate(&p, &llm, Some(&mut |d: &str| deltas.push_str(d))).unwrap();
        assert_eq!((streamed.as_str(), deltas.as_str()), (fixture, fixture));
        let slow = MockLlm::fixed(fixture).with_chunk_chars(5).timing_out_after(2);
        assert_eq!(generate(&p, &slow, Some(&mut |_: &str| {})), Err(GenerationError::ProviderTimeout));
        assert!(matches!(generate(&p, &MockLlm::down(), None), Err(GenerationError::LlmUnavailable(_))));
    }

    proptest! {
        #[test]
        fn streaming_equals_plain(text in "\\PC{0,200}", chunk in 1usize..40) {
            let d = docs(&[("A", "A one.")]);
            let p = assemble_prompt("q", &evidence_for(&d, &["A"]), &d, &[], 1000).unwrap();
            let llm = MockLlm::fixed(text.clone()).with_chunk_chars(chunk);
            let mut deltas = String::new();
            let streamed = generate(&p, &llm, Some(&mut |d: &str| deltas.push_str(d))).unwrap();
            prop_assert_eq!(&streamed, &text);
            prop_assert_eq!(&deltas, &text);
        }
    }

    const CORAL_ANSWER: &str =
        "Climate change harms corals mainly through ocean warming. Heat stress causes bleaching and death.\n\n\
**1. Rising Ocean Temperatures and Coral Bleaching**\n\
- Warmer water makes corals expel their algae.\n\
- In summary,\n\n\
**2. Prolonged Heat Stress and Coral Death**\n\
- Long heatwaves kill bleached corals.\n\n\
**3. Impact on Iconic Coral Reefs**\n\
- The Great Barrier Reef has suffered repeated mass bleaching.\n";

    #[test]
    fn parses_aspect_sections() {
        let a = parse_structured_answer(CORAL_ANSWER);
        let headings: Vec<_> = a.sections.iter().map(|s| s.heading.as_str()).collect();
        assert_eq!(
            headings,
            [
                "1. Rising Ocean Temperatures and Coral Bleaching",
                "2. Prolonged Heat Stress and Coral Death",
                "3. Impact on Iconic Coral Reefs"
            ]
        );
        assert_eq!(a.summary.len(), 2);
        assert!(a.summary.iter().all(|s| s.kind == SentenceKind::Summary && s.opinion_bearing));
        assert_eq!(a.sections[0].sentences.len(), 2);
        assert!(!a.sections[0].sentences[1].opinion_bearing);
        let idx: Vec<_> = a.sentences().map(|s| s.index).collect();
        assert_eq!(idx, (0..idx.len()).collect::<Vec<_>>());
        assert!(a.sentences().filter(|s| s.kind == SentenceKind::Heading).all(|s| !s.opinion_bearing));
    }

    #[test]
    fn headingless_and_heading_only() {
        let a = parse_structured_answer("Corals bleach when water warms.");
        assert!(a.summary.is_empty());
        assert_eq!(a.sections.len(), 1);
        assert_eq!(a.sections[0].heading, "");
        assert_eq!(a.sections[0].sentences.len(), 1);
        assert_eq!(a.sections[0].sentences[0].kind, SentenceKind::Content);

        let h = parse_structured_answer("## Alpha\n**Beta:**\n1. **Gamma**");
        let headings: Vec<_> = h.sections.iter().map(|s| s.heading.as_str()).collect();
        assert_eq!(headings, ["Alpha", "Beta", "1. Gamma"]);
        assert!(h.sentences().all(|s| !s.opinion_bearing));

        let empty = parse_structured_answer("");
        assert_eq!(empty.sentences().count(), 0);
    }

    #[test]
    fn opinion_detection() {
        assert!(is_opinion_bearing("Corals bleach in warm water."));
        assert!(is_opinion_bearing("In summary, corals are dying."));
        assert!(!is_opinion_bearing("In summary,"));
        assert!(!is_opinion_bearing("Here are the key aspects:"));
        assert!(!is_opinion_bearing("Overall."));
        assert!(!is_opinion_bearing("1."));
    }

    #[test]
    fn extractive_llm_answers_from_blocks() {
        let d = docs(&[("Reef news", "Corals bleach. Reefs die."), ("Ocean", "Seas warm.")]);
        let p = assemble_prompt("q", &evidence_for(&d, &["Reef news", "Ocean"]), &d, &[], 1000).unwrap();
        let out = ExtractiveLlm.complete(&p.to_request()).unwrap();
        assert_eq!(
            out,
            "Corals bleach.\n\n**1. Reef news**\n- Corals bleach.\n- Reefs die.\n\n**2. Ocean**\n- Seas warm.\n"
        );
        let parsed = parse_structured_answer(&out);
        assert_eq!(parsed.sections.len(), 2);
        assert_eq!(ExtractiveLlm.complete(&ChatRequest::user("nothing")).unwrap(), NO_CONTEXT_ANSWER);
    }

    fn word_tokens(s: &str) -> Vec<String> {
        tokenize(s)
    }

    proptest! {
        #[test]
        fn parse_is_total(raw in "\\PC{0,300}") {
            let a = parse_structured_answer(&raw);
            let idx: Vec<_> = a.sentences().map(|s| s.index).collect();
            prop_assert_eq!(idx.clone(), (0..idx.len()).collect::<Vec<_>>());
        }

        #[test]
        fn reconstruction_keeps_every_word(
            parts in proptest::collection::vec(
                prop_oneof![
                    "[A-Za-z]{1,7}( [a-z]{1,7}){0,5}[.!?]".prop_map(|s| (0u8, s)),
                    "[A-Z][a-z]{1,7}( [a-z]{1,7}){0,3}".prop_map(|s| (1u8, s)),
                    "[a-z]{1,7}( [a-z]{1,7}){0,4}\\.".prop_map(|s| (2u8, s)),
                ],
                1..15,
            )
        ) {
            let mut raw = String::new();
            for (i, (kind, text)) in parts.iter().enumerate() {
                match kind {
                    0 => raw.push_str(&format!("{text}\n\n")),
                    1 => raw.push_str(&format!("**{}. {text}**\n", i + 1)),
                    _ => raw.push_str(&format!("- {text}\n")),
                }
            }
            let a = parse_structured_answer(&raw);
            let rebuilt: Vec<String> = a.sentences().map(|s| s.text.clone()).collect();
            prop_assert_eq!(word_tokens(&rebuilt.join(" ")), word_tokens(&raw));
        }
    }
}
