use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

const ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");

/// A sentence inside a document body, as byte offsets into the UTF-8 text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub index: usize,
}

impl SentenceSpan {
    pub fn text<'a>(&self, body: &'a str) -> &'a str {
        &body[self.start..self.end]
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?') || is_cjk_terminator(c)
}

fn is_cjk_terminator(c: char) -> bool {
    matches!(c, '。' | '！' | '？' | '｡')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201d}' | '\u{2019}' | ')' | ']' | '」' | '』' | '）' | '》')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '\u{201c}' | '\u{2018}' | '(' | '[')
}

/// The shipped abbreviation list, lowercased.
pub fn abbreviations() -> impl Iterator<Item = &'static str> {
    ABBREVIATIONS.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn is_abbreviation(word: &str) -> bool {
    let word = word.trim_start_matches(is_opener);
    abbreviations().any(|a| a.eq_ignore_ascii_case(word))
}

/// Byte ranges of paragraphs: maximal runs of lines holding non-whitespace.
fn paragraphs(body: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        let content = line.trim_end_matches('\n');
        if content.trim().is_empty() {
            if let Some(p) = current.take() {
                out.push(p);
            }
        } else {
            let end = offset + content.len();
            current = Some(match current {
                Some((s, _)) => (s, end),
                None => (offset, end),
            });
        }
        offset += line.len();
    }
    out.extend(current);
    out
}

/// Splits a body into sentences.
///
/// A sentence ends at a run of `.`, `!` or `?` (plus trailing closing quotes
/// or brackets) followed by whitespace or the end of the paragraph, unless the
/// word carrying a lone period is a known abbreviation. CJK terminators end a
/// sentence immediately. Blank lines always end a sentence.
pub fn segment_sentences(body: &str) -> Vec<SentenceSpan> {
    let mut spans = Vec::new();
    for (ps, pe) in paragraphs(body) {
        let text = &body[ps..pe];
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut start: Option<usize> = None;
        let mut k = 0;
        while k < chars.len() {
            let (i, c) = chars[k];
            if start.is_none() {
                if c.is_whitespace() {
                    k += 1;
                    continue;
                }
                start = Some(i);
            }
            if !is_terminator(c) {
                k += 1;
                continue;
            }
            let mut m = k + 1;
            while m < chars.len() && (is_terminator(chars[m].1) || is_closer(chars[m].1)) {
                m += 1;
            }
            let end = chars.get(m).map_or(text.len(), |&(j, _)| j);
            let at_boundary = m == chars.len() || chars[m].1.is_whitespace() || is_cjk_terminator(c);
            let lone_period = c == '.' && !text[i + 1..end].contains(is_terminator);
            let abbreviated = lone_period && {
                let word_start = text[..i]
                    .rfind(char::is_whitespace)
                    .map_or(0, |w| w + text[w..].chars().next().map_or(1, char::len_utf8));
                is_abbreviation(&text[word_start..i + 1])
            };
            if at_boundary && !abbreviated {
                if let Some(s) = start.take() {
                    spans.push((ps + s, ps + end));
                }
            }
            k = m;
        }
        if let Some(s) = start {
            let trimmed = text.trim_end();
            spans.push((ps + s, ps + trimmed.len()));
        }
    }
    spans.into_iter().enumerate().map(|(index, (start, end))| SentenceSpan { start, end, index }).collect()
}

/// Convenience: the sentence strings of `body`.
pub fn sentence_texts(body: &str) -> Vec<String> {
    segment_sentences(body).iter().map(|s| String::from(s.text(body))).collect()
}
