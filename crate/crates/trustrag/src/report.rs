//! Terminal rendering of annotated answers.

use std::collections::BTreeMap;
use std::fmt::Write;

use trustrag_core::citation::AnnotatedAnswer;
use trustrag_core::ingest::Document;

const QUOTE_CHARS: usize = 160;

fn quote(text: &str) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= QUOTE_CHARS {
        flat
    } else {
        let cut: String = flat.chars().take(QUOTE_CHARS - 1).collect();
        format!("{cut}…")
    }
}

/// The labelled answer followed by a source table: one entry per group with
/// title, link, date and the cited sentences. Unsupported sentences are
/// listed at the end.
pub fn render(answer: &AnnotatedAnswer, docs: &BTreeMap<String, Document>) -> String {
    let mut out = answer.render_text();
    if !answer.groups.is_empty() {
        out.push_str("\nSources\n");
    }
    for g in &answer.groups {
        let mut line = format!("{} {}", g.label, g.title);
        if !g.source_uri.is_empty() {
            let _ = write!(line, " <{}>", g.source_uri);
        }
        if let Some(d) = g.publish_date {
            let _ = write!(line, " ({d})");
        }
        if let Some(a) = &g.author {
            let _ = write!(line, " by {a}");
        }
        out.push_str(&line);
        out.push('\n');
        if let Some(doc) = docs.get(&g.doc_id) {
            for &(s, e) in &g.spans {
                if let Some(text) = doc.body.get(s..e) {
                    let _ = writeln!(out, "    \"{}\"", quote(text));
                }
            }
        }
    }
    let unsupported: Vec<&str> = answer.sentences().filter(|s| s.unsupported).map(|s| s.text.as_str()).collect();
    if !unsupported.is_empty() {
        out.push_str("\nUnsupported\n");
        for s in unsupported {
            let _ = writeln!(out, "    ! {s}");
        }
    }
    out
}
