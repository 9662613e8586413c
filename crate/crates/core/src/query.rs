//! Query optimization: expansion, decomposition, disambiguation and
//! abstraction rewrites gathered into a weighted [`QueryBundle`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::prompts;
use crate::provider::{ChatRequest, Llm};
use crate::text::{fill, fold};

pub const MAX_VARIANTS: usize = 8;
pub const VARIANT_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewriteKind {
    Expansion,
    Decomposition,
    Disambiguation,
    Abstraction,
}

impl RewriteKind {
    pub const ALL: [RewriteKind; 4] = [Self::Expansion, Self::Decomposition, Self::Disambiguation, Self::Abstraction];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Expansion => "expansion",
            Self::Decomposition => "decomposition",
            Self::Disambiguation => "disambiguation",
            Self::Abstraction => "abstraction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
    }

    fn template(self) -> &'static str {
        match self {
            Self::Expansion => prompts::QUERY_EXPANSION,
            Self::Decomposition => prompts::QUERY_DECOMPOSITION,
            Self::Disambiguation => prompts::QUERY_DISAMBIGUATION,
            Self::Abstraction => prompts::QUERY_ABSTRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryVariant {
    pub text: String,
    pub kind: RewriteKind,
    pub weight: f64,
}

/// The original query (implicit weight 1.0) plus up to [`MAX_VARIANTS`]
/// rewrites with distinct texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub original: String,
    pub variants: Vec<QueryVariant>,
}

impl QueryBundle {
    pub fn original_only(query: impl Into<String>) -> Self {
        Self { original: query.into(), variants: Vec::new() }
    }

    /// `(text, weight)` for the original followed by every variant.
    pub fn weighted(&self) -> Vec<(&str, f64)> {
        let mut out = Vec::with_capacity(1 + self.variants.len());
        out.push((self.original.as_str(), 1.0));
        out.extend(self.variants.iter().map(|v| (v.text.as_str(), v.weight)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("query is empty")]
    EmptyQuery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rewrite {
    pub bundle: QueryBundle,
    /// Per-kind problems (provider failure, unparseable output).
    pub warnings: Vec<String>,
}

/// A previous conversation turn offered to rewriting prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub query: String,
    pub answer: String,
}

const HISTORY_TURNS: usize = 3;
const HISTORY_ANSWER_CHARS: usize = 400;

pub fn render_history(history: &[HistoryTurn]) -> String {
    if history.is_empty() {
        return String::new();
    }
    let mut s = String::from("Conversation so far:\n");
    for turn in &history[history.len().saturating_sub(HISTORY_TURNS)..] {
        let answer: String = turn.answer.chars().take(HISTORY_ANSWER_CHARS).collect();
        s.push_str(&format!("Q: {}\nA: {}\n", turn.query.trim(), answer.trim()));
    }
    s.push('\n');
    s
}

pub fn rewrite_request(kind: RewriteKind, query: &str, history: &[HistoryTurn]) -> ChatRequest {
    ChatRequest::user(fill(kind.template(), &[("query", query), ("history", &render_history(history))]))
}

/// Extracts a JSON list of strings, tolerating code fences and surrounding
/// prose.
pub fn parse_string_list(output: &str) -> Option<Vec<String>> {
    let start = output.find('[')?;
    let end = output.rfind(']')?;
    if end < start {
        return None;
    }
    serde_json::from_str(&output[start..=end]).ok()
}

/// Asks the provider for each requested kind, in kind order, and assembles
/// the bundle. Provider or parse failures only add a warning.
pub fn rewrite(
    query: &str,
    modes: &[RewriteKind],
    llm: Option<&dyn Llm>,
    history: &[HistoryTurn],
) -> Result<Rewrite, QueryError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(QueryError::EmptyQuery);
    }
    let mut modes = modes.to_vec();
    modes.sort();
    modes.dedup();

    let mut bundle = QueryBundle::original_only(query);
    let mut seen = vec![fold(query)];
    let mut warnings = Vec::new();
    for kind in modes {
        let Some(llm) = llm else {
            warnings.push(format!("{}: no rewrite provider configured", kind.as_str()));
            continue;
        };
        let output = match llm.complete(&rewrite_request(kind, query, history)) {
            Ok(o) => o,
            Err(e) => {
                warnings.push(format!("{}: {e}", kind.as_str()));
                continue;
            }
        };
        let Some(list) = parse_string_list(&output) else {
            warnings.push(format!("{}: output is not a JSON list of strings", kind.as_str()));
            continue;
        };
        for text in list {
            let text = text.trim();
            let key = fold(text);
            if text.is_empty() || seen.contains(&key) {
                continue;
            }
            if bundle.variants.len() == MAX_VARIANTS {
                break;
            }
            seen.push(key);
            bundle.variants.push(QueryVariant { text: text.to_string(), kind, weight: VARIANT_WEIGHT });
        }
    }
    Ok(Rewrite { bundle, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::mock::MockLlm;
    use proptest::prelude::*;

    const QUERY: &str = "How does climate change affect corals?";

    #[test]
    fn no_modes_is_identity() {
        let r = rewrite(QUERY, &[], None, &[]).unwrap();
        assert_eq!(r.bundle, QueryBundle::original_only(QUERY));
        assert_eq!(r.bundle.weighted(), [(QUERY, 1.0)]);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn empty_query_rejected() {
        assert_eq!(rewrite("  ", &[], None, &[]), Err(QueryError::EmptyQuery));
    }

    #[test]
    fn expansion_variants() {
        let llm = MockLlm::new(|req| {
            assert!(req.transcript().contains("Task: query expansion."));
            Ok(r#"["coral bleaching causes", "ocean temperature rise corals"]"#.into())
        });
        let r = rewrite(QUERY, &[RewriteKind::Expansion], Some(&llm), &[]).unwrap();
        let v = &r.bundle.variants;
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].text, "coral bleaching causes");
        assert!(v.iter().all(|v| v.weight == 0.5 && v.kind == RewriteKind::Expansion));
    }

    #[test]
    fn malformed_output_yields_warning_only() {
        let llm = MockLlm::new(|req| {
            Ok(if req.transcript().contains("decomposition") {
                "sorry, I cannot do that".into()
            } else {
                "```json\n[\"a\", \"A\", \"How does climate change affect corals?\"]\n```".into()
            })
        });
        let r = rewrite(QUERY, &[RewriteKind::Decomposition, RewriteKind::Expansion], Some(&llm), &[]).unwrap();
        assert_eq!(r.bundle.variants.len(), 1);
        assert_eq!(r.bundle.variants[0].text, "a");
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].starts_with("decomposition"));

        let down = rewrite(QUERY, &[RewriteKind::Abstraction], Some(&MockLlm::down()), &[]).unwrap();
        assert!(down.bundle.variants.is_empty());
        assert_eq!(down.warnings.len(), 1);
    }

    #[test]
    fn history_reaches_prompt() {
        let h = [HistoryTurn { query: "What about reefs?".into(), answer: "Reefs bleach.".into() }];
        let req = rewrite_request(RewriteKind::Disambiguation, "and fish?", &h);
        assert!(req.transcript().contains("Q: What about reefs?\nA: Reefs bleach."));
    }

    proptest! {
        #[test]
        fn bounded_and_original_preserved(items in proptest::collection::vec("[a-c ]{0,4}", 0..40)) {
            let json = serde_json::to_string(&items).unwrap();
            let llm = MockLlm::fixed(json);
            let r = rewrite(QUERY, &RewriteKind::ALL, Some(&llm), &[]).unwrap();
            prop_assert_eq!(&r.bundle.original, QUERY);
            prop_assert!(r.bundle.variants.len() <= MAX_VARIANTS);
            let mut keys: Vec<String> = r.bundle.variants.iter().map(|v| fold(&v.text)).collect();
            keys.push(fold(QUERY));
            let n = keys.len();
            keys.sort();
            keys.dedup();
            prop_assert_eq!(keys.len(), n);
            // first-come order from the provider output is kept
            let expected: Vec<String> = {
                let mut seen = vec![fold(QUERY)];
                let mut out = Vec::new();
                for t in &items {
                    let t = t.trim();
                    if !t.is_empty() && !seen.contains(&fold(t)) && out.len() < MAX_VARIANTS {
                        seen.push(fold(t));
                        out.push(t.to_string());
                    }
                }
                out
            };
            let got: Vec<String> = r.bundle.variants.iter().map(|v| v.text.clone()).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
