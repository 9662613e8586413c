//! Prompt templates shipped with the crate. Placeholders are `{{name}}`.

pub const COREFERENCE: &str = include_str!("../prompts/coreference.txt");
pub const QUERY_EXPANSION: &str = include_str!("../prompts/query_expansion.txt");
pub const QUERY_DECOMPOSITION: &str = include_str!("../prompts/query_decomposition.txt");
pub const QUERY_DISAMBIGUATION: &str = include_str!("../prompts/query_disambiguation.txt");
pub const QUERY_ABSTRACTION: &str = include_str!("../prompts/query_abstraction.txt");
pub const USEFULNESS: &str = include_str!("../prompts/usefulness.txt");
pub const ANSWER_SYSTEM: &str = include_str!("../prompts/answer_system.txt");
pub const ANSWER_USER: &str = include_str!("../prompts/answer_user.txt");

/// Line that identifies the coreference template in a request.
pub const COREFERENCE_MARKER: &str = "Rewrite the passage so that it can be understood on its own.";
/// Line that identifies the usefulness template in a request.
pub const USEFULNESS_MARKER: &str = "Task: usefulness judgement.";
/// Prefix shared by the query rewriting templates (`Task: query <kind>.`).
pub const QUERY_MARKER: &str = "Task: query ";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_appear_in_templates() {
        assert!(COREFERENCE.starts_with(COREFERENCE_MARKER));
        assert!(USEFULNESS.starts_with(USEFULNESS_MARKER));
        for t in [QUERY_EXPANSION, QUERY_DECOMPOSITION, QUERY_DISAMBIGUATION, QUERY_ABSTRACTION] {
            assert!(t.starts_with(QUERY_MARKER));
            assert!(t.contains("{{query}}"));
        }
        assert!(COREFERENCE.contains("Passage: It bleached rapidly."));
    }
}
