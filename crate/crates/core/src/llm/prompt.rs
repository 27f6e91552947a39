use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::Chunk;

/// System persona sent with every completion.
pub const DEFAULT_PERSONA: &str = "You are an Oracle SQL expert. Given a question, generate a syntactically correct Oracle SQL query. Avoid querying non-existent columns and pay close attention to column-table associations. For keywords in the WHERE clause, ensure case-insensitive data comparison, for example, `upper(STATE_NAME) = upper('deleted')`. If you are unable to generate the SQL query, please state that you cannot create the query without additional information or context, do not attempt to make anything up.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("persona is empty")]
    EmptyPersona,
    #[error("question is empty")]
    EmptyNlq,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    /// Retrieved chunk texts in rank order, each starting with `[doc_id#seq]`.
    pub context_blocks: Vec<String>,
    pub user_nlq: String,
}

impl PromptBundle {
    /// Text of the single user turn: context blocks, then the question.
    pub fn user_message(&self) -> String {
        if self.context_blocks.is_empty() {
            return self.user_nlq.clone();
        }
        format!("Context:\n\n{}\n\nQuestion: {}", self.context_blocks.join("\n\n"), self.user_nlq)
    }
}

pub fn context_block(chunk: &Chunk) -> String {
    format!("[{}]\n{}", chunk.id(), chunk.text)
}

pub fn assemble_prompt<'a>(
    nlq: &str,
    retrieved: impl IntoIterator<Item = &'a Chunk>,
    persona: &str,
) -> Result<PromptBundle, PromptError> {
    if persona.trim().is_empty() {
        return Err(PromptError::EmptyPersona);
    }
    if nlq.trim().is_empty() {
        return Err(PromptError::EmptyNlq);
    }
    Ok(PromptBundle {
        system_text: persona.to_string(),
        context_blocks: retrieved.into_iter().map(context_block).collect(),
        user_nlq: nlq.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(doc: &str, seq: usize, text: &str) -> Chunk {
        Chunk { doc_id: doc.into(), seq, start_char: 0, end_char: text.chars().count(), text: text.into() }
    }

    #[test]
    fn blocks_keep_rank_order_and_markers() {
        let a = chunk("context", 3, "alpha");
        let b = chunk("schema", 0, "beta");
        let p = assemble_prompt("count new cases", [&a, &b], "P").unwrap();
        assert_eq!(p.system_text, "P");
        assert_eq!(p.context_blocks, vec!["[context#3]\nalpha", "[schema#0]\nbeta"]);
        assert_eq!(p.user_nlq, "count new cases");
        let q = assemble_prompt("count new cases", [&b, &a], "P").unwrap();
        assert_eq!(q.context_blocks[0], "[schema#0]\nbeta");
        assert_eq!(p, assemble_prompt("count new cases", [&a, &b], "P").unwrap());
    }

    #[test]
    fn empty_context_is_allowed() {
        let p = assemble_prompt("q", [], DEFAULT_PERSONA).unwrap();
        assert!(p.context_blocks.is_empty());
        assert_eq!(p.user_message(), "q");
        assert_eq!(p.system_text.as_bytes(), DEFAULT_PERSONA.as_bytes());
    }

    #[test]
    fn rejects_empty_inputs() {
        assert_eq!(assemble_prompt("  ", [], "P"), Err(PromptError::EmptyNlq));
        assert_eq!(assemble_prompt("q", [], ""), Err(PromptError::EmptyPersona));
    }
}
