//! Prompt assembly, completion providers and response parsing.

mod extract;
mod prompt;
mod provider;

pub use extract::{
    detect_refusal, extract_sql, ExtractionKind, ExtractionResult, RefusalPatterns, DEFAULT_REFUSAL_PATTERNS,
};
pub use prompt::{assemble_prompt, context_block, PromptBundle, PromptError, DEFAULT_PERSONA};
pub use provider::{
    CompletionKey, CompletionProvider, LlmError, LlmResponse, ProviderMode, RemoteChatProvider, ReplayProvider,
    ReplayRecord, TokenUsage,
};
