use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::PromptBundle;
use crate::phase::Phase;
use crate::remote::{RemoteConfig, RemoteError, ENV_MODEL};
use crate::util::sha256_hex;

/// Identifies one completion request for replay lookup and provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionKey {
    pub phase: Phase,
    pub nlq_id: String,
    pub nlq: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub raw_text: String,
    pub provider_id: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("no recorded response for phase {phase}, nlq {nlq_id:?}")]
    ReplayMiss { phase: Phase, nlq_id: String },
    #[error("invalid replay file: {0}")]
    ReplayFile(String),
    #[error("provider returned an empty completion")]
    EmptyResponse,
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Remote,
    Replay,
}

impl ProviderMode {
    pub fn label(self) -> &'static str {
        match self {
            ProviderMode::Remote => "remote",
            ProviderMode::Replay => "replay",
        }
    }
}

/// A chat-completion source. Each call is an independent single-turn
/// conversation.
pub trait CompletionProvider: Send + Sync {
    fn id(&self) -> String;

    fn mode(&self) -> ProviderMode;

    /// Sampling temperature sent to the model, if any.
    fn temperature(&self) -> Option<f64> {
        None
    }

    fn complete(&self, key: &CompletionKey, bundle: &PromptBundle) -> Result<LlmResponse, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub phase: Phase,
    pub nlq_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlq: Option<String>,
    pub response: String,
}

/// Serves recorded responses keyed by (phase, nlq id), falling back to
/// (phase, trimmed question text).
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    records: Vec<ReplayRecord>,
    by_id: HashMap<(Phase, String), usize>,
    by_text: HashMap<(Phase, String), usize>,
    source_hash: String,
}

impl ReplayProvider {
    pub fn from_records(records: Vec<ReplayRecord>) -> Result<Self, LlmError> {
        let source = serde_json::to_vec(&records).map_err(|e| LlmError::ReplayFile(e.to_string()))?;
        Self::build(records, sha256_hex(&source))
    }

    fn build(records: Vec<ReplayRecord>, source_hash: String) -> Result<Self, LlmError> {
        let mut by_id = HashMap::new();
        let mut by_text = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if by_id.insert((r.phase, r.nlq_id.clone()), i).is_some() {
                return Err(LlmError::ReplayFile(format!("duplicate record for {} {}", r.phase, r.nlq_id)));
            }
            if let Some(text) = &r.nlq {
                by_text.entry((r.phase, text.trim().to_string())).or_insert(i);
            }
        }
        Ok(ReplayProvider { records, by_id, by_text, source_hash })
    }

    /// Parse a JSON array of records.
    pub fn parse(source: &str) -> Result<Self, LlmError> {
        let records: Vec<ReplayRecord> = serde_json::from_str(source).map_err(|e| LlmError::ReplayFile(e.to_string()))?;
        Self::build(records, sha256_hex(source.as_bytes()))
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let source =
            std::fs::read_to_string(path).map_err(|e| LlmError::ReplayFile(format!("{}: {e}", path.display())))?;
        Self::parse(&source)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// SHA-256 of the replay source.
    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn lookup(&self, key: &CompletionKey) -> Option<&ReplayRecord> {
        self.by_id
            .get(&(key.phase, key.nlq_id.clone()))
            .or_else(|| self.by_text.get(&(key.phase, key.nlq.trim().to_string())))
            .map(|&i| &self.records[i])
    }
}

impl CompletionProvider for ReplayProvider {
    fn id(&self) -> String {
        format!("replay:{}", &self.source_hash[..12])
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::Replay
    }

    fn complete(&self, key: &CompletionKey, _bundle: &PromptBundle) -> Result<LlmResponse, LlmError> {
        let record = self
            .lookup(key)
            .ok_or_else(|| LlmError::ReplayMiss { phase: key.phase, nlq_id: key.nlq_id.clone() })?;
        Ok(LlmResponse { raw_text: record.response.clone(), provider_id: self.id(), latency_ms: 0, token_usage: None })
    }
}

/// OpenAI-compatible `/chat/completions` client at temperature 0.
#[derive(Debug, Clone)]
pub struct RemoteChatProvider {
    pub config: RemoteConfig,
    pub model: String,
}

impl RemoteChatProvider {
    pub const TEMPERATURE: f64 = 0.0;

    pub fn new(config: RemoteConfig, model: impl Into<String>) -> Self {
        RemoteChatProvider { config, model: model.into() }
    }

    pub fn from_env() -> Result<Self, RemoteError> {
        let model = std::env::var(ENV_MODEL).map_err(|_| RemoteError::Config(ENV_MODEL.into()))?;
        Ok(Self::new(RemoteConfig::from_env()?, model))
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> Value {
        json!({
            "model": self.model,
            "temperature": Self::TEMPERATURE,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_message()},
            ],
        })
    }
}

fn parse_completion(reply: &Value) -> Result<(String, Option<TokenUsage>), LlmError> {
    let text = reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| RemoteError::Malformed("missing choices[0].message.content".into()))?;
    if text.trim().is_empty() {
        return Err(LlmError::EmptyResponse);
    }
    let usage = reply.get("usage").map(|u| {
        let field = |name: &str| u.get(name).and_then(Value::as_u64).unwrap_or(0);
        TokenUsage {
            prompt_tokens: field("prompt_tokens"),
            completion_tokens: field("completion_tokens"),
            total_tokens: field("total_tokens"),
        }
    });
    Ok((text.to_string(), usage))
}

impl CompletionProvider for RemoteChatProvider {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::Remote
    }

    fn temperature(&self) -> Option<f64> {
        Some(Self::TEMPERATURE)
    }

    fn complete(&self, _key: &CompletionKey, bundle: &PromptBundle) -> Result<LlmResponse, LlmError> {
        let started = Instant::now();
        let reply = self.config.post_json("chat/completions", &self.request_body(bundle))?;
        let (raw_text, token_usage) = parse_completion(&reply)?;
        Ok(LlmResponse { raw_text, provider_id: self.id(), latency_ms: started.elapsed().as_millis() as u64, token_usage })
    }
}
