//! Single-question path: embed, retrieve, prompt, complete, extract,
//! validate and score.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{
    embed, split_text, ChunkError, ChunkParams, EmbeddingError, EmbeddingProvider, IndexError, VectorIndex,
    DEFAULT_TOP_K,
};
use crate::llm::{
    assemble_prompt, extract_sql, CompletionKey, CompletionProvider, ExtractionKind, ExtractionResult, LlmError,
    PromptError, ProviderMode, RefusalPatterns, TokenUsage, DEFAULT_PERSONA,
};
use crate::phase::Phase;
use crate::scalar::VectorScalar;
use crate::schema::{DroppedForeignKey, SchemaCatalog, SchemaError};
use crate::sql::{complexity_score, Band, BandThresholds, ComplexityInput, ComplexityScore, SqlAnalysis, SqlFeatures, ValidationReport};
use crate::util::{nlq_text_id, sha256_hex, Clock, SystemClock};

pub const SCHEMA_DOC: &str = "schema";
pub const CONTEXT_DOC: &str = "context";
pub const NARROWED_SCHEMA_DOC: &str = "schema_narrowed";
pub const SIDECAR_VERSION: u32 = 1;
const PREVIEW_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("index sidecar {path}: {message}")]
    Sidecar { path: PathBuf, message: String },
    #[error("stale index for {phase}: {message}")]
    Stale { phase: Phase, message: String },
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|e| CorpusError::Io { path: path.to_path_buf(), message: e.to_string() })
}

/// Raw material for the three phase corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSources {
    pub catalog: SchemaCatalog,
    pub narrowed: SchemaCatalog,
    pub dropped_foreign_keys: Vec<DroppedForeignKey>,
    pub context_text: String,
}

impl CorpusSources {
    pub fn new(catalog: SchemaCatalog, keep: &[String], context_text: String) -> Result<Self, CorpusError> {
        let narrowed = catalog.narrow(keep)?;
        Ok(CorpusSources {
            catalog,
            narrowed: narrowed.catalog,
            dropped_foreign_keys: narrowed.dropped_foreign_keys,
            context_text,
        })
    }

    /// `keep_path` is a JSON array of table names.
    pub fn load(schema_path: &Path, keep_path: &Path, context_path: &Path) -> Result<Self, CorpusError> {
        let catalog = SchemaCatalog::load(&read(schema_path)?)?;
        let keep: Vec<String> = serde_json::from_str(&read(keep_path)?)
            .map_err(|e| CorpusError::Io { path: keep_path.to_path_buf(), message: e.to_string() })?;
        Self::new(catalog, &keep, read(context_path)?)
    }

    /// Catalog generated SQL is checked against in `phase`.
    pub fn catalog(&self, phase: Phase) -> &SchemaCatalog {
        match phase {
            Phase::SchemaOnly | Phase::SchemaPlusContext => &self.catalog,
            Phase::NarrowedSchema => &self.narrowed,
        }
    }

    /// Documents retrieval draws from in `phase`, as (doc id, text).
    pub fn documents(&self, phase: Phase) -> Vec<(&'static str, String)> {
        match phase {
            Phase::SchemaOnly => vec![(SCHEMA_DOC, self.catalog.render_text())],
            Phase::SchemaPlusContext => {
                vec![(SCHEMA_DOC, self.catalog.render_text()), (CONTEXT_DOC, self.context_text.clone())]
            }
            Phase::NarrowedSchema => vec![(NARROWED_SCHEMA_DOC, self.narrowed.render_text())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentInfo {
    pub doc_id: String,
    pub sha256: String,
    pub chars: usize,
    pub chunks: usize,
}

/// Everything needed to answer questions under one phase. Immutable once
/// built and persisted as a versioned JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEnvironment<T> {
    pub version: u32,
    pub phase: Phase,
    pub embedder_id: String,
    pub chunk_params: ChunkParams,
    pub documents: Vec<DocumentInfo>,
    pub catalog: SchemaCatalog,
    pub index: VectorIndex<T>,
}

impl<T: VectorScalar> PhaseEnvironment<T> {
    pub fn build(
        phase: Phase,
        sources: &CorpusSources,
        params: ChunkParams,
        embedder: &dyn EmbeddingProvider<T>,
    ) -> Result<Self, CorpusError> {
        let mut chunks = Vec::new();
        let mut documents = Vec::new();
        for (doc_id, text) in sources.documents(phase) {
            let doc_chunks = split_text(doc_id, &text, params)?;
            documents.push(DocumentInfo {
                doc_id: doc_id.to_string(),
                sha256: sha256_hex(text.as_bytes()),
                chars: text.chars().count(),
                chunks: doc_chunks.len(),
            });
            chunks.extend(doc_chunks);
        }
        let index = VectorIndex::build(chunks, embedder)?;
        Ok(PhaseEnvironment {
            version: SIDECAR_VERSION,
            phase,
            embedder_id: embedder.id(),
            chunk_params: params,
            documents,
            catalog: sources.catalog(phase).clone(),
            index,
        })
    }

    /// Combined hash of the phase's documents.
    pub fn corpus_hash(&self) -> String {
        let joined: Vec<String> = self.documents.iter().map(|d| format!("{}:{}", d.doc_id, d.sha256)).collect();
        sha256_hex(joined.join("\n").as_bytes())
    }

    pub fn sidecar_path(dir: &Path, phase: Phase) -> PathBuf {
        dir.join(format!("{}.index.json", phase.id()))
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let json = serde_json::to_string(self)
            .map_err(|e| CorpusError::Sidecar { path: path.to_path_buf(), message: e.to_string() })?;
        std::fs::write(path, json).map_err(|e| CorpusError::Io { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let sidecar = |message: String| CorpusError::Sidecar { path: path.to_path_buf(), message };
        let env: Self = serde_json::from_str(&read(path)?).map_err(|e| sidecar(e.to_string()))?;
        if env.version != SIDECAR_VERSION {
            return Err(sidecar(format!("unsupported version {}", env.version)));
        }
        env.index.verify()?;
        Ok(env)
    }

    /// Check a loaded environment against the current sources and embedder.
    pub fn ensure_fresh(&self, sources: &CorpusSources, embedder_id: &str) -> Result<(), CorpusError> {
        let stale = |message: String| CorpusError::Stale { phase: self.phase, message };
        if self.embedder_id != embedder_id {
            return Err(stale(format!("built with {}, current embedder is {embedder_id}", self.embedder_id)));
        }
        let current: Vec<(String, String)> = sources
            .documents(self.phase)
            .into_iter()
            .map(|(id, text)| (id.to_string(), sha256_hex(text.as_bytes())))
            .collect();
        let recorded: Vec<(String, String)> =
            self.documents.iter().map(|d| (d.doc_id.clone(), d.sha256.clone())).collect();
        if current != recorded {
            return Err(stale("corpus documents changed since ingest".into()));
        }
        if self.catalog != *sources.catalog(self.phase) {
            return Err(stale("schema catalog changed since ingest".into()));
        }
        Ok(())
    }
}

/// One environment per phase.
pub type Environments<T> = BTreeMap<Phase, PhaseEnvironment<T>>;

pub fn build_environments<T: VectorScalar>(
    sources: &CorpusSources,
    params: ChunkParams,
    embedder: &dyn EmbeddingProvider<T>,
) -> Result<Environments<T>, CorpusError> {
    Phase::ALL
        .iter()
        .map(|&p| Ok((p, PhaseEnvironment::build(p, sources, params, embedder)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub nlq: String,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_to_create: Option<u32>,
    /// Dataset id; ad-hoc questions get an id derived from their text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlq_id: Option<String>,
}

impl QueryRequest {
    pub fn new(nlq: impl Into<String>, phase: Phase) -> Self {
        QueryRequest { nlq: nlq.into(), phase, time_to_create: None, nlq_id: None }
    }

    pub fn resolved_id(&self) -> String {
        self.nlq_id.clone().unwrap_or_else(|| nlq_text_id(&self.nlq))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub seq: usize,
    pub similarity: f64,
    pub preview: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub provider_id: String,
    pub provider_mode: ProviderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub embedder_id: String,
    pub phase: Phase,
    pub top_k: usize,
    pub corpus_hash: String,
    pub started_ms: u64,
    pub finished_ms: u64,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub nlq_id: String,
    pub nlq: String,
    pub phase: Phase,
    pub extraction: ExtractionResult,
    pub raw_response: String,
    pub retrieved: Vec<RetrievedChunk>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<SqlFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ComplexityScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    pub run_metadata: RunMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Request,
    Embedding,
    Retrieval,
    Completion,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Request => "request",
            Stage::Embedding => "embedding",
            Stage::Retrieval => "retrieval",
            Stage::Completion => "completion",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StageError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("environment is for {found}, request is for {expected}")]
    PhaseMismatch { expected: Phase, found: Phase },
    #[error("index was built with {index}, query embedder is {provider}")]
    EmbedderMismatch { index: String, provider: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Whatever was known when a request failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialProvenance {
    pub nlq_id: String,
    pub phase: Phase,
    pub provider_id: String,
    pub retrieved: Vec<RetrievedChunk>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} failed for {} in {}: {source}", .partial.nlq_id, .partial.phase)]
pub struct PipelineError {
    pub stage: Stage,
    pub partial: PartialProvenance,
    #[source]
    pub source: StageError,
}

/// Shared configuration for answering questions.
#[derive(Clone)]
pub struct Workbench<T> {
    pub embedder: Arc<dyn EmbeddingProvider<T>>,
    pub completer: Arc<dyn CompletionProvider>,
    pub refusal_patterns: RefusalPatterns,
    pub persona: String,
    pub top_k: usize,
    pub clock: Arc<dyn Clock>,
    /// When set, scored results also carry their band.
    pub band_thresholds: Option<BandThresholds<f64>>,
}

impl<T: VectorScalar> Workbench<T> {
    pub fn new(embedder: Arc<dyn EmbeddingProvider<T>>, completer: Arc<dyn CompletionProvider>) -> Self {
        Workbench {
            embedder,
            completer,
            refusal_patterns: RefusalPatterns::default(),
            persona: DEFAULT_PERSONA.to_string(),
            top_k: DEFAULT_TOP_K,
            clock: Arc::new(SystemClock),
            band_thresholds: None,
        }
    }

    /// Answer one question. Each call is independent of every other call.
    pub fn answer_nlq(&self, request: &QueryRequest, env: &PhaseEnvironment<T>) -> Result<QueryResult, PipelineError> {
        let mut partial = PartialProvenance {
            nlq_id: request.resolved_id(),
            phase: request.phase,
            provider_id: self.completer.id(),
            retrieved: Vec::new(),
        };
        let fail = |stage, partial: &PartialProvenance, source: StageError| PipelineError {
            stage,
            partial: partial.clone(),
            source,
        };
        if request.nlq.trim().is_empty() {
            return Err(fail(Stage::Request, &partial, PromptError::EmptyNlq.into()));
        }
        if env.phase != request.phase {
            return Err(fail(
                Stage::Request,
                &partial,
                StageError::PhaseMismatch { expected: request.phase, found: env.phase },
            ));
        }
        if env.embedder_id != self.embedder.id() {
            return Err(fail(
                Stage::Embedding,
                &partial,
                StageError::EmbedderMismatch { index: env.embedder_id.clone(), provider: self.embedder.id() },
            ));
        }
        let started_ms = self.clock.now_ms();

        let query_vector = embed(std::slice::from_ref(&request.nlq), self.embedder.as_ref())
            .map_err(|e| fail(Stage::Embedding, &partial, e.into()))?
            .remove(0);
        let hits = env
            .index
            .retrieve_top_k(&query_vector, self.top_k)
            .map_err(|e| fail(Stage::Retrieval, &partial, e.into()))?;
        partial.retrieved = hits
            .iter()
            .map(|h| RetrievedChunk {
                chunk_id: h.chunk.id(),
                doc_id: h.chunk.doc_id.clone(),
                seq: h.chunk.seq,
                similarity: h.similarity.to_f64().unwrap_or(0.0),
                preview: h.chunk.text.chars().take(PREVIEW_CHARS).collect(),
            })
            .collect();

        let bundle = assemble_prompt(&request.nlq, hits.iter().map(|h| h.chunk), &self.persona)
            .map_err(|e| fail(Stage::Request, &partial, e.into()))?;
        let key = CompletionKey { phase: request.phase, nlq_id: partial.nlq_id.clone(), nlq: request.nlq.clone() };
        let response = self
            .completer
            .complete(&key, &bundle)
            .map_err(|e| fail(Stage::Completion, &partial, e.into()))?;

        let mut extraction = extract_sql(&response.raw_text, &self.refusal_patterns);
        let (mut validation, mut features, mut score, mut band) = (None, None, None, None);
        if extraction.kind == ExtractionKind::Sql {
            let sql = extraction.sql_text.as_deref().unwrap_or_default();
            match SqlAnalysis::parse(sql) {
                Ok(analysis) => {
                    let f = analysis.features();
                    let s = complexity_score(&ComplexityInput {
                        features: f,
                        time_to_create: request.time_to_create.unwrap_or(0),
                    });
                    validation = Some(analysis.validate(&env.catalog));
                    band = self.band_thresholds.map(|t| t.band(f64::from(s)));
                    features = Some(f);
                    score = Some(s);
                }
                Err(e) => extraction = ExtractionResult::unparseable(Some(format!("SQL not analysable: {e}"))),
            }
        }
        let finished_ms = self.clock.now_ms();
        Ok(QueryResult {
            nlq_id: partial.nlq_id,
            nlq: request.nlq.clone(),
            phase: request.phase,
            extraction,
            raw_response: response.raw_text,
            retrieved: partial.retrieved,
            validation,
            features,
            score,
            band,
            run_metadata: RunMetadata {
                provider_id: response.provider_id,
                provider_mode: self.completer.mode(),
                temperature: self.completer.temperature(),
                embedder_id: env.embedder_id.clone(),
                phase: request.phase,
                top_k: self.top_k,
                corpus_hash: env.corpus_hash(),
                started_ms,
                finished_ms,
                latency_ms: response.latency_ms,
                token_usage: response.token_usage,
            },
        })
    }
}
