use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ctxsql_core::context::EmbeddingError;
use ctxsql_core::eval::{LabelRecord, Outcome};
use ctxsql_core::llm::LlmError;
use ctxsql_core::pipeline::{PartialProvenance, PipelineError, QueryRequest, Stage, StageError};
use ctxsql_core::remote::RemoteError;
use ctxsql_core::util::{nlq_text_id, Clock, SystemClock};
use ctxsql_core::Phase;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::state::AppState;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/query", post(query))
        .route("/api/feedback", post(feedback))
        .route("/api/health", get(health))
        .with_state(state)
}

/// Structured error body: `{"error": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial: Option<PartialProvenance>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            kind: kind.to_string(),
            message: message.into(),
            stage: None,
            retry_after_secs: None,
            partial: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": self }))).into_response()
    }
}

fn remote_kind(e: &RemoteError) -> &'static str {
    match e {
        RemoteError::RateLimited { .. } => "rate_limited",
        RemoteError::Auth { .. } => "auth",
        RemoteError::Http { .. } => "http",
        RemoteError::Transport(_) => "transport",
        RemoteError::Malformed(_) => "malformed_response",
        RemoteError::Config(_) => "provider_config",
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let remote = match &e.source {
            StageError::Llm(LlmError::Remote(r)) | StageError::Embedding(EmbeddingError::Remote(r)) => Some(r),
            _ => None,
        };
        let (status, kind) = match (&e.source, remote) {
            (_, Some(r)) => (StatusCode::BAD_GATEWAY, remote_kind(r)),
            (StageError::Prompt(_), _) => (StatusCode::BAD_REQUEST, "bad_request"),
            (StageError::Llm(LlmError::ReplayMiss { .. }), _) => (StatusCode::BAD_GATEWAY, "replay_miss"),
            (StageError::Llm(LlmError::EmptyResponse), _) => (StatusCode::BAD_GATEWAY, "empty_response"),
            (StageError::Llm(_), _) => (StatusCode::BAD_GATEWAY, "provider"),
            (StageError::Embedding(_), _) => (StatusCode::BAD_GATEWAY, "embedding"),
            (StageError::EmbedderMismatch { .. }, _) => (StatusCode::INTERNAL_SERVER_ERROR, "embedder_mismatch"),
            (StageError::PhaseMismatch { .. }, _) => (StatusCode::INTERNAL_SERVER_ERROR, "phase_mismatch"),
            (StageError::Index(_), _) => (StatusCode::INTERNAL_SERVER_ERROR, "index"),
        };
        let mut out = ApiError::new(status, kind, e.source.to_string());
        out.stage = Some(e.stage);
        out.retry_after_secs = remote.and_then(|r| r.retry_after()).map(|d| d.as_secs());
        out.partial = Some(e.partial);
        out
    }
}

fn parse_object(body: &Bytes) -> Result<serde_json::Map<String, Value>, ApiError> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::bad_request("request body must be a JSON object")),
        Err(e) => Err(ApiError::bad_request(format!("malformed JSON: {e}"))),
    }
}

fn optional_string(map: &serde_json::Map<String, Value>, key: &str) -> Result<Option<String>, ApiError> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ApiError::bad_request(format!("{key} must be a string"))),
    }
}

/// Phase given as `"phase2"`, `"schema_plus_context"`, `"2"` or `2`.
fn phase_field(map: &serde_json::Map<String, Value>) -> Option<Result<Phase, String>> {
    let raw = match map.get("phase")? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    };
    Some(raw.parse::<Phase>().map_err(|e| e.to_string()))
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let map = parse_object(&body)?;
    let nlq = optional_string(&map, "nlq")?.unwrap_or_default();
    if nlq.trim().is_empty() {
        return Err(ApiError::bad_request("nlq must be a non-empty string"));
    }
    let phase = match phase_field(&map) {
        Some(Ok(p)) => p,
        Some(Err(message)) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_phase", message)),
        None => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_phase", "phase is required")),
    };
    let time_to_create = match map.get("time_to_create") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| ApiError::bad_request("time_to_create must be a non-negative integer"))?,
        ),
    };
    let request = QueryRequest { nlq, phase, time_to_create, nlq_id: optional_string(&map, "nlq_id")? };

    let worker = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let env = &worker.environments[&request.phase];
        worker.workbench.answer_nlq(&request, env)
    })
    .await
    .map_err(|e| ApiError::internal(format!("query task failed: {e}")))?;

    match outcome {
        Ok(result) => Ok(Json(result).into_response()),
        Err(e) => {
            tracing::warn!(stage = %e.stage, error = %e.source, "query failed");
            Err(e.into())
        }
    }
}

#[derive(Debug, Serialize)]
struct FeedbackStored {
    record_id: String,
    record: LabelRecord,
}

async fn feedback(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let map = parse_object(&body)?;
    let id = match (optional_string(&map, "id")?, optional_string(&map, "nlq")?) {
        (Some(id), _) if !id.trim().is_empty() => id,
        (_, Some(nlq)) if !nlq.trim().is_empty() => nlq_text_id(&nlq),
        _ => return Err(ApiError::bad_request("one of id or nlq is required")),
    };
    let phase = match phase_field(&map) {
        Some(Ok(p)) => p,
        Some(Err(message)) => return Err(ApiError::bad_request(message)),
        None => return Err(ApiError::bad_request("phase is required")),
    };
    let outcome: Outcome = optional_string(&map, "outcome")?
        .ok_or_else(|| ApiError::bad_request("outcome is required"))?
        .parse()
        .map_err(|e: ctxsql_core::eval::UnknownOutcome| ApiError::bad_request(e.to_string()))?;
    let labeler = optional_string(&map, "labeler")?
        .filter(|l| !l.trim().is_empty())
        .ok_or_else(|| ApiError::bad_request("labeler is required"))?;
    let timestamp_ms = match map.get("timestamp_ms") {
        None | Some(Value::Null) => SystemClock.now_ms(),
        Some(v) => v.as_u64().ok_or_else(|| ApiError::bad_request("timestamp_ms must be a non-negative integer"))?,
    };
    let record = LabelRecord {
        id,
        phase,
        outcome,
        rationale: optional_string(&map, "rationale")?.filter(|r| !r.trim().is_empty()),
        labeler,
        timestamp_ms: Some(timestamp_ms),
    };

    let worker = state.clone();
    let stored = record.clone();
    let record_id = tokio::task::spawn_blocking(move || worker.feedback.append(&stored))
        .await
        .map_err(|e| ApiError::internal(format!("feedback task failed: {e}")))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(FeedbackStored { record_id, record })).into_response())
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let wb = &state.workbench;
    let phases: Vec<Value> = state
        .environments
        .values()
        .map(|env| {
            json!({
                "phase": env.phase,
                "title": env.phase.title(),
                "corpus_hash": env.corpus_hash(),
                "index_size": env.index.len(),
                "documents": env.documents,
                "tables": env.catalog.tables.len(),
            })
        })
        .collect();
    Json(json!({
        "status": "ok",
        "provider": { "mode": wb.completer.mode(), "id": wb.completer.id() },
        "embedder": wb.embedder.id(),
        "top_k": wb.top_k,
        "band_thresholds": wb.band_thresholds,
        "phases": phases,
    }))
}
