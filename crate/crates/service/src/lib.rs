//! HTTP front end for the workbench.
//!
//! Routes:
//! - `POST /api/query` answers `{nlq, phase}` and returns the pipeline
//!   result, or a structured `{"error": ...}` body (400 empty nlq,
//!   422 unknown phase, 502 provider failure).
//! - `POST /api/feedback` appends a label record to the feedback log and
//!   returns its id (201), or 400 for a malformed record.
//! - `GET /api/health` lists the phase corpora, index sizes and provider.
//!
//! There is no authentication; put the service behind whatever access
//! control the deployment needs.

pub mod api;
pub mod config;
pub mod feedback;
pub mod state;

use std::sync::Arc;

use thiserror::Error;

pub use api::{router, ApiError};
pub use config::ServiceConfig;
pub use feedback::FeedbackLog;
pub use state::{load_workbench, AppState};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] ctxsql_core::pipeline::CorpusError),
    #[error("provider: {0}")]
    Provider(String),
    #[error("{0}")]
    Io(String),
}

/// Build the state (failing fast on missing corpora) and serve until the
/// listener closes.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = {
        let config = config.clone();
        tokio::task::spawn_blocking(move || AppState::from_config(&config))
            .await
            .map_err(|e| ServiceError::Io(e.to_string()))??
    };
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|e| ServiceError::Io(format!("bind {}: {e}", config.listen)))?;
    tracing::info!(address = %config.listen, mode = state.workbench.completer.mode().label(), "listening");
    axum::serve(listener, router(Arc::new(state))).await.map_err(|e| ServiceError::Io(e.to_string()))
}
