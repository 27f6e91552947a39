use std::sync::Arc;

use ctxsql_core::context::{ChunkParams, EmbeddingProvider, RemoteEmbedder, TrigramEmbedder};
use ctxsql_core::eval::Dataset;
use ctxsql_core::llm::{CompletionProvider, ProviderMode, RefusalPatterns, RemoteChatProvider, ReplayProvider};
use ctxsql_core::pipeline::{build_environments, CorpusSources, PhaseEnvironment};
use ctxsql_core::{DefaultWorkbench, Environments, Phase, Scalar};

use crate::config::{EmbedderKind, ServiceConfig};
use crate::feedback::FeedbackLog;
use crate::ServiceError;

/// Everything the handlers share. Corpora and indices are read-only after
/// construction; only the feedback log is written.
pub struct AppState {
    pub environments: Environments,
    pub workbench: DefaultWorkbench,
    pub feedback: FeedbackLog,
}

pub fn make_embedder(kind: EmbedderKind) -> Result<Arc<dyn EmbeddingProvider<Scalar>>, ServiceError> {
    Ok(match kind {
        EmbedderKind::Local => Arc::new(TrigramEmbedder::default()),
        EmbedderKind::Remote => {
            Arc::new(RemoteEmbedder::from_env().map_err(|e| ServiceError::Provider(e.to_string()))?)
        }
    })
}

/// Load and index the corpora and open the provider. Missing or stale
/// inputs are errors here rather than at request time.
pub fn load_workbench(config: &ServiceConfig) -> Result<(Environments, DefaultWorkbench), ServiceError> {
    let c = &config.corpus;
    let sources = CorpusSources::load(&c.schema, &c.narrowed_tables, &c.context)?;
    let params = ChunkParams::new(c.chunk_size, c.overlap).map_err(|e| ServiceError::Config(e.to_string()))?;
    let embedder = make_embedder(config.embedding.kind)?;

    let environments = match &c.index_dir {
        None => build_environments(&sources, params, embedder.as_ref())?,
        Some(dir) => {
            let mut envs = Environments::new();
            for phase in Phase::ALL {
                let env = PhaseEnvironment::load(&PhaseEnvironment::<Scalar>::sidecar_path(dir, phase))?;
                env.ensure_fresh(&sources, &embedder.id())?;
                envs.insert(phase, env);
            }
            envs
        }
    };

    let completer: Arc<dyn CompletionProvider> = match config.provider.mode {
        ProviderMode::Replay => {
            let path = config
                .provider
                .replay_file
                .as_ref()
                .expect("checked when the config was parsed");
            Arc::new(ReplayProvider::load_file(path).map_err(|e| ServiceError::Provider(e.to_string()))?)
        }
        ProviderMode::Remote => {
            Arc::new(RemoteChatProvider::from_env().map_err(|e| ServiceError::Provider(e.to_string()))?)
        }
    };

    let mut workbench = DefaultWorkbench::new(embedder, completer);
    workbench.top_k = config.top_k;
    if let Some(path) = &config.extraction.refusal_patterns {
        workbench.refusal_patterns =
            RefusalPatterns::load_file(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &config.banding.dataset {
        let dataset = Dataset::load_file(path).map_err(|e| ServiceError::Config(e.to_string()))?;
        workbench.band_thresholds = dataset.reference_thresholds();
    }
    Ok((environments, workbench))
}

impl AppState {
    /// Everything in [`load_workbench`] plus the feedback log, so a bad
    /// configuration stops the service before the listener is bound.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let (environments, workbench) = load_workbench(config)?;
        let feedback = FeedbackLog::open(&config.labels.feedback_log)?;
        Ok(AppState {
            environments,
            workbench,
            feedback,
        })
    }
}
