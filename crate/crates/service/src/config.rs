use std::path::{Path, PathBuf};

use ctxsql_core::context::{DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP, DEFAULT_TOP_K};
use ctxsql_core::llm::ProviderMode;
use serde::Deserialize;

use crate::ServiceError;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

/// Service settings read from a TOML file. Relative paths are resolved
/// against the directory holding the file. Credentials for remote mode come
/// from the environment, never from this file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    pub corpus: CorpusConfig,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    pub labels: LabelsConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub banding: BandingConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub schema: PathBuf,
    /// JSON array of table names kept in the narrowed catalog.
    pub narrowed_tables: PathBuf,
    pub context: PathBuf,
    /// Directory of prebuilt `phaseN.index.json` sidecars. When absent the
    /// indices are built at startup.
    #[serde(default)]
    pub index_dir: Option<PathBuf>,
    #[serde(default = "default_chunk_size")]
    pub chunk_size: usize,
    #[serde(default = "default_overlap")]
    pub overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    #[serde(default)]
    pub replay_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Local,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub kind: EmbedderKind,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsConfig {
    /// Append-only JSON Lines log of feedback records.
    pub feedback_log: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionConfig {
    #[serde(default)]
    pub refusal_patterns: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandingConfig {
    /// Dataset whose reference SQL fixes the band thresholds reported with
    /// each answer.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
}

fn default_listen() -> String {
    DEFAULT_LISTEN.to_string()
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}

fn default_overlap() -> usize {
    DEFAULT_OVERLAP
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&source, base)
    }

    pub fn parse(source: &str, base_dir: &Path) -> Result<Self, ServiceError> {
        let mut config: ServiceConfig = toml::from_str(source).map_err(|e| ServiceError::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.check()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.schema);
        fix(&mut self.corpus.narrowed_tables);
        fix(&mut self.corpus.context);
        fix(&mut self.labels.feedback_log);
        for p in [
            self.corpus.index_dir.as_mut(),
            self.provider.replay_file.as_mut(),
            self.extraction.refusal_patterns.as_mut(),
            self.banding.dataset.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    fn check(&self) -> Result<(), ServiceError> {
        if self.top_k == 0 {
            return Err(ServiceError::Config("top_k must be at least 1".into()));
        }
        if self.corpus.overlap >= self.corpus.chunk_size {
            return Err(ServiceError::Config("corpus.overlap must be smaller than corpus.chunk_size".into()));
        }
        match (self.provider.mode, &self.provider.replay_file) {
            (ProviderMode::Replay, None) => {
                Err(ServiceError::Config("provider.replay_file is required in replay mode".into()))
            }
            (ProviderMode::Remote, Some(_)) => {
                Err(ServiceError::Config("provider.replay_file is only valid in replay mode".into()))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [corpus]
        schema = "schema.json"
        narrowed_tables = "keep.json"
        context = "/abs/context.md"

        [provider]
        mode = "replay"
        replay_file = "replay.json"

        [labels]
        feedback_log = "fb.jsonl"
    "#;

    #[test]
    fn defaults_and_relative_paths() {
        let c = ServiceConfig::parse(MINIMAL, Path::new("/etc/ctxsql")).unwrap();
        assert_eq!(c.listen, DEFAULT_LISTEN);
        assert_eq!(c.top_k, DEFAULT_TOP_K);
        assert_eq!(c.corpus.schema, PathBuf::from("/etc/ctxsql/schema.json"));
        assert_eq!(c.corpus.context, PathBuf::from("/abs/context.md"));
        assert_eq!(c.provider.replay_file, Some(PathBuf::from("/etc/ctxsql/replay.json")));
        assert_eq!(c.embedding.kind, EmbedderKind::Local);
    }

    #[test]
    fn provider_mode_must_be_consistent() {
        let no_file = MINIMAL.replace("replay_file = \"replay.json\"", "");
        assert!(matches!(ServiceConfig::parse(&no_file, Path::new(".")), Err(ServiceError::Config(_))));
        let remote_with_file = MINIMAL.replace("mode = \"replay\"", "mode = \"remote\"");
        assert!(ServiceConfig::parse(&remote_with_file, Path::new(".")).is_err());
        let both = MINIMAL.replace("mode = \"replay\"", "mode = [\"replay\", \"remote\"]");
        assert!(ServiceConfig::parse(&both, Path::new(".")).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let extra = format!("{MINIMAL}\n[cache]\nenabled = true\n");
        assert!(ServiceConfig::parse(&extra, Path::new(".")).is_err());
    }
}
