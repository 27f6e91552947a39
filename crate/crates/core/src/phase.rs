use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Experimental condition a query is answered under.
///
/// Each phase determines which corpus retrieval draws from and which catalog
/// generated SQL is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    /// Full schema rendering only.
    #[serde(rename = "phase1", alias = "schema_only", alias = "1")]
    SchemaOnly,
    /// Full schema plus the business context document.
    #[serde(rename = "phase2", alias = "schema_plus_context", alias = "2")]
    SchemaPlusContext,
    /// Narrowed schema rendering only.
    #[serde(rename = "phase3", alias = "narrowed_schema", alias = "3")]
    NarrowedSchema,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::SchemaOnly, Phase::SchemaPlusContext, Phase::NarrowedSchema];

    /// Short identifier used in replay keys, label files and run file names.
    pub fn id(self) -> &'static str {
        match self {
            Phase::SchemaOnly => "phase1",
            Phase::SchemaPlusContext => "phase2",
            Phase::NarrowedSchema => "phase3",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::SchemaOnly => "schema_only",
            Phase::SchemaPlusContext => "schema_plus_context",
            Phase::NarrowedSchema => "narrowed_schema",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Phase::SchemaOnly => "Phase 1: database schema only",
            Phase::SchemaPlusContext => "Phase 2: schema with business context document",
            Phase::NarrowedSchema => "Phase 3: narrowed schema",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown phase {0:?} (expected phase1|phase2|phase3 or schema_only|schema_plus_context|narrowed_schema)")]
pub struct UnknownPhase(pub String);

impl FromStr for Phase {
    type Err = UnknownPhase;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "phase1" | "schema_only" => Ok(Phase::SchemaOnly),
            "2" | "phase2" | "schema_plus_context" => Ok(Phase::SchemaPlusContext),
            "3" | "phase3" | "narrowed_schema" => Ok(Phase::NarrowedSchema),
            _ => Err(UnknownPhase(s.to_string())),
        }
    }
}
