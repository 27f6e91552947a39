//! Context-aware text-to-SQL workbench.
//!
//! Questions are answered by retrieving chunks of a phase-specific corpus
//! (schema text, optionally a business context document), prompting a chat
//! model, and checking the SQL it returns: references are validated against
//! a [`SchemaCatalog`] and complexity is scored from structural counts.
//! The [`eval`] module runs whole datasets per phase and builds outcome
//! tables by complexity band with Fisher exact tests.
//!
//! Numeric code is generic: embeddings over [`VectorScalar`] (`f32`/`f64`)
//! and exact tests over [`Probability`] (`f32`, `f64` or [`BigRational`]).
//! The aliases below fix the types used by the service and CLI.

pub mod context;
pub mod eval;
pub mod llm;
pub mod phase;
pub mod pipeline;
pub mod remote;
pub mod scalar;
pub mod schema;
pub mod sql;
pub mod util;

pub use num_rational::BigRational;

pub use phase::Phase;
pub use scalar::{Probability, VectorScalar};
pub use schema::SchemaCatalog;

/// Element type of embeddings in the default configuration.
pub type Scalar = f64;
pub type Embedding = context::EmbeddingVector<Scalar>;
pub type Index = context::VectorIndex<Scalar>;
pub type Environment = pipeline::PhaseEnvironment<Scalar>;
pub type Environments = pipeline::Environments<Scalar>;
pub type DefaultWorkbench = pipeline::Workbench<Scalar>;
/// Exact rational probabilities for checking p-values digit for digit.
pub type ExactProbability = BigRational;
