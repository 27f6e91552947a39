//! SQL analysis: tokenizing, structural parsing of SELECT statements,
//! complexity features and scores, percentile banding, and reference checks
//! against a [`SchemaCatalog`](crate::schema::SchemaCatalog).

mod bands;
mod features;
pub mod parse;
pub mod token;
mod validate;

use thiserror::Error;

pub use bands::{categorize_scores, five_number_summary, nearest_rank, Band, BandThresholds, Banding, FiveNumberSummary};
pub use features::{complexity_score, extract_features, ComplexityInput, ComplexityScore, SqlAnalysis, SqlFeatures};
pub use token::{tokenize, Position, Token, TokenKind};
pub use validate::{validate_against_schema, UnknownColumn, ValidationReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SqlError {
    #[error("empty SQL text")]
    Empty,
    #[error("unterminated string literal starting at {0}")]
    UnterminatedString(Position),
    #[error("unterminated block comment starting at {0}")]
    UnterminatedComment(Position),
    #[error("unterminated quoted identifier starting at {0}")]
    UnterminatedIdentifier(Position),
    #[error("unexpected character {ch:?} at {at}")]
    UnexpectedChar { ch: char, at: Position },
    #[error("unbalanced parenthesis at {0}")]
    Unbalanced(Position),
    #[error("not a SELECT statement: starts with {found:?} at {at}")]
    NotSelect { found: String, at: Position },
    #[error("syntax error at {at}: {message}")]
    Syntax { message: String, at: Position },
}
