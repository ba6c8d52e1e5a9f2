//! Scoring: in-process embedding similarity plus a client for the external
//! reference-metric service, and aggregation into per-configuration reports.

mod embed;
mod report;
mod scorer;

pub use embed::{cosine_similarity, Embedder, EmbeddingVector, HashingEmbedder};
pub use report::{aggregate_scores, format_score_table, GroupKey, ScoreReport};
pub use scorer::{check_response, score_batch, HttpScorer, ScoreRequest, ScoreResponse, Scorer, TIGERSCORE};

use thiserror::Error;

use crate::corpus::Language;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("cannot aggregate an empty score list")]
    EmptyList,
    #[error("{field} has {got} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("metric `{metric_id}` does not support language `{language}`: {detail}")]
    Unsupported {
        metric_id: String,
        language: Language,
        detail: String,
    },
}
