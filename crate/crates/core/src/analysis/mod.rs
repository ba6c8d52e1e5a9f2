//! Post-hoc analysis of generated explanations: sample filters, language
//! statistics, suggestion-influence similarity, and human-rating agreement.

mod alpha;
mod filters;
mod langid;
mod ratings;
mod similarity;
mod tokenize;

pub use alpha::{krippendorff_alpha, pooled_alpha, AlphaLevel, AgreementReport};
pub use filters::{passes_filters, CriterionResult, FilterCriteria, FilterVerdict};
pub use langid::{
    detect_language, format_language_table, language_distribution, DetectedLanguage, LanguageDistribution,
    LanguageProfile, ProfileDetector, BUNDLED_PROFILES, PROFILE_SIZE,
};
pub use ratings::{aggregate_ratings, format_rating_table, load_ratings, parse_ratings, Dimension, RatingMatrix};
pub use similarity::{format_similarity_table, similarity_by_group, similarity_report, SimilarityReport};
pub use tokenize::{bigram_ratio, digit_ratio, token_count, tokenize};

use thiserror::Error;

use crate::metrics::{GroupKey, MetricsError};
use crate::refinery::PipelineMode;

/// (generator, critic) labels for a report row. Self-refinement rows put
/// everything in the first label; ablation rows tag the critic.
pub(crate) fn row_label(key: &GroupKey) -> (String, String) {
    let g = key.generator_id.clone();
    match key.mode {
        PipelineMode::SelfRefine => (format!("Self-Refine ({g})"), String::new()),
        PipelineMode::CrossRefine => (g, key.critic_id.clone()),
        PipelineMode::AblateFeedbackOnly => (g, format!("{} (feedback only)", key.critic_id)),
        PipelineMode::AblateSuggestionOnly => (g, format!("{} (suggestion only)", key.critic_id)),
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} tokens, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("text has no tokens")]
    EmptyText,
    #[error("empty input list")]
    EmptyList,
    #[error("trace `{0}` lacks a refined explanation, initial explanation or suggestion")]
    MissingStage(String),
    #[error("no ratings present for dimension {0}")]
    AllMissing(Dimension),
    #[error("degenerate rating data: {0}")]
    DegenerateData(String),
    #[error("invalid rating: {0}")]
    InvalidRating(String),
    #[error("invalid filter criteria: {0}")]
    InvalidCriteria(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
