//! The refinement pipelines.
//!
//! Cross-refinement runs five stages for one instance:
//!
//! 1. the generator writes an initial explanation from the input;
//! 2. the critic judges whether it needs improvement;
//! 3. the critic writes feedback on it;
//! 4. the critic writes a suggested explanation from input, initial
//!    explanation and feedback;
//! 5. the generator refines its explanation using everything above.
//!
//! When the critic says no improvement is needed, stages 3-5 are skipped and
//! the initial explanation is final (unless `force_refine` is set). The
//! ablation modes drop either the feedback or the suggestion from stage 5.
//! Self-refinement is the single-model baseline that alternates self-feedback
//! and refinement.

mod pipeline;
mod trace;
mod verdict;

pub use pipeline::{PipelineConfig, Refinery, Role, SelfRefineConfig, StageOutput};
pub use trace::{read_traces, PipelineTrace, SelfRefineRound, StageFailure, TraceRoles, TraceWriter};
pub use verdict::{extract_prediction, parse_verdict, QualityVerdict, VERDICT_WINDOW};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::corpus::CorpusError;
use crate::prompting::PromptError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    CrossRefine,
    SelfRefine,
    AblateFeedbackOnly,
    AblateSuggestionOnly,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 4] = [
        PipelineMode::CrossRefine,
        PipelineMode::SelfRefine,
        PipelineMode::AblateFeedbackOnly,
        PipelineMode::AblateSuggestionOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::CrossRefine => "cross_refine",
            PipelineMode::SelfRefine => "self_refine",
            PipelineMode::AblateFeedbackOnly => "ablate_feedback_only",
            PipelineMode::AblateSuggestionOnly => "ablate_suggestion_only",
        }
    }

    /// Whether stage 5 sees the critic's feedback.
    pub fn uses_feedback(self) -> bool {
        matches!(self, PipelineMode::CrossRefine | PipelineMode::AblateFeedbackOnly)
    }

    /// Whether stage 5 sees the critic's suggested explanation.
    pub fn uses_suggestion(self) -> bool {
        matches!(self, PipelineMode::CrossRefine | PipelineMode::AblateSuggestionOnly)
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cross_refine" | "cross" => Ok(PipelineMode::CrossRefine),
            "self_refine" | "self" => Ok(PipelineMode::SelfRefine),
            "ablate_feedback_only" | "ablate-feedback" => Ok(PipelineMode::AblateFeedbackOnly),
            "ablate_suggestion_only" | "ablate-suggestion" => Ok(PipelineMode::AblateSuggestionOnly),
            other => Err(format!("unknown pipeline mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RefineryError {
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<RefineryError>,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no verdict marker in the first {VERDICT_WINDOW} tokens of {text:?}")]
    UnparseableVerdict { text: String },
    #[error("mode {mode} is missing a required component")]
    MissingComponent { mode: PipelineMode },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

impl RefineryError {
    pub fn at(stage: impl Into<String>, source: impl Into<RefineryError>) -> Self {
        RefineryError::Stage {
            stage: stage.into(),
            source: Box::new(source.into()),
        }
    }

    /// The innermost error, with stage annotations removed.
    pub fn root(&self) -> &RefineryError {
        match self {
            RefineryError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            RefineryError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}
