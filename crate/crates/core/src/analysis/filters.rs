//! Quality filters for generated explanation samples.

use serde::{Deserialize, Serialize};

use super::tokenize::{bigram_ratio, digit_ratio, token_count};
use super::AnalysisError;
use crate::metrics::{cosine_similarity, Embedder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterCriteria {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub min_bigram_ratio: f64,
    pub max_digit_ratio: f64,
    pub min_question_similarity: f64,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        Self {
            min_tokens: 20,
            max_tokens: 50,
            min_bigram_ratio: 0.8,
            max_digit_ratio: 0.3,
            min_question_similarity: 0.6,
        }
    }
}

impl FilterCriteria {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(AnalysisError::InvalidCriteria(format!(
                "token bounds [{}, {}]",
                self.min_tokens, self.max_tokens
            )));
        }
        for (name, v) in [
            ("min_bigram_ratio", self.min_bigram_ratio),
            ("max_digit_ratio", self.max_digit_ratio),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AnalysisError::InvalidCriteria(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(-1.0..=1.0).contains(&self.min_question_similarity) {
            return Err(AnalysisError::InvalidCriteria(format!(
                "min_question_similarity = {} outside [-1, 1]",
                self.min_question_similarity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub passed: bool,
    pub length: CriterionResult,
    pub bigram_ratio: CriterionResult,
    pub digit_ratio: CriterionResult,
    pub question_similarity: CriterionResult,
}

impl FilterVerdict {
    /// Names of the criteria that failed, in check order.
    pub fn failures(&self) -> Vec<&'static str> {
        [
            ("length", self.length),
            ("bigram_ratio", self.bigram_ratio),
            ("digit_ratio", self.digit_ratio),
            ("question_similarity", self.question_similarity),
        ]
        .into_iter()
        .filter(|(_, r)| !r.passed)
        .map(|(name, _)| name)
        .collect()
    }
}

/// Check one generated explanation against all criteria. Every criterion is
/// evaluated even after an earlier one fails, so the detail is complete.
/// A one-token explanation has no bigrams and fails the diversity check
/// with value 0.
pub fn passes_filters(
    question: &str,
    explanation: &str,
    criteria: &FilterCriteria,
    embedder: &dyn Embedder,
) -> Result<FilterVerdict, AnalysisError> {
    criteria.validate()?;
    let n = token_count(explanation);
    if n == 0 || token_count(question) == 0 {
        return Err(AnalysisError::EmptyText);
    }
    let length = CriterionResult {
        value: n as f64,
        passed: (criteria.min_tokens..=criteria.max_tokens).contains(&n),
    };
    let bigram = match bigram_ratio(explanation) {
        Ok(v) => CriterionResult {
            value: v,
            passed: v >= criteria.min_bigram_ratio,
        },
        Err(AnalysisError::TooShort { .. }) => CriterionResult {
            value: 0.0,
            passed: false,
        },
        Err(e) => return Err(e),
    };
    let digits = digit_ratio(explanation)?;
    let digit = CriterionResult {
        value: digits,
        passed: digits <= criteria.max_digit_ratio,
    };
    let sim = cosine_similarity(&embedder.embed(question)?, &embedder.embed(explanation)?)?;
    let similarity = CriterionResult {
        value: sim,
        passed: sim >= criteria.min_question_similarity,
    };
    Ok(FilterVerdict {
        passed: length.passed && bigram.passed && digit.passed && similarity.passed,
        length,
        bigram_ratio: bigram,
        digit_ratio: digit,
        question_similarity: similarity,
    })
}
