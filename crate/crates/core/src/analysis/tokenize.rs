//! Whitespace tokenizer shared by demonstration budgeting, the sample
//! filters and the hashing embedder.

use std::collections::HashSet;

use super::AnalysisError;

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '“' | '”' | '„' | '‚' | '‘' | '’' | '«' | '»' | '‹' | '›' | '–' | '—' | '…' | '¿' | '¡' | '·'
        )
}

/// Split on whitespace, then strip leading and trailing punctuation from
/// each piece. Pieces that are pure punctuation are dropped.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|piece| piece.trim_matches(is_punct))
        .filter(|t| !t.is_empty())
        .collect()
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Distinct bigram types over total bigrams.
pub fn bigram_ratio(text: &str) -> Result<f64, AnalysisError> {
    let tokens = tokenize(text);
    if tokens.len() < 2 {
        return Err(AnalysisError::TooShort {
            needed: 2,
            got: tokens.len(),
        });
    }
    let total = tokens.len() - 1;
    let distinct: HashSet<(&str, &str)> = tokens.windows(2).map(|w| (w[0], w[1])).collect();
    Ok(distinct.len() as f64 / total as f64)
}

/// Share of tokens made only of digits.
pub fn digit_ratio(text: &str) -> Result<f64, AnalysisError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(AnalysisError::EmptyText);
    }
    let digits = tokens
        .iter()
        .filter(|t| t.chars().all(|c| c.is_ascii_digit()))
        .count();
    Ok(digits as f64 / tokens.len() as f64)
}
