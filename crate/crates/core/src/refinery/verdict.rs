use serde::{Deserialize, Serialize};

use super::RefineryError;
use crate::analysis::tokenize;

/// The critic's judgement of an initial explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub needs_improvement: bool,
    pub raw_text: String,
}

/// Only this many leading tokens are searched for a verdict marker.
pub const VERDICT_WINDOW: usize = 10;

/// Read a yes/no verdict from free text.
///
/// The first marker among the leading [`VERDICT_WINDOW`] tokens decides:
/// `yes`/`ja` and "needs improvement" mean true; `no`/`nein`,
/// "no improvement" and "not need(s) improvement" mean false. Matching is
/// case-insensitive.
pub fn parse_verdict(text: &str) -> Result<bool, RefineryError> {
    let tokens: Vec<String> = tokenize(text)
        .into_iter()
        .take(VERDICT_WINDOW)
        .map(str::to_lowercase)
        .collect();
    for (i, token) in tokens.iter().enumerate() {
        match token.as_str() {
            "yes" | "ja" => return Ok(true),
            "no" | "nein" => return Ok(false),
            "need" | "needs" | "requires" | "require"
                if tokens.get(i + 1).is_some_and(|t| t == "improvement") =>
            {
                let negated = i > 0 && matches!(tokens[i - 1].as_str(), "not" | "doesn't" | "don't");
                return Ok(!negated);
            }
            _ => {}
        }
    }
    Err(RefineryError::UnparseableVerdict { text: text.to_string() })
}

/// The answer stated on the last line starting with `Answer:` or `Label:`.
pub fn extract_prediction(explanation: &str) -> Option<String> {
    explanation.lines().rev().find_map(|line| {
        let line = line.trim();
        ["Answer:", "Label:"].iter().find_map(|marker| {
            line.get(..marker.len())
                .filter(|head| head.eq_ignore_ascii_case(marker))
                .map(|_| line[marker.len()..].trim().to_string())
        })
    })
}
