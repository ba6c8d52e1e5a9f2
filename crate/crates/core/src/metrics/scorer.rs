//! Client side of the scorer wire protocol.
//!
//! Heavy reference metrics (BLEURT, BARTScore, TIGERScore, BERTScore,
//! MoverScore) live in a separate scoring service. This module validates
//! requests, ships them as JSON to `POST {endpoint}/score` and checks the
//! response before handing scores back in candidate order.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::Language;

pub const TIGERSCORE: &str = "tigerscore";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub metric_id: String,
    pub candidates: Vec<String>,
    pub references: Option<Vec<String>>,
    pub sources: Option<Vec<String>>,
    pub language: Language,
}

impl ScoreRequest {
    pub fn new(metric_id: impl Into<String>, candidates: Vec<String>) -> Self {
        Self {
            metric_id: metric_id.into(),
            candidates,
            references: None,
            sources: None,
            language: Language::En,
        }
    }

    pub fn with_references(mut self, references: Vec<String>) -> Self {
        self.references = Some(references);
        self
    }

    pub fn with_sources(mut self, sources: Vec<String>) -> Self {
        self.sources = Some(sources);
        self
    }

    pub fn with_language(mut self, language: Language) -> Self {
        self.language = language;
        self
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let n = self.candidates.len();
        for (field, list) in [("references", &self.references), ("sources", &self.sources)] {
            if let Some(list) = list {
                if list.len() != n {
                    return Err(MetricsError::LengthMismatch {
                        field,
                        expected: n,
                        got: list.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
    pub metric_id: String,
}

/// Checks a response against the request it answers: same metric, one score
/// per candidate, finite values, and the penalty bound for TIGERScore.
pub fn check_response(request: &ScoreRequest, response: &ScoreResponse) -> Result<(), MetricsError> {
    if response.metric_id != request.metric_id {
        return Err(MetricsError::Protocol(format!(
            "response is for metric `{}`, requested `{}`",
            response.metric_id, request.metric_id
        )));
    }
    if response.scores.len() != request.candidates.len() {
        return Err(MetricsError::Protocol(format!(
            "{} scores for {} candidates",
            response.scores.len(),
            request.candidates.len()
        )));
    }
    if let Some(i) = response.scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::Protocol(format!("score {i} is not finite")));
    }
    if request.metric_id == TIGERSCORE {
        if let Some((i, s)) = response.scores.iter().enumerate().find(|(_, s)| **s > 0.0) {
            return Err(MetricsError::Protocol(format!(
                "tigerscore {i} is {s}, penalties must be <= 0"
            )));
        }
    }
    Ok(())
}

/// Something that can turn a batch request into per-candidate scores.
pub trait Scorer: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<Vec<f64>, MetricsError>;
}

/// Scorer backed by the HTTP scoring service.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpScorer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_timeout(endpoint, Duration::from_secs(600))
    }

    pub fn with_timeout(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            agent: config.into(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Scorer for HttpScorer {
    fn score(&self, request: &ScoreRequest) -> Result<Vec<f64>, MetricsError> {
        score_batch(request, self)
    }
}

/// Validate, send and check one batch against the scoring service.
pub fn score_batch(request: &ScoreRequest, scorer: &HttpScorer) -> Result<Vec<f64>, MetricsError> {
    request.validate()?;
    let url = format!("{}/score", scorer.endpoint);
    let mut response = scorer
        .agent
        .post(&url)
        .send_json(request)
        .map_err(|e| MetricsError::ScorerUnavailable(e.to_string()))?;
    let status = response.status().as_u16();
    let body = response
        .body_mut()
        .read_to_string()
        .map_err(|e| MetricsError::ScorerUnavailable(e.to_string()))?;
    match status {
        200 => {}
        422 => {
            return Err(MetricsError::Unsupported {
                metric_id: request.metric_id.clone(),
                language: request.language,
                detail: body,
            })
        }
        400..=499 => return Err(MetricsError::Protocol(format!("status {status}: {body}"))),
        _ => return Err(MetricsError::ScorerUnavailable(format!("status {status}: {body}"))),
    }
    let parsed: ScoreResponse = serde_json::from_str(&body)
        .map_err(|e| MetricsError::Protocol(format!("bad response body: {e}")))?;
    check_response(request, &parsed)?;
    Ok(parsed.scores)
}
