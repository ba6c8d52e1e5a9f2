//! OpenAI-style chat-completion client.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AttemptError, BackendConfig, BackendError, ChatBackend, FinishReason, GenerationParams, RawCompletion};

/// Environment variable holding the bearer token, if the service needs one.
pub const API_KEY_ENV: &str = "CROSSREFINE_API_KEY";

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    max_tokens: usize,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap();
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap();
        }
        *active += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    in_flight: InFlight,
}

impl HttpBackend {
    /// Reads the API key from [`API_KEY_ENV`].
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        Self::with_api_key(config, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_api_key(config: BackendConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        config.validate()?;
        if config.endpoint.is_empty() {
            return Err(BackendError::InvalidConfig(format!(
                "backend `{}` has no endpoint",
                config.model_id
            )));
        }
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            in_flight: InFlight {
                limit: config.max_in_flight,
                active: Mutex::new(0),
                freed: Condvar::new(),
            },
            agent: agent_config.into(),
            api_key,
            config,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }
}

fn finish_reason(raw: Option<&str>) -> FinishReason {
    match raw {
        None | Some("stop") | Some("eos") | Some("end_turn") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    }
}

impl ChatBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn attempt(&self, prompt: &str, params: &GenerationParams) -> Result<RawCompletion, AttemptError> {
        let body = ChatRequest {
            model: &self.config.model_id,
            messages: [Message {
                role: "user",
                content: prompt,
            }],
            temperature: params.temperature,
            max_tokens: params.max_new_tokens,
            stop: &params.stop_sequences,
            seed: params.seed,
        };
        let _slot = self.in_flight.acquire();
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(AttemptError::Transient(format!("status {status}: {text}")));
        }
        if status != 200 {
            return Err(AttemptError::Fatal(BackendError::Http { status, body: text }));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(BackendError::Protocol(e.to_string())))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| AttemptError::Fatal(BackendError::Protocol("no choices".into())))?;
        Ok(RawCompletion {
            text: choice.message.content.unwrap_or_default(),
            finish_reason: finish_reason(choice.finish_reason.as_deref()),
            latency_ms: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_shape() {
        let stop = vec!["\n\n".to_string()];
        let body = ChatRequest {
            model: "qwen2-7b",
            messages: [Message {
                role: "user",
                content: "hi",
            }],
            temperature: 0.0,
            max_tokens: 16,
            stop: &stop,
            seed: Some(1),
        };
        assert_eq!(
            serde_json::to_value(&body).unwrap(),
            serde_json::json!({
                "model": "qwen2-7b",
                "messages": [{"role": "user", "content": "hi"}],
                "temperature": 0.0,
                "max_tokens": 16,
                "stop": ["\n\n"],
                "seed": 1
            })
        );
    }

    #[test]
    fn missing_endpoint_is_config_error() {
        assert!(matches!(
            HttpBackend::with_api_key(BackendConfig::new("m"), None).unwrap_err(),
            BackendError::InvalidConfig(_)
        ));
    }

    #[test]
    fn finish_reasons() {
        assert_eq!(finish_reason(Some("length")), FinishReason::Length);
        assert_eq!(finish_reason(None), FinishReason::Stop);
        assert_eq!(finish_reason(Some("content_filter")), FinishReason::Error);
    }
}
