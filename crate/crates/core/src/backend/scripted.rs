//! Test doubles: scripted replay, closures, and a recorder that turns any
//! backend run into a replayable script.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AttemptError, BackendError, ChatBackend, FinishReason, GenerationParams, RawCompletion};

/// Hex SHA-256 of the prompt bytes.
pub fn fingerprint(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Number of transient failures before the response is served.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fail_times: u32,
    pub response: String,
    #[serde(default = "stop", skip_serializing_if = "is_stop")]
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "is_zero_u64")]
    pub latency_ms: u64,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}
fn is_zero_u64(v: &u64) -> bool {
    *v == 0
}
fn stop() -> FinishReason {
    FinishReason::Stop
}
fn is_stop(r: &FinishReason) -> bool {
    *r == FinishReason::Stop
}

impl ScriptEntry {
    pub fn respond(response: impl Into<String>) -> Self {
        Self {
            fail_times: 0,
            response: response.into(),
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
        }
    }
}

/// On-disk script: fingerprint to entry, ordered for stable diffs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub entries: BTreeMap<String, ScriptEntry>,
}

impl Script {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let io = |e: String| BackendError::Io {
            path: path.display().to_string(),
            message: e,
        };
        let text = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| io(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BackendError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("script serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| BackendError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn insert_prompt(&mut self, prompt: &str, entry: ScriptEntry) {
        self.entries.insert(fingerprint(prompt), entry);
    }

    pub fn merge(&mut self, other: Script) {
        self.entries.extend(other.entries);
    }
}

/// Serves responses from a [`Script`]. Unknown prompts are a hard
/// [`BackendError::ScriptMiss`], never a fallback.
#[derive(Debug)]
pub struct ScriptedBackend {
    model_id: String,
    script: Script,
    calls: Mutex<HashMap<String, u32>>,
}

impl ScriptedBackend {
    pub fn new(model_id: impl Into<String>, script: Script) -> Result<Self, BackendError> {
        if script.entries.is_empty() {
            return Err(BackendError::EmptyScript);
        }
        Ok(Self {
            model_id: model_id.into(),
            script,
            calls: Mutex::new(HashMap::new()),
        })
    }

    pub fn builder(model_id: impl Into<String>) -> ScriptBuilder {
        ScriptBuilder {
            model_id: model_id.into(),
            script: Script::default(),
        }
    }

    /// Calls made so far for a prompt, successful or not.
    pub fn calls_for(&self, prompt: &str) -> u32 {
        self.calls
            .lock()
            .unwrap()
            .get(&fingerprint(prompt))
            .copied()
            .unwrap_or(0)
    }

    pub fn total_calls(&self) -> u32 {
        self.calls.lock().unwrap().values().sum()
    }
}

impl ChatBackend for ScriptedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn attempt(&self, prompt: &str, _params: &GenerationParams) -> Result<RawCompletion, AttemptError> {
        let fp = fingerprint(prompt);
        let Some(entry) = self.script.entries.get(&fp) else {
            return Err(AttemptError::Fatal(BackendError::ScriptMiss(fp)));
        };
        let call = {
            let mut calls = self.calls.lock().unwrap();
            let n = calls.entry(fp).or_insert(0);
            *n += 1;
            *n
        };
        if call <= entry.fail_times {
            return Err(AttemptError::Transient(format!("scripted failure {call}/{}", entry.fail_times)));
        }
        Ok(RawCompletion {
            text: entry.response.clone(),
            finish_reason: entry.finish_reason,
            latency_ms: Some(entry.latency_ms),
        })
    }
}

pub struct ScriptBuilder {
    model_id: String,
    script: Script,
}

impl ScriptBuilder {
    pub fn respond(mut self, prompt: &str, response: impl Into<String>) -> Self {
        self.script.insert_prompt(prompt, ScriptEntry::respond(response));
        self
    }

    pub fn fail_then_respond(mut self, prompt: &str, fail_times: u32, response: impl Into<String>) -> Self {
        self.script.insert_prompt(
            prompt,
            ScriptEntry {
                fail_times,
                ..ScriptEntry::respond(response)
            },
        );
        self
    }

    pub fn build(self) -> Result<ScriptedBackend, BackendError> {
        ScriptedBackend::new(self.model_id, self.script)
    }
}

type Responder = dyn Fn(&str) -> Result<String, AttemptError> + Send + Sync;

/// Backend driven by a closure over the prompt text. Reported latency is 0.
pub struct FnBackend {
    model_id: String,
    responder: Box<Responder>,
}

impl FnBackend {
    pub fn new<F>(model_id: impl Into<String>, responder: F) -> Self
    where
        F: Fn(&str) -> Result<String, AttemptError> + Send + Sync + 'static,
    {
        Self {
            model_id: model_id.into(),
            responder: Box::new(responder),
        }
    }
}

impl ChatBackend for FnBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn attempt(&self, prompt: &str, _params: &GenerationParams) -> Result<RawCompletion, AttemptError> {
        (self.responder)(prompt).map(|text| RawCompletion {
            text,
            finish_reason: FinishReason::Stop,
            latency_ms: Some(0),
        })
    }
}

/// Wraps a backend and records every successful response so the run can be
/// replayed with a [`ScriptedBackend`].
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<Script>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            recorded: Mutex::new(Script::default()),
        }
    }

    pub fn script(&self) -> Script {
        self.recorded.lock().unwrap().clone()
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn attempt(&self, prompt: &str, params: &GenerationParams) -> Result<RawCompletion, AttemptError> {
        let result = self.inner.attempt(prompt, params)?;
        let entry = ScriptEntry {
            fail_times: 0,
            response: result.text.clone(),
            finish_reason: result.finish_reason,
            latency_ms: result.latency_ms.unwrap_or(0),
        };
        self.recorded.lock().unwrap().insert_prompt(prompt, entry);
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_sha256_hex() {
        assert_eq!(
            fingerprint(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn empty_script_rejected() {
        assert_eq!(
            ScriptedBackend::new("m", Script::default()).unwrap_err(),
            BackendError::EmptyScript
        );
    }

    #[test]
    fn unknown_fingerprint_misses() {
        let b = ScriptedBackend::builder("m").respond("h1", "x").build().unwrap();
        let params = GenerationParams::default();
        assert_eq!(b.attempt("h1", &params).unwrap().text, "x");
        assert!(matches!(
            b.attempt("h9", &params),
            Err(AttemptError::Fatal(BackendError::ScriptMiss(_)))
        ));
    }

    #[test]
    fn failures_are_reproducible() {
        let params = GenerationParams::default();
        for _ in 0..2 {
            let b = ScriptedBackend::builder("m").fail_then_respond("p", 2, "y").build().unwrap();
            assert!(matches!(b.attempt("p", &params), Err(AttemptError::Transient(_))));
            assert!(matches!(b.attempt("p", &params), Err(AttemptError::Transient(_))));
            assert_eq!(b.attempt("p", &params).unwrap().text, "y");
            assert_eq!(b.calls_for("p"), 3);
        }
    }

    #[test]
    fn record_then_replay() {
        let rec = RecordingBackend::new(FnBackend::new("m", |p| Ok(format!("echo {}", p.len()))));
        let params = GenerationParams::default();
        rec.attempt("abc", &params).unwrap();
        rec.attempt("abcdef", &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        rec.script().save(&path).unwrap();
        let replay = ScriptedBackend::new("m", Script::load(&path).unwrap()).unwrap();
        assert_eq!(replay.attempt("abc", &params).unwrap().text, "echo 3");
        assert_eq!(replay.attempt("abcdef", &params).unwrap().text, "echo 6");
    }
}
