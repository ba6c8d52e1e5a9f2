use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineMode, QualityVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRoles {
    pub generator: String,
    pub critic: String,
}

/// One feedback/refinement round of self-refinement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfRefineRound {
    pub feedback: String,
    pub needs_improvement: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

/// Everything one instance's run produced. Prompts, model ids and timings
/// are keyed by stage name (`generate`, `assess`, `feedback`, `suggest`,
/// `refine`; self-refinement uses `self_refine_feedback.N` and
/// `self_refine_refine.N`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub instance_id: String,
    pub dataset_id: String,
    pub mode: PipelineMode,
    pub roles: TraceRoles,
    pub input_text: String,
    pub initial: String,
    pub verdict: Option<QualityVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<String>,
    #[serde(rename = "final")]
    pub final_explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<SelfRefineRound>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced_refine: bool,
    pub prompts: BTreeMap<String, String>,
    pub models: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<StageFailure>,
}

impl PipelineTrace {
    pub fn new(instance_id: &str, dataset_id: &str, mode: PipelineMode, roles: TraceRoles) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            dataset_id: dataset_id.to_string(),
            mode,
            roles,
            input_text: String::new(),
            initial: String::new(),
            verdict: None,
            feedback: None,
            suggestion: None,
            refined: None,
            final_explanation: String::new(),
            prediction: None,
            rounds: Vec::new(),
            forced_refine: false,
            prompts: BTreeMap::new(),
            models: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
            error: None,
        }
    }

    /// A stub recording that the instance failed at `stage`. No partial
    /// artifacts are kept.
    pub fn failed(
        instance_id: &str,
        dataset_id: &str,
        mode: PipelineMode,
        roles: TraceRoles,
        stage: &str,
        message: String,
    ) -> Self {
        let mut trace = Self::new(instance_id, dataset_id, mode, roles);
        trace.error = Some(StageFailure {
            stage: stage.to_string(),
            message,
        });
        trace
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn refinement_ran(&self) -> bool {
        self.refined.is_some()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

/// Single appender for a trace JSONL file. Each line is flushed on write so
/// an interrupted run keeps every completed trace.
pub struct TraceWriter {
    out: BufWriter<File>,
    written: usize,
}

impl TraceWriter {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
            written: 0,
        })
    }

    pub fn append(&mut self, trace: &PipelineTrace) -> io::Result<()> {
        self.out.write_all(trace.to_json_line().as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }
}

pub fn read_traces(path: impl AsRef<Path>) -> io::Result<Vec<PipelineTrace>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trace = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(trace);
    }
    Ok(out)
}
