//! Dataset loading for the three supported task kinds.
//!
//! Every dataset is a JSON-lines file with one instance per line. The field
//! set depends on the task kind:
//!
//! | kind           | fields                                                                   |
//! |----------------|--------------------------------------------------------------------------|
//! | `commonsense_qa` | `id, question, options[], gold_label, gold_explanation`                |
//! | `nli`          | `id, premise, hypothesis, gold_label, gold_explanation`                  |
//! | `fact_check`   | `id, claim, document_sentences[], relevance_mask[], gold_label, gold_explanation, language` |
//!
//! Bilingual fact-checking corpora may carry a parallel German field set
//! (`claim_de`, `document_sentences_de`, `gold_explanation_de`); the loader
//! picks one side with [`LoadOptions::language`].

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    CommonsenseQa,
    Nli,
    FactCheck,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::CommonsenseQa => "commonsense_qa",
            TaskKind::Nli => "nli",
            TaskKind::FactCheck => "fact_check",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "commonsense_qa" | "qa" | "ecqa" => Ok(TaskKind::CommonsenseQa),
            "nli" | "esnli" => Ok(TaskKind::Nli),
            "fact_check" | "healthfc" => Ok(TaskKind::FactCheck),
            other => Err(format!("unknown task kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    En,
    De,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::De => "de",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Language::En),
            "de" => Ok(Language::De),
            other => Err(format!("unknown language `{other}`")),
        }
    }
}

/// One dataset example. Optional fields are populated according to
/// `task_kind`; see [`TaskInstance::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub task_kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premise: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document_sentences: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_mask: Option<Vec<bool>>,
    pub gold_label: String,
    pub gold_explanation: String,
    #[serde(default)]
    pub language: Language,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {0}: malformed JSON object")]
    MalformedLine(usize),
    #[error("line {line}: missing field `{field}`")]
    MissingField { field: String, line: usize },
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("instance `{id}`: relevance mask has {mask} entries for {sentences} sentences")]
    LengthMismatch {
        id: String,
        mask: usize,
        sentences: usize,
    },
    #[error("relevance mask selects no sentence")]
    EmptyEvidence,
}

impl CorpusError {
    pub fn missing(field: &str, line: usize) -> Self {
        CorpusError::MissingField {
            field: field.to_string(),
            line,
        }
    }
}

/// Options that change how raw records are mapped onto [`TaskInstance`]s.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// For bilingual fact-checking data: which field set to read.
    pub language: Language,
}

impl TaskInstance {
    /// Check the per-kind required fields and the relevance mask length.
    /// `line` is only used for error reporting (0 when not loaded from disk).
    pub fn validate(&self, line: usize) -> Result<(), CorpusError> {
        let require = |present: bool, field: &str| {
            if present {
                Ok(())
            } else {
                Err(CorpusError::missing(field, line))
            }
        };
        match self.task_kind {
            TaskKind::CommonsenseQa => {
                require(self.question.is_some(), "question")?;
                require(self.options.is_some(), "options")?;
            }
            TaskKind::Nli => {
                require(self.premise.is_some(), "premise")?;
                require(self.hypothesis.is_some(), "hypothesis")?;
            }
            TaskKind::FactCheck => {
                require(self.claim.is_some(), "claim")?;
                require(self.document_sentences.is_some(), "document_sentences")?;
            }
        }
        if let (Some(sentences), Some(mask)) = (&self.document_sentences, &self.relevance_mask) {
            if sentences.len() != mask.len() {
                return Err(CorpusError::LengthMismatch {
                    id: self.id.clone(),
                    mask: mask.len(),
                    sentences: sentences.len(),
                });
            }
        }
        Ok(())
    }

    /// The evidence text shown to the models: the relevant sentences when a
    /// mask is present, else the whole document.
    pub fn evidence(&self) -> Result<Option<String>, CorpusError> {
        match (&self.document_sentences, &self.relevance_mask) {
            (Some(sentences), Some(mask)) => focus_document(sentences, mask).map(Some),
            (Some(sentences), None) => Ok(Some(sentences.join(" "))),
            _ => Ok(None),
        }
    }
}

/// Keep only the sentences whose mask entry is `true`, joined by one space.
pub fn focus_document<S: AsRef<str>>(sentences: &[S], mask: &[bool]) -> Result<String, CorpusError> {
    if sentences.len() != mask.len() {
        return Err(CorpusError::LengthMismatch {
            id: String::new(),
            mask: mask.len(),
            sentences: sentences.len(),
        });
    }
    let kept: Vec<&str> = sentences
        .iter()
        .zip(mask)
        .filter(|(_, keep)| **keep)
        .map(|(s, _)| s.as_ref())
        .collect();
    if kept.is_empty() {
        return Err(CorpusError::EmptyEvidence);
    }
    Ok(kept.join(" "))
}

/// Serialize an instance into the text placed in a prompt's `{input}` slot.
pub fn render_instance_input(instance: &TaskInstance) -> Result<String, CorpusError> {
    instance.validate(0)?;
    let mut out = String::new();
    match instance.task_kind {
        TaskKind::CommonsenseQa => {
            let question = instance.question.as_deref().unwrap_or_default();
            let options = instance.options.as_deref().unwrap_or_default();
            out.push_str("Question: ");
            out.push_str(question);
            out.push_str("\nOptions: ");
            out.push_str(&options.join(", "));
        }
        TaskKind::Nli => {
            out.push_str("Premise: ");
            out.push_str(instance.premise.as_deref().unwrap_or_default());
            out.push_str("\nHypothesis: ");
            out.push_str(instance.hypothesis.as_deref().unwrap_or_default());
        }
        TaskKind::FactCheck => {
            out.push_str("Claim: ");
            out.push_str(instance.claim.as_deref().unwrap_or_default());
            out.push_str("\nDocument: ");
            out.push_str(&instance.evidence()?.unwrap_or_default());
        }
    }
    Ok(out)
}

/// Load a JSONL dataset of the given kind. Blank lines are skipped; line
/// numbers in errors are 1-based.
pub fn load_instances(
    path: impl AsRef<Path>,
    kind: TaskKind,
    options: LoadOptions,
) -> Result<Vec<TaskInstance>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_instances(&text, kind, options)
}

pub fn parse_instances(
    text: &str,
    kind: TaskKind,
    options: LoadOptions,
) -> Result<Vec<TaskInstance>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Map<String, Value> =
            serde_json::from_str(line).map_err(|_| CorpusError::MalformedLine(line_no))?;
        let instance = instance_from_record(&record, kind, options, line_no)?;
        instance.validate(line_no)?;
        if !seen.insert(instance.id.clone()) {
            return Err(CorpusError::DuplicateId(instance.id));
        }
        out.push(instance);
    }
    Ok(out)
}

/// Inverse of [`parse_instances`] for instances loaded with the default
/// (English) field mapping.
pub fn serialize_instances(instances: &[TaskInstance]) -> String {
    let mut out = String::new();
    for instance in instances {
        let mut record = Map::new();
        record.insert("id".into(), Value::from(instance.id.clone()));
        match instance.task_kind {
            TaskKind::CommonsenseQa => {
                record.insert("question".into(), Value::from(instance.question.clone()));
                record.insert("options".into(), Value::from(instance.options.clone()));
            }
            TaskKind::Nli => {
                record.insert("premise".into(), Value::from(instance.premise.clone()));
                record.insert("hypothesis".into(), Value::from(instance.hypothesis.clone()));
            }
            TaskKind::FactCheck => {
                record.insert("claim".into(), Value::from(instance.claim.clone()));
                record.insert(
                    "document_sentences".into(),
                    Value::from(instance.document_sentences.clone()),
                );
                if let Some(mask) = &instance.relevance_mask {
                    record.insert("relevance_mask".into(), Value::from(mask.clone()));
                }
                record.insert("language".into(), Value::from(instance.language.as_str()));
            }
        }
        record.insert("gold_label".into(), Value::from(instance.gold_label.clone()));
        record.insert(
            "gold_explanation".into(),
            Value::from(instance.gold_explanation.clone()),
        );
        out.push_str(&Value::Object(record).to_string());
        out.push('\n');
    }
    out
}

fn instance_from_record(
    record: &Map<String, Value>,
    kind: TaskKind,
    options: LoadOptions,
    line: usize,
) -> Result<TaskInstance, CorpusError> {
    // German field set, when requested, lives under `<field>_de`.
    let localized = |field: &str| -> String {
        if kind == TaskKind::FactCheck && options.language == Language::De {
            format!("{field}_de")
        } else {
            field.to_string()
        }
    };

    let id = match record.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(CorpusError::MalformedLine(line)),
        None => return Err(CorpusError::missing("id", line)),
    };

    let mut instance = TaskInstance {
        id,
        task_kind: kind,
        question: None,
        options: None,
        premise: None,
        hypothesis: None,
        claim: None,
        document_sentences: None,
        relevance_mask: None,
        gold_label: required_str(record, "gold_label", line)?,
        gold_explanation: required_str(record, &localized("gold_explanation"), line)?,
        language: Language::En,
    };

    match kind {
        TaskKind::CommonsenseQa => {
            instance.question = Some(required_str(record, "question", line)?);
            instance.options = Some(required_str_list(record, "options", line)?);
        }
        TaskKind::Nli => {
            instance.premise = Some(required_str(record, "premise", line)?);
            instance.hypothesis = Some(required_str(record, "hypothesis", line)?);
        }
        TaskKind::FactCheck => {
            instance.claim = Some(required_str(record, &localized("claim"), line)?);
            instance.document_sentences =
                Some(required_str_list(record, &localized("document_sentences"), line)?);
            instance.relevance_mask = match record.get("relevance_mask") {
                None | Some(Value::Null) => None,
                Some(Value::Array(items)) => Some(
                    items
                        .iter()
                        .map(|v| match v {
                            Value::Bool(b) => Ok(*b),
                            Value::Number(n) => Ok(n.as_i64().unwrap_or(0) != 0),
                            _ => Err(CorpusError::MalformedLine(line)),
                        })
                        .collect::<Result<_, _>>()?,
                ),
                Some(_) => return Err(CorpusError::MalformedLine(line)),
            };
            instance.language = if options.language == Language::De {
                Language::De
            } else {
                match record.get("language") {
                    Some(Value::String(s)) => {
                        s.parse().map_err(|_| CorpusError::MalformedLine(line))?
                    }
                    _ => Language::En,
                }
            };
        }
    }
    Ok(instance)
}

fn required_str(record: &Map<String, Value>, field: &str, line: usize) -> Result<String, CorpusError> {
    match record.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        None | Some(Value::Null) => Err(CorpusError::missing(field, line)),
        Some(_) => Err(CorpusError::MalformedLine(line)),
    }
}

fn required_str_list(
    record: &Map<String, Value>,
    field: &str,
    line: usize,
) -> Result<Vec<String>, CorpusError> {
    match record.get(field) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or(CorpusError::MalformedLine(line))
            })
            .collect(),
        None | Some(Value::Null) => Err(CorpusError::missing(field, line)),
        Some(_) => Err(CorpusError::MalformedLine(line)),
    }
}
