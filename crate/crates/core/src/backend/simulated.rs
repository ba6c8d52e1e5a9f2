//! A deterministic offline stand-in for a chat model.
//!
//! It recognises which pipeline stage a prompt belongs to from the prompt's
//! last line and answers with short template text built from the instance.
//! An explanation counts as good once it contains a reason ("because" or
//! "weil"); the assessment and self-feedback stages answer accordingly.
//! Useful for examples and for recording replay scripts.

use super::{AttemptError, ChatBackend, FinishReason, GenerationParams, RawCompletion};
use crate::analysis::token_count;
use crate::prompting::GERMAN_INSTRUCTION;

/// Whether first explanations come with a reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialStyle {
    Bare,
    Reasoned,
    /// Reasoned when the instance's first line has an odd number of words.
    Mixed,
}

pub struct SimulatedModel {
    model_id: String,
    pub initial: InitialStyle,
}

impl SimulatedModel {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            initial: InitialStyle::Bare,
        }
    }

    pub fn with_initial(mut self, style: InitialStyle) -> Self {
        self.initial = style;
        self
    }
}

struct Parsed<'a> {
    german: bool,
    subject: &'a str,
    answer: String,
    explanation: Option<&'a str>,
    /// The explanation was labelled as another model's initial one.
    reviewing_other: bool,
    feedback: Option<&'a str>,
    suggestion: Option<&'a str>,
}

/// Text after `label` up to the next line that starts a known field.
fn field<'a>(block: &'a str, label: &str) -> Option<&'a str> {
    let start = block.find(&format!("\n{label} "))? + label.len() + 2;
    let rest = &block[start..];
    let end = ["\nFeedback:", "\nSuggested explanation:", "\nRefined explanation:", "\nNeeds improvement:"]
        .iter()
        .filter_map(|m| rest.find(m))
        .min()
        .unwrap_or(rest.len());
    Some(rest[..end].trim())
}

fn parse(prompt: &str) -> Parsed<'_> {
    let block = prompt
        .rfind("following instance.\n\n")
        .map_or(prompt, |i| &prompt[i + "following instance.\n\n".len()..]);
    let block_nl = &prompt[prompt.len() - block.len() - 1..];
    let first = block.lines().next().unwrap_or_default();
    let subject = first.split_once(": ").map_or(first, |(_, s)| s).trim();
    let answer = if let Some(options) = block.lines().find_map(|l| l.strip_prefix("Options: ")) {
        options.split(", ").next().unwrap_or_default().to_string()
    } else if block.contains("\nHypothesis: ") {
        "entailment".into()
    } else {
        "unknown".into()
    };
    let initial = field(block_nl, "Initial explanation:");
    let explanation = initial.or_else(|| field(block_nl, "Explanation:"));
    Parsed {
        german: prompt.contains(GERMAN_INSTRUCTION),
        subject,
        answer,
        explanation,
        reviewing_other: initial.is_some(),
        feedback: field(block_nl, "Feedback:"),
        suggestion: field(block_nl, "Suggested explanation:"),
    }
}

fn has_reason(text: &str) -> bool {
    let lower = text.to_lowercase();
    lower.contains("because") || lower.contains("weil")
}

fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    chars
        .next()
        .map(|c| c.to_lowercase().chain(chars).collect())
        .unwrap_or_default()
}

impl SimulatedModel {
    fn respond(&self, prompt: &str) -> String {
        let p = parse(prompt);
        let last = prompt
            .trim_end()
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty() && *l != GERMAN_INSTRUCTION)
            .unwrap_or_default();
        let subject = lowercase_first(p.subject.trim_end_matches(['.', '?']));
        let reasoned = |via: &str, via_de: &str| {
            if p.german {
                format!("Die Antwort ist {} weil {via_de} zeigt: {subject}.\nAnswer: {}", p.answer, p.answer)
            } else {
                format!("The answer is {} because {via} shows: {subject}.\nAnswer: {}", p.answer, p.answer)
            }
        };
        let reason_first = match self.initial {
            InitialStyle::Bare => false,
            InitialStyle::Reasoned => true,
            InitialStyle::Mixed => p.subject.split_whitespace().count() % 2 == 1,
        };
        match last {
            "Explanation:" if reason_first => reasoned("the input", "die Eingabe"),
            "Explanation:" if p.german => format!("Die Antwort ist {}.\nAnswer: {}", p.answer, p.answer),
            "Explanation:" => format!("The answer is {}.\nAnswer: {}", p.answer, p.answer),
            "Needs improvement:" => {
                if p.explanation.is_some_and(has_reason) {
                    "No. The explanation already gives a reason for the answer.".into()
                } else {
                    "Yes. The explanation states the answer without a reason.".into()
                }
            }
            "Feedback:" if p.reviewing_other => format!(
                "The explanation names {} but does not say why. It should point to the part of the input that decides it: {subject}.",
                p.answer
            ),
            "Feedback:" => {
                if p.explanation.is_some_and(has_reason) {
                    "No improvement needed.".into()
                } else {
                    "Yes. Add the reason that supports the answer.".into()
                }
            }
            "Suggested explanation:" => reasoned("the critic's reading of the input", "die Lesart des Kritikers"),
            "Refined explanation:" => match (p.feedback.is_some(), p.suggestion.is_some()) {
                (true, true) => reasoned("the feedback together with the suggestion", "das Feedback zusammen mit dem Vorschlag"),
                (false, true) => reasoned("the suggestion", "der Vorschlag"),
                _ => reasoned("the feedback", "das Feedback"),
            },
            other => format!("Unrecognised request ending in `{other}`."),
        }
    }
}

impl ChatBackend for SimulatedModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn attempt(&self, prompt: &str, _params: &GenerationParams) -> Result<RawCompletion, AttemptError> {
        let text = self.respond(prompt);
        let latency_ms = Some(20 + 3 * token_count(&text) as u64);
        Ok(RawCompletion {
            text,
            finish_reason: FinishReason::Stop,
            latency_ms,
        })
    }
}
