use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::demos::{render_demonstrations, Demonstration};
use super::PromptError;
use crate::corpus::{Language, TaskKind};

/// A prompt-producing step of either pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Assess,
    Feedback,
    Suggest,
    Refine,
    RefineFeedbackOnly,
    RefineSuggestionOnly,
    SelfRefineFeedback,
    SelfRefineRefine,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Generate,
        Stage::Assess,
        Stage::Feedback,
        Stage::Suggest,
        Stage::Refine,
        Stage::RefineFeedbackOnly,
        Stage::RefineSuggestionOnly,
        Stage::SelfRefineFeedback,
        Stage::SelfRefineRefine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Assess => "assess",
            Stage::Feedback => "feedback",
            Stage::Suggest => "suggest",
            Stage::Refine => "refine",
            Stage::RefineFeedbackOnly => "refine_feedback_only",
            Stage::RefineSuggestionOnly => "refine_suggestion_only",
            Stage::SelfRefineFeedback => "self_refine_feedback",
            Stage::SelfRefineRefine => "self_refine_refine",
        }
    }

    /// Content slots the stage conditions on. `{demonstrations}` is
    /// required by every stage in addition to these.
    pub fn content_slots(self) -> &'static [Slot] {
        use Slot::*;
        match self {
            Stage::Generate => &[Input],
            Stage::Assess | Stage::Feedback | Stage::SelfRefineFeedback => &[Input, InitialExplanation],
            Stage::Suggest | Stage::RefineFeedbackOnly | Stage::SelfRefineRefine => {
                &[Input, InitialExplanation, Feedback]
            }
            Stage::RefineSuggestionOnly => &[Input, InitialExplanation, Suggestion],
            Stage::Refine => &[Input, InitialExplanation, Feedback, Suggestion],
        }
    }

    pub fn requires(self, slot: Slot) -> bool {
        slot == Slot::Demonstrations || self.content_slots().contains(&slot)
    }

    /// Refinement-side stages draw at most 10 shots; generation up to 20.
    pub fn shot_bounds(self) -> (usize, usize) {
        match self {
            Stage::Generate => (3, 20),
            _ => (3, 10),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Input,
    InitialExplanation,
    Feedback,
    Suggestion,
    Demonstrations,
}

impl Slot {
    pub const ALL: [Slot; 5] = [
        Slot::Input,
        Slot::InitialExplanation,
        Slot::Feedback,
        Slot::Suggestion,
        Slot::Demonstrations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Input => "input",
            Slot::InitialExplanation => "initial_explanation",
            Slot::Feedback => "feedback",
            Slot::Suggestion => "suggestion",
            Slot::Demonstrations => "demonstrations",
        }
    }

    fn from_name(name: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.name() == name)
    }
}

pub type SlotValues = BTreeMap<Slot, String>;

/// Pieces of a template body: literal text or a `{slot}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(Slot),
}

/// A `{name}` placeholder is a brace pair around `[a-z_]+`. Any other brace
/// is literal text.
fn parse_body(body: &str) -> Result<Vec<Piece>, PromptError> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let slot = Slot::from_name(name).ok_or_else(|| PromptError::UnknownSlot(name.to_string()))?;
            literal.push_str(&rest[..open]);
            if !literal.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut literal)));
            }
            pieces.push(Piece::Slot(slot));
            rest = &after[name_len + 1..];
        } else {
            literal.push_str(&rest[..=open]);
            rest = after;
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        pieces.push(Piece::Text(literal));
    }
    Ok(pieces)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    stage: Stage,
    language: Language,
    body: String,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    /// Parse and check that `body` uses exactly the slots of `stage`.
    pub fn new(stage: Stage, language: Language, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let pieces = parse_body(&body)?;
        for slot in Slot::ALL {
            let present = pieces.contains(&Piece::Slot(slot));
            if stage.requires(slot) && !present {
                return Err(PromptError::TemplateMissingSlot {
                    stage,
                    slot: slot.name(),
                });
            }
            if !stage.requires(slot) && present {
                return Err(PromptError::UnknownSlot(slot.name().to_string()));
            }
        }
        Ok(Self {
            stage,
            language,
            body,
            pieces,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn body(&self) -> &str {
        &self.body
    }
}

/// Fill every slot of `template`. Slot values are inserted verbatim and are
/// never re-scanned for placeholders.
pub fn render_prompt(
    template: &PromptTemplate,
    slot_values: &SlotValues,
    demonstrations: &[Demonstration],
) -> Result<String, PromptError> {
    for slot in slot_values.keys() {
        if *slot == Slot::Demonstrations || !template.stage.requires(*slot) {
            return Err(PromptError::UnknownSlot(slot.name().to_string()));
        }
    }
    for slot in template.stage.content_slots() {
        if !slot_values.contains_key(slot) {
            return Err(PromptError::MissingSlot(slot.name().to_string()));
        }
    }
    let demo_block = render_demonstrations(template.stage, demonstrations);
    let mut out = String::with_capacity(template.body.len() + demo_block.len());
    for piece in &template.pieces {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(Slot::Demonstrations) => out.push_str(&demo_block),
            Piece::Slot(slot) => out.push_str(&slot_values[slot]),
        }
    }
    Ok(out)
}

/// The full set of stage templates for one task kind and language.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    language: Language,
    templates: BTreeMap<Stage, PromptTemplate>,
}

const EN_BODIES: [(Stage, &str); 9] = [
    (Stage::Generate, include_str!("../../templates/generate.txt")),
    (Stage::Assess, include_str!("../../templates/assess.txt")),
    (Stage::Feedback, include_str!("../../templates/feedback.txt")),
    (Stage::Suggest, include_str!("../../templates/suggest.txt")),
    (Stage::Refine, include_str!("../../templates/refine.txt")),
    (Stage::RefineFeedbackOnly, include_str!("../../templates/refine_feedback_only.txt")),
    (Stage::RefineSuggestionOnly, include_str!("../../templates/refine_suggestion_only.txt")),
    (Stage::SelfRefineFeedback, include_str!("../../templates/self_refine_feedback.txt")),
    (Stage::SelfRefineRefine, include_str!("../../templates/self_refine_refine.txt")),
];

/// Instruction appended to every German-language template.
pub const GERMAN_INSTRUCTION: &str = "Your response should be in German.";

fn task_description(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::CommonsenseQa => {
            "Task: commonsense question answering. Given a question and several answer options, \
             choose the correct option using everyday background knowledge."
        }
        TaskKind::Nli => {
            "Task: natural language inference. Given a premise and a hypothesis, decide whether \
             the premise entails the hypothesis, contradicts it, or is neutral towards it."
        }
        TaskKind::FactCheck => {
            "Task: health fact-checking. Given a claim and the relevant sentences of a document, \
             decide whether the claim is true, false, or unknown based on the document."
        }
    }
}

impl TemplateSet {
    /// Templates shipped with the crate.
    pub fn builtin(kind: TaskKind, language: Language) -> Self {
        let mut templates = BTreeMap::new();
        for (stage, body) in EN_BODIES {
            let mut text = format!("{}\n\n{}", task_description(kind), body.trim_end());
            if language == Language::De {
                text.push_str("\n\n");
                text.push_str(GERMAN_INSTRUCTION);
            }
            text.push('\n');
            let template = PromptTemplate::new(stage, language, text).expect("bundled templates are valid");
            templates.insert(stage, template);
        }
        Self { language, templates }
    }

    /// Start from the builtin set and replace every stage that has a
    /// `<stage>.txt` file in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>, kind: TaskKind, language: Language) -> Result<Self, PromptError> {
        let mut set = Self::builtin(kind, language);
        for stage in Stage::ALL {
            let path = dir.as_ref().join(format!("{}.txt", stage.as_str()));
            if path.exists() {
                let body = fs::read_to_string(&path).map_err(|e| PromptError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.templates.insert(stage, PromptTemplate::new(stage, language, body)?);
            }
        }
        Ok(set)
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        &self.templates[&stage]
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.stage(), template);
    }
}
