//! Stage prompt templates and the demonstration store used for few-shot
//! prompting.

mod demos;
mod template;

pub use demos::{
    load_demo_store, parse_demo_store, render_demonstrations, select_demonstrations, shot_count, DemoStore,
    Demonstration,
};
pub use template::{render_prompt, PromptTemplate, Slot, SlotValues, Stage, TemplateSet, GERMAN_INSTRUCTION};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {0}: malformed demonstration")]
    MalformedLine(usize),
    #[error("line {line}: missing or empty field `{field}`")]
    MissingField { field: String, line: usize },
    #[error("duplicate demonstration id `{0}`")]
    DuplicateId(String),
    #[error("demonstration store is empty")]
    EmptyStore,
    #[error("no value for slot `{0}`")]
    MissingSlot(String),
    #[error("slot `{0}` is not used by this stage")]
    UnknownSlot(String),
    #[error("template for stage {stage} lacks slot `{slot}`")]
    TemplateMissingSlot { stage: Stage, slot: &'static str },
    #[error("budget of {budget_tokens} tokens cannot hold the minimum shots for {stage} (input uses {input_tokens})")]
    BudgetTooSmall {
        stage: Stage,
        budget_tokens: usize,
        input_tokens: usize,
    },
}
