use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::template::Stage;
use super::PromptError;
use crate::analysis::token_count;
use crate::corpus::TaskKind;

/// One entry of a demonstration store: an input together with an initial
/// explanation, critic feedback, a suggested explanation and the refined
/// explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub input: String,
    pub initial_explanation: String,
    pub feedback: String,
    pub suggestion: String,
    pub refined_explanation: String,
    #[serde(default)]
    pub needs_further_refinement: bool,
    #[serde(default)]
    pub token_count: usize,
}

impl Demonstration {
    fn text_fields(&self) -> [(&'static str, &str); 6] {
        [
            ("id", &self.id),
            ("input", &self.input),
            ("initial_explanation", &self.initial_explanation),
            ("feedback", &self.feedback),
            ("suggestion", &self.suggestion),
            ("refined_explanation", &self.refined_explanation),
        ]
    }

    /// Token count of the content fields joined by single spaces.
    pub fn count_tokens(&self) -> usize {
        let joined = [
            self.input.as_str(),
            &self.initial_explanation,
            &self.feedback,
            &self.suggestion,
            &self.refined_explanation,
        ]
        .join(" ");
        token_count(&joined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoStore {
    entries: Vec<Demonstration>,
    task_kind: Option<TaskKind>,
}

impl DemoStore {
    /// Validate entries and recompute every `token_count`.
    pub fn new(mut entries: Vec<Demonstration>, task_kind: Option<TaskKind>) -> Result<Self, PromptError> {
        if entries.is_empty() {
            return Err(PromptError::EmptyStore);
        }
        let mut ids = HashSet::new();
        for (i, demo) in entries.iter_mut().enumerate() {
            for (field, value) in demo.text_fields() {
                if value.trim().is_empty() {
                    return Err(PromptError::MissingField {
                        field: field.to_string(),
                        line: i + 1,
                    });
                }
            }
            if !ids.insert(demo.id.clone()) {
                return Err(PromptError::DuplicateId(demo.id.clone()));
            }
            demo.token_count = demo.count_tokens();
        }
        Ok(Self { entries, task_kind })
    }

    pub fn entries(&self) -> &[Demonstration] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn task_kind(&self) -> Option<TaskKind> {
        self.task_kind
    }

    pub fn mean_tokens(&self) -> f64 {
        self.entries.iter().map(|d| d.token_count as f64).sum::<f64>() / self.entries.len() as f64
    }
}

/// Load a JSONL store. `token_count` on disk is ignored and recomputed. An
/// optional per-line `task_kind` must agree across the file.
pub fn load_demo_store(path: impl AsRef<Path>) -> Result<DemoStore, PromptError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PromptError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_demo_store(&text)
}

pub fn parse_demo_store(text: &str) -> Result<DemoStore, PromptError> {
    let mut entries = Vec::new();
    let mut kind: Option<TaskKind> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Map<String, Value> =
            serde_json::from_str(line).map_err(|_| PromptError::MalformedLine(line_no))?;
        for field in [
            "id",
            "input",
            "initial_explanation",
            "feedback",
            "suggestion",
            "refined_explanation",
        ] {
            match record.get(field) {
                Some(Value::String(s)) if !s.trim().is_empty() => {}
                Some(Value::String(_)) | None | Some(Value::Null) => {
                    return Err(PromptError::MissingField {
                        field: field.to_string(),
                        line: line_no,
                    })
                }
                Some(_) => return Err(PromptError::MalformedLine(line_no)),
            }
        }
        if let Some(Value::String(k)) = record.get("task_kind") {
            let k: TaskKind = k.parse().map_err(|_| PromptError::MalformedLine(line_no))?;
            if kind.is_some_and(|prev| prev != k) {
                return Err(PromptError::MalformedLine(line_no));
            }
            kind = Some(k);
        }
        let demo: Demonstration =
            serde_json::from_value(Value::Object(record)).map_err(|_| PromptError::MalformedLine(line_no))?;
        entries.push(demo);
    }
    DemoStore::new(entries, kind)
}

/// How many shots to use: `floor((budget - input) / mean_demo_tokens)`
/// clamped to the stage's bounds and to the store size.
///
/// With `strict`, a budget that cannot hold even the lower bound is an
/// error; otherwise the lower bound is returned and the caller's truncation
/// policy deals with overflow.
pub fn shot_count(
    store: &DemoStore,
    stage: Stage,
    input_tokens: usize,
    budget_tokens: usize,
    strict: bool,
) -> Result<usize, PromptError> {
    let (lo, hi) = stage.shot_bounds();
    let mean = store.mean_tokens();
    let available = budget_tokens.saturating_sub(input_tokens);
    if strict && (budget_tokens <= input_tokens || lo as f64 * mean > available as f64) {
        return Err(PromptError::BudgetTooSmall {
            stage,
            budget_tokens,
            input_tokens,
        });
    }
    let raw = if mean > 0.0 {
        (available as f64 / mean).floor() as usize
    } else {
        hi
    };
    Ok(raw.clamp(lo, hi).min(store.len()))
}

/// The first [`shot_count`] entries of the store, in store order.
pub fn select_demonstrations(
    store: &DemoStore,
    stage: Stage,
    input_tokens: usize,
    budget_tokens: usize,
    strict: bool,
) -> Result<&[Demonstration], PromptError> {
    let k = shot_count(store, stage, input_tokens, budget_tokens, strict)?;
    Ok(&store.entries[..k])
}

/// Serialize demonstrations for the `{demonstrations}` slot, using the
/// fields a given stage conditions on followed by the field it produces.
pub fn render_demonstrations(stage: Stage, demos: &[Demonstration]) -> String {
    demos
        .iter()
        .map(|d| render_one(stage, d))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_one(stage: Stage, d: &Demonstration) -> String {
    let verdict = if d.needs_further_refinement { "Yes" } else { "No" };
    let lines: Vec<(&str, &str)> = match stage {
        Stage::Generate => vec![("Explanation", &d.refined_explanation)],
        Stage::Assess => vec![("Initial explanation", &d.initial_explanation), ("Needs improvement", verdict)],
        Stage::Feedback => vec![("Initial explanation", &d.initial_explanation), ("Feedback", &d.feedback)],
        Stage::Suggest => vec![
            ("Initial explanation", &d.initial_explanation),
            ("Feedback", &d.feedback),
            ("Suggested explanation", &d.suggestion),
        ],
        Stage::Refine => vec![
            ("Initial explanation", &d.initial_explanation),
            ("Feedback", &d.feedback),
            ("Suggested explanation", &d.suggestion),
            ("Refined explanation", &d.refined_explanation),
        ],
        Stage::RefineFeedbackOnly => vec![
            ("Initial explanation", &d.initial_explanation),
            ("Feedback", &d.feedback),
            ("Refined explanation", &d.refined_explanation),
        ],
        Stage::RefineSuggestionOnly => vec![
            ("Initial explanation", &d.initial_explanation),
            ("Suggested explanation", &d.suggestion),
            ("Refined explanation", &d.refined_explanation),
        ],
        Stage::SelfRefineFeedback => vec![("Explanation", &d.initial_explanation), ("Feedback", &d.feedback)],
        Stage::SelfRefineRefine => vec![
            ("Explanation", &d.initial_explanation),
            ("Feedback", &d.feedback),
            ("Refined explanation", &d.refined_explanation),
        ],
    };
    let mut out = d.input.clone();
    for (label, value) in lines {
        out.push('\n');
        out.push_str(label);
        out.push_str(": ");
        out.push_str(value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// A demo whose content fields total exactly `tokens` tokens.
    pub(crate) fn demo_with_tokens(id: &str, tokens: usize) -> Demonstration {
        assert!(tokens >= 5);
        let input = vec!["w"; tokens - 4].join(" ");
        Demonstration {
            id: id.into(),
            input,
            initial_explanation: "a".into(),
            feedback: "b".into(),
            suggestion: "c".into(),
            refined_explanation: "d".into(),
            needs_further_refinement: false,
            token_count: 0,
        }
    }

    fn store(n: usize, tokens: usize) -> DemoStore {
        DemoStore::new((0..n).map(|i| demo_with_tokens(&format!("d{i}"), tokens)).collect(), None).unwrap()
    }

    #[test]
    fn token_count_is_recomputed() {
        let mut d = demo_with_tokens("x", 150);
        d.token_count = 3;
        let s = DemoStore::new(vec![d], None).unwrap();
        assert_eq!(s.entries()[0].token_count, 150);
    }

    #[test]
    fn store_errors() {
        assert_eq!(parse_demo_store("").unwrap_err(), PromptError::EmptyStore);
        let line = serde_json::to_string(&demo_with_tokens("same", 10)).unwrap();
        assert_eq!(
            parse_demo_store(&format!("{line}\n{line}\n")).unwrap_err(),
            PromptError::DuplicateId("same".into())
        );
        let no_feedback = r#"{"id":"a","input":"i","initial_explanation":"e","suggestion":"s","refined_explanation":"r"}"#;
        assert_eq!(
            parse_demo_store(no_feedback).unwrap_err(),
            PromptError::MissingField {
                field: "feedback".into(),
                line: 1
            }
        );
    }

    #[test]
    fn selection_examples() {
        // Upper clamp for generation.
        let s = store(30, 150);
        assert_eq!(select_demonstrations(&s, Stage::Generate, 200, 100_000, false).unwrap().len(), 20);
        // Lower clamp when the budget barely exceeds the input.
        assert_eq!(select_demonstrations(&s, Stage::Refine, 500, 501, false).unwrap().len(), 3);
        // floor(1500 / 300) = 5 within [3, 10].
        let s = store(30, 300);
        assert_eq!(select_demonstrations(&s, Stage::Refine, 500, 2000, false).unwrap().len(), 5);
        // Never more than the store holds.
        let s = store(4, 100);
        assert_eq!(select_demonstrations(&s, Stage::Generate, 0, 100_000, false).unwrap().len(), 4);
    }

    #[test]
    fn strict_mode_rejects_small_budget() {
        let s = store(30, 300);
        assert!(matches!(
            select_demonstrations(&s, Stage::Refine, 500, 1000, true).unwrap_err(),
            PromptError::BudgetTooSmall { .. }
        ));
        assert_eq!(select_demonstrations(&s, Stage::Refine, 500, 1400, true).unwrap().len(), 3);
    }

    #[test]
    fn selection_keeps_store_order() {
        let s = store(12, 50);
        let picked = select_demonstrations(&s, Stage::Refine, 0, 10_000, false).unwrap();
        let ids: Vec<&str> = picked.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, (0..10).map(|i| format!("d{i}")).collect::<Vec<_>>());
    }

    #[test]
    fn stage_specific_rendering() {
        let d = Demonstration {
            id: "1".into(),
            input: "Premise: P\nHypothesis: H".into(),
            initial_explanation: "INIT".into(),
            feedback: "FB".into(),
            suggestion: "SUG".into(),
            refined_explanation: "REF".into(),
            needs_further_refinement: true,
            token_count: 0,
        };
        let fo = render_demonstrations(Stage::RefineFeedbackOnly, std::slice::from_ref(&d));
        assert!(fo.contains("FB") && !fo.contains("SUG"));
        let so = render_demonstrations(Stage::RefineSuggestionOnly, std::slice::from_ref(&d));
        assert!(so.contains("SUG") && !so.contains("FB"));
        assert!(render_demonstrations(Stage::Assess, std::slice::from_ref(&d)).ends_with("Needs improvement: Yes"));
        let two = render_demonstrations(Stage::Generate, &[d.clone(), d]);
        assert_eq!(two.matches("Explanation: REF").count(), 2);
    }

    proptest! {
        #[test]
        fn monotone_in_budget(
            input in 0usize..2000,
            b1 in 0usize..50_000,
            extra in 0usize..50_000,
            tokens in 5usize..400,
            n in 1usize..40,
            refine in any::<bool>(),
        ) {
            let s = store(n, tokens);
            let stage = if refine { Stage::Refine } else { Stage::Generate };
            let small = shot_count(&s, stage, input, b1, false).unwrap();
            let large = shot_count(&s, stage, input, b1 + extra, false).unwrap();
            prop_assert!(small <= large);
            let (lo, hi) = stage.shot_bounds();
            prop_assert!(large <= hi);
            prop_assert!(small >= lo.min(n));
        }
    }
}
