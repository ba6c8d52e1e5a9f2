use serde::{Deserialize, Serialize};

use super::trace::{PipelineTrace, SelfRefineRound, TraceRoles};
use super::verdict::{extract_prediction, parse_verdict, QualityVerdict};
use super::{PipelineMode, RefineryError};
use crate::analysis::token_count;
use crate::backend::{
    complete, fits_context, BackendConfig, BackendError, ChatBackend, GenerationParams, TruncationPolicy,
};
use crate::corpus::{render_instance_input, TaskInstance};
use crate::prompting::{render_prompt, shot_count, DemoStore, Slot, SlotValues, Stage, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfRefineConfig {
    #[serde(default = "default_iterations")]
    pub max_iterations: u32,
    #[serde(default = "default_true")]
    pub stop_on_no_change: bool,
}

fn default_iterations() -> u32 {
    3
}
fn default_true() -> bool {
    true
}

impl Default for SelfRefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: default_iterations(),
            stop_on_no_change: true,
        }
    }
}

impl SelfRefineConfig {
    pub fn validate(&self) -> Result<(), RefineryError> {
        if !(1..=10).contains(&self.max_iterations) {
            return Err(RefineryError::InvalidConfig(format!(
                "self-refine max_iterations {} outside [1, 10]",
                self.max_iterations
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    #[serde(default)]
    pub generation: GenerationParams,
    /// Run feedback, suggestion and refinement even on a negative verdict.
    #[serde(default)]
    pub force_refine: bool,
    /// Fail instead of falling back to the minimum shot count when the
    /// budget is too small.
    #[serde(default)]
    pub strict_budget: bool,
    #[serde(default)]
    pub self_refine: SelfRefineConfig,
}

impl PipelineConfig {
    pub fn new(mode: PipelineMode) -> Self {
        Self {
            mode,
            generation: GenerationParams::default(),
            force_refine: false,
            strict_budget: false,
            self_refine: SelfRefineConfig::default(),
        }
    }
}

/// A model playing one role: the backend handle and its limits.
#[derive(Clone, Copy)]
pub struct Role<'a> {
    pub backend: &'a dyn ChatBackend,
    pub config: &'a BackendConfig,
}

impl<'a> Role<'a> {
    pub fn new(backend: &'a dyn ChatBackend, config: &'a BackendConfig) -> Self {
        Self { backend, config }
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }
}

/// Text produced by one stage plus the exact prompt that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub text: String,
    pub prompt: String,
    pub latency_ms: u64,
}

/// Everything needed to run either pipeline on any number of instances.
/// For self-refinement only the generator role is used.
pub struct Refinery<'a> {
    pub generator: Role<'a>,
    pub critic: Role<'a>,
    pub templates: &'a TemplateSet,
    pub generate_demos: &'a DemoStore,
    pub refine_demos: &'a DemoStore,
    pub config: &'a PipelineConfig,
}

impl<'a> Refinery<'a> {
    fn store_for(&self, stage: Stage) -> &'a DemoStore {
        match stage {
            Stage::Generate => self.generate_demos,
            _ => self.refine_demos,
        }
    }

    /// Render `stage` with as many demonstrations as the budget allows,
    /// dropping trailing ones if the result still overflows.
    pub fn build_prompt(&self, stage: Stage, role: Role<'_>, values: &SlotValues) -> Result<String, RefineryError> {
        let template = self.templates.get(stage);
        let store = self.store_for(stage);
        let params = &self.config.generation;
        let bare = render_prompt(template, values, &[])?;
        let budget = role.config.context_budget_tokens.saturating_sub(params.max_new_tokens);
        let mut k = shot_count(store, stage, token_count(&bare), budget, self.config.strict_budget)?;
        loop {
            let prompt = render_prompt(template, values, &store.entries()[..k])?;
            if fits_context(&prompt, params, role.config) {
                return Ok(prompt);
            }
            if k == 0 || role.config.truncation == TruncationPolicy::Strict {
                return Err(BackendError::ContextOverflow {
                    prompt_tokens: token_count(&prompt),
                    max_new_tokens: params.max_new_tokens,
                    budget: role.config.context_budget_tokens,
                }
                .into());
            }
            k -= 1;
        }
    }

    fn call(&self, stage: Stage, role: Role<'_>, values: SlotValues) -> Result<StageOutput, RefineryError> {
        let prompt = self.build_prompt(stage, role, &values)?;
        let completion = complete(role.backend, &prompt, &self.config.generation, role.config)?;
        Ok(StageOutput {
            text: completion.text.trim().to_string(),
            prompt,
            latency_ms: completion.latency_ms,
        })
    }

    fn input_text(instance: &TaskInstance) -> Result<String, RefineryError> {
        Ok(render_instance_input(instance)?)
    }

    /// Stage 1: the generator's initial explanation.
    pub fn generate_initial(&self, instance: &TaskInstance) -> Result<StageOutput, RefineryError> {
        let values = SlotValues::from([(Slot::Input, Self::input_text(instance)?)]);
        self.call(Stage::Generate, self.generator, values)
    }

    /// Stage 2: the critic's verdict on `initial`.
    pub fn assess_quality(
        &self,
        instance: &TaskInstance,
        initial: &str,
    ) -> Result<(QualityVerdict, StageOutput), RefineryError> {
        let values = SlotValues::from([
            (Slot::Input, Self::input_text(instance)?),
            (Slot::InitialExplanation, initial.to_string()),
        ]);
        let out = self.call(Stage::Assess, self.critic, values)?;
        let needs_improvement = parse_verdict(&out.text)?;
        Ok((
            QualityVerdict {
                needs_improvement,
                raw_text: out.text.clone(),
            },
            out,
        ))
    }

    /// Stage 3: the critic's feedback on `initial`.
    pub fn generate_feedback(&self, instance: &TaskInstance, initial: &str) -> Result<StageOutput, RefineryError> {
        let values = SlotValues::from([
            (Slot::Input, Self::input_text(instance)?),
            (Slot::InitialExplanation, initial.to_string()),
        ]);
        self.call(Stage::Feedback, self.critic, values)
    }

    /// Stage 4: the critic's suggested explanation.
    pub fn generate_suggestion(
        &self,
        instance: &TaskInstance,
        initial: &str,
        feedback: &str,
    ) -> Result<StageOutput, RefineryError> {
        let values = SlotValues::from([
            (Slot::Input, Self::input_text(instance)?),
            (Slot::InitialExplanation, initial.to_string()),
            (Slot::Feedback, feedback.to_string()),
        ]);
        self.call(Stage::Suggest, self.critic, values)
    }

    /// Stage 5: the generator's refinement. `mode` decides which critic
    /// outputs are shown; exactly those must be supplied.
    pub fn refine(
        &self,
        instance: &TaskInstance,
        initial: &str,
        feedback: Option<&str>,
        suggestion: Option<&str>,
        mode: PipelineMode,
    ) -> Result<StageOutput, RefineryError> {
        let stage = match mode {
            PipelineMode::CrossRefine => Stage::Refine,
            PipelineMode::AblateFeedbackOnly => Stage::RefineFeedbackOnly,
            PipelineMode::AblateSuggestionOnly => Stage::RefineSuggestionOnly,
            PipelineMode::SelfRefine => {
                return Err(RefineryError::InvalidConfig(
                    "self-refinement has no critic refinement stage".into(),
                ))
            }
        };
        let mut values = SlotValues::from([
            (Slot::Input, Self::input_text(instance)?),
            (Slot::InitialExplanation, initial.to_string()),
        ]);
        if mode.uses_feedback() {
            values.insert(Slot::Feedback, feedback.ok_or(RefineryError::MissingComponent { mode })?.to_string());
        }
        if mode.uses_suggestion() {
            values.insert(
                Slot::Suggestion,
                suggestion.ok_or(RefineryError::MissingComponent { mode })?.to_string(),
            );
        }
        self.call(stage, self.generator, values)
    }

    fn roles(&self, mode: PipelineMode) -> TraceRoles {
        let generator = self.generator.model_id().to_string();
        let critic = if mode == PipelineMode::SelfRefine {
            generator.clone()
        } else {
            self.critic.model_id().to_string()
        };
        TraceRoles { generator, critic }
    }

    fn record(trace: &mut PipelineTrace, stage: &str, model: &str, out: &StageOutput) {
        trace.prompts.insert(stage.to_string(), out.prompt.clone());
        trace.models.insert(stage.to_string(), model.to_string());
        trace.timings_ms.insert(stage.to_string(), out.latency_ms);
    }

    /// Cross-refinement (or one of its ablations, per `config.mode`) on one
    /// instance. Stage errors are annotated with the stage name.
    pub fn run_cross_refine(&self, instance: &TaskInstance, dataset_id: &str) -> Result<PipelineTrace, RefineryError> {
        let mode = self.config.mode;
        if mode == PipelineMode::SelfRefine {
            return Err(RefineryError::InvalidConfig("use run_self_refine for self_refine mode".into()));
        }
        let mut trace = PipelineTrace::new(&instance.id, dataset_id, mode, self.roles(mode));
        trace.input_text = Self::input_text(instance).map_err(|e| RefineryError::at("generate", e))?;
        let generator = self.generator.model_id().to_string();
        let critic = self.critic.model_id().to_string();

        let initial = self
            .generate_initial(instance)
            .map_err(|e| RefineryError::at("generate", e))?;
        Self::record(&mut trace, "generate", &generator, &initial);
        trace.initial = initial.text.clone();

        let (verdict, assess) = self
            .assess_quality(instance, &trace.initial)
            .map_err(|e| RefineryError::at("assess", e))?;
        Self::record(&mut trace, "assess", &critic, &assess);
        let proceed = verdict.needs_improvement || self.config.force_refine;
        trace.forced_refine = proceed && !verdict.needs_improvement;
        trace.verdict = Some(verdict);

        if proceed {
            let feedback = self
                .generate_feedback(instance, &trace.initial)
                .map_err(|e| RefineryError::at("feedback", e))?;
            Self::record(&mut trace, "feedback", &critic, &feedback);

            let suggestion = if mode.uses_suggestion() {
                let s = self
                    .generate_suggestion(instance, &trace.initial, &feedback.text)
                    .map_err(|e| RefineryError::at("suggest", e))?;
                Self::record(&mut trace, "suggest", &critic, &s);
                Some(s.text)
            } else {
                None
            };

            let refined = self
                .refine(
                    instance,
                    &trace.initial,
                    Some(&feedback.text),
                    suggestion.as_deref(),
                    mode,
                )
                .map_err(|e| RefineryError::at("refine", e))?;
            Self::record(&mut trace, "refine", &generator, &refined);

            trace.feedback = Some(feedback.text);
            trace.suggestion = suggestion;
            trace.refined = Some(refined.text.clone());
            trace.final_explanation = refined.text;
        } else {
            trace.final_explanation = trace.initial.clone();
        }
        trace.prediction = extract_prediction(&trace.final_explanation);
        Ok(trace)
    }

    /// Self-refinement with the generator alone: alternate self-feedback and
    /// refinement until the feedback reports no improvement, the refinement
    /// stops changing (if enabled), or `max_iterations` rounds have run.
    pub fn run_self_refine(&self, instance: &TaskInstance, dataset_id: &str) -> Result<PipelineTrace, RefineryError> {
        let settings = self.config.self_refine;
        settings.validate()?;
        let model = self.generator.model_id().to_string();
        let mut trace = PipelineTrace::new(&instance.id, dataset_id, PipelineMode::SelfRefine, self.roles(PipelineMode::SelfRefine));
        let input = Self::input_text(instance).map_err(|e| RefineryError::at("generate", e))?;
        trace.input_text = input.clone();

        let initial = self
            .generate_initial(instance)
            .map_err(|e| RefineryError::at("generate", e))?;
        Self::record(&mut trace, "generate", &model, &initial);
        trace.initial = initial.text.clone();

        let mut current = initial.text;
        for round in 1..=settings.max_iterations {
            let fb_stage = format!("{}.{round}", Stage::SelfRefineFeedback);
            let values = SlotValues::from([
                (Slot::Input, input.clone()),
                (Slot::InitialExplanation, current.clone()),
            ]);
            let feedback = self
                .call(Stage::SelfRefineFeedback, self.generator, values)
                .map_err(|e| RefineryError::at(fb_stage.as_str(), e))?;
            Self::record(&mut trace, &fb_stage, &model, &feedback);
            // Feedback that names no verdict is treated as a request to improve.
            let needs_improvement = parse_verdict(&feedback.text).unwrap_or(true);
            if round == 1 {
                trace.verdict = Some(QualityVerdict {
                    needs_improvement,
                    raw_text: feedback.text.clone(),
                });
            }
            trace.feedback = Some(feedback.text.clone());
            trace.rounds.push(SelfRefineRound {
                feedback: feedback.text.clone(),
                needs_improvement,
                refined: None,
            });
            if !needs_improvement {
                break;
            }

            let refine_stage = format!("{}.{round}", Stage::SelfRefineRefine);
            let values = SlotValues::from([
                (Slot::Input, input.clone()),
                (Slot::InitialExplanation, current.clone()),
                (Slot::Feedback, feedback.text),
            ]);
            let refined = self
                .call(Stage::SelfRefineRefine, self.generator, values)
                .map_err(|e| RefineryError::at(refine_stage.as_str(), e))?;
            Self::record(&mut trace, &refine_stage, &model, &refined);
            trace.rounds.last_mut().expect("round pushed").refined = Some(refined.text.clone());
            trace.refined = Some(refined.text.clone());
            let unchanged = refined.text == current;
            current = refined.text;
            if settings.stop_on_no_change && unchanged {
                break;
            }
        }
        trace.final_explanation = current;
        trace.prediction = extract_prediction(&trace.final_explanation);
        Ok(trace)
    }

    /// Run the configured mode and turn any error into a failed-trace stub.
    pub fn run_instance(&self, instance: &TaskInstance, dataset_id: &str) -> PipelineTrace {
        let mode = self.config.mode;
        let result = match mode {
            PipelineMode::SelfRefine => self.run_self_refine(instance, dataset_id),
            _ => self.run_cross_refine(instance, dataset_id),
        };
        result.unwrap_or_else(|err| {
            let stage = err.stage().unwrap_or("pipeline").to_string();
            PipelineTrace::failed(&instance.id, dataset_id, mode, self.roles(mode), &stage, err.root().to_string())
        })
    }
}
