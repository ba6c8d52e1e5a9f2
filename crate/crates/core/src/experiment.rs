//! Config-driven batch runs: load everything a run needs, process instances
//! on a bounded worker pool, write traces in dataset order and a manifest.
//!
//! ```json
//! {
//!   "dataset": {"path": "ecqa.jsonl", "schema_kind": "commonsense_qa"},
//!   "mode": "cross_refine",
//!   "roles": {
//!     "generator": {"model_id": "qwen2-7b", "endpoint": "http://localhost:8000/v1/chat/completions"},
//!     "critic": {"model_id": "llama3-70b", "script": "critic_script.json"}
//!   },
//!   "demos": {"generate_store": "fixer.jsonl", "refine_store": "fixer.jsonl"},
//!   "limits": {"max_instances": 100, "worker_cap": 4},
//!   "output_dir": "runs/ecqa"
//! }
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! A role with a `script` replays that file instead of calling its endpoint.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    detect_language, passes_filters, similarity_by_group, AnalysisError, DetectedLanguage, FilterCriteria,
    LanguageDistribution, SimilarityReport,
};
use crate::backend::{BackendConfig, BackendError, ChatBackend, GenerationParams, HttpBackend, Script, ScriptedBackend};
use crate::corpus::{load_instances, CorpusError, Language, LoadOptions, TaskInstance, TaskKind};
use crate::metrics::{Embedder, GroupKey, MetricsError, ScoreReport, ScoreRequest, Scorer};
use crate::prompting::{load_demo_store, DemoStore, PromptError, TemplateSet};
use crate::refinery::{
    PipelineConfig, PipelineMode, PipelineTrace, Refinery, RefineryError, Role, SelfRefineConfig, TraceWriter,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Refinery(#[from] RefineryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub schema_kind: TaskKind,
    #[serde(default)]
    pub language: Language,
    /// Label used in traces and reports. Defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl DatasetConfig {
    pub fn dataset_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleConfig {
    #[serde(flatten)]
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

impl RoleConfig {
    pub fn scripted(model_id: &str, script: impl Into<PathBuf>) -> Self {
        Self {
            backend: BackendConfig::new(model_id),
            script: Some(script.into()),
        }
    }

    /// A scripted backend if a script is configured, else the HTTP client.
    pub fn build(&self) -> Result<Box<dyn ChatBackend>, ExperimentError> {
        match &self.script {
            Some(path) => Ok(Box::new(ScriptedBackend::new(
                self.backend.model_id.clone(),
                Script::load(path)?,
            )?)),
            None => Ok(Box::new(HttpBackend::new(self.backend.clone())?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolesConfig {
    pub generator: RoleConfig,
    /// Not needed for self-refinement. When absent in other modes the
    /// generator also acts as critic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic: Option<RoleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub generate_store: PathBuf,
    pub refine_store: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_instances: Option<usize>,
    #[serde(default = "one")]
    pub worker_cap: usize,
}

fn one() -> usize {
    1
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_instances: None,
            worker_cap: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub mode: PipelineMode,
    pub roles: RolesConfig,
    pub demos: DemoConfig,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub limits: Limits,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub force_refine: bool,
    #[serde(default)]
    pub strict_budget: bool,
    #[serde(default)]
    pub fail_fast: bool,
    #[serde(default)]
    pub self_refine: SelfRefineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer_endpoint: Option<String>,
}

impl RunConfig {
    /// Read a config file and resolve its relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        fix(&mut self.demos.generate_store);
        fix(&mut self.demos.refine_store);
        fix(&mut self.output_dir);
        if let Some(p) = &mut self.templates_dir {
            fix(p);
        }
        if let Some(p) = &mut self.roles.generator.script {
            fix(p);
        }
        if let Some(p) = self.roles.critic.as_mut().and_then(|c| c.script.as_mut()) {
            fix(p);
        }
    }

    /// Checks everything that can be checked without calling a model.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let cfg = |msg: String| Err(ExperimentError::Config(msg));
        if self.limits.worker_cap == 0 {
            return cfg("limits.worker_cap must be at least 1".into());
        }
        let mut paths = vec![
            ("dataset.path", &self.dataset.path),
            ("demos.generate_store", &self.demos.generate_store),
            ("demos.refine_store", &self.demos.refine_store),
        ];
        if let Some(p) = &self.templates_dir {
            paths.push(("templates_dir", p));
        }
        if let Some(p) = &self.roles.generator.script {
            paths.push(("roles.generator.script", p));
        }
        if let Some(p) = self.roles.critic.as_ref().and_then(|c| c.script.as_ref()) {
            paths.push(("roles.critic.script", p));
        }
        for (name, path) in paths {
            if !path.exists() {
                return cfg(format!("{name} `{}` does not exist", path.display()));
            }
        }
        for role in std::iter::once(&self.roles.generator).chain(&self.roles.critic) {
            role.backend
                .validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            if role.script.is_none() && role.backend.endpoint.is_empty() {
                return cfg(format!("role `{}` has neither endpoint nor script", role.backend.model_id));
            }
        }
        if self.mode == PipelineMode::SelfRefine {
            self.self_refine
                .validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn critic(&self) -> &RoleConfig {
        match (&self.roles.critic, self.mode) {
            (Some(c), m) if m != PipelineMode::SelfRefine => c,
            _ => &self.roles.generator,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            mode: self.mode,
            generation: self.generation.clone(),
            force_refine: self.force_refine,
            strict_budget: self.strict_budget,
            self_refine: self.self_refine,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn trace_path(&self) -> PathBuf {
        self.output_dir.join(format!("traces_{}.jsonl", self.mode))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join(format!("manifest_{}.json", self.mode))
    }
}

/// The cross-refinement variants compared in the component ablation:
/// full pipeline, feedback only, suggestion only.
pub fn ablation_configs(base: &RunConfig) -> Vec<RunConfig> {
    [
        PipelineMode::CrossRefine,
        PipelineMode::AblateFeedbackOnly,
        PipelineMode::AblateSuggestionOnly,
    ]
    .into_iter()
    .map(|mode| RunConfig { mode, ..base.clone() })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRoles {
    pub generator: String,
    pub critic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub dataset_path: String,
    pub dataset_id: String,
    pub mode: PipelineMode,
    pub roles: ManifestRoles,
    pub started_at: String,
    pub ended_at: String,
    pub trace_file: String,
    pub instances: usize,
    pub written: usize,
    pub failed: usize,
    /// Stopped before every instance was written: interrupted, or halted by
    /// fail-fast.
    pub cancelled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub manifest_path: PathBuf,
    pub trace_path: PathBuf,
    pub manifest: RunManifest,
}

impl RunSummary {
    /// Whether the run should end with a failing exit status.
    pub fn should_fail(&self, fail_fast: bool) -> bool {
        fail_fast && self.manifest.failed > 0
    }
}

/// Everything loaded from disk for a run, before any backend exists.
pub struct Prepared {
    pub instances: Vec<TaskInstance>,
    pub generate_demos: DemoStore,
    pub refine_demos: DemoStore,
    pub templates: TemplateSet,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, ExperimentError> {
    config.validate()?;
    let mut instances = load_instances(
        &config.dataset.path,
        config.dataset.schema_kind,
        LoadOptions {
            language: config.dataset.language,
        },
    )?;
    if let Some(max) = config.limits.max_instances {
        instances.truncate(max);
    }
    let templates = match &config.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir, config.dataset.schema_kind, config.dataset.language)?,
        None => TemplateSet::builtin(config.dataset.schema_kind, config.dataset.language),
    };
    Ok(Prepared {
        instances,
        generate_demos: load_demo_store(&config.demos.generate_store)?,
        refine_demos: load_demo_store(&config.demos.refine_store)?,
        templates,
    })
}

/// Run with backends built from the config. Stops early when `cancel` is
/// set; instances already started still finish and are written.
pub fn run_experiment(config: &RunConfig, cancel: &AtomicBool) -> Result<RunSummary, ExperimentError> {
    let prepared = prepare(config)?;
    let generator = config.roles.generator.build()?;
    let critic = config.critic().build()?;
    run_prepared(config, &prepared, generator.as_ref(), critic.as_ref(), cancel)
}

/// Run with caller-supplied backends. The backend configs in `config` still
/// supply context budgets and retry policy.
pub fn run_prepared(
    config: &RunConfig,
    prepared: &Prepared,
    generator: &dyn ChatBackend,
    critic: &dyn ChatBackend,
    cancel: &AtomicBool,
) -> Result<RunSummary, ExperimentError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    fs::create_dir_all(&config.output_dir).map_err(|e| io_err(&config.output_dir, e))?;
    let trace_path = config.trace_path();
    let mut writer = TraceWriter::create(&trace_path).map_err(|e| io_err(&trace_path, e))?;

    let pipeline = config.pipeline_config();
    let critic_cfg = &config.critic().backend;
    let refinery = Refinery {
        generator: Role::new(generator, &config.roles.generator.backend),
        critic: Role::new(critic, critic_cfg),
        templates: &prepared.templates,
        generate_demos: &prepared.generate_demos,
        refine_demos: &prepared.refine_demos,
        config: &pipeline,
    };
    let dataset_id = config.dataset.dataset_id();
    let instances = &prepared.instances;
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = config.limits.worker_cap.min(instances.len()).max(1);
    let mut failed = 0;
    let mut write_error = None;

    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, PipelineTrace)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (refinery, next, stop, dataset_id) = (&refinery, &next, &stop, &dataset_id);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) || cancel.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(instance) = instances.get(i) else { break };
                let trace = refinery.run_instance(instance, dataset_id);
                if trace.is_failed() && config.fail_fast {
                    stop.store(true, Ordering::SeqCst);
                }
                if tx.send((i, trace)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Single appender: buffer out-of-order results, write in dataset order.
        let mut pending: HashMap<usize, PipelineTrace> = HashMap::new();
        let mut cursor = 0;
        for (i, trace) in rx {
            pending.insert(i, trace);
            while let Some(trace) = pending.remove(&cursor) {
                if trace.is_failed() {
                    log::warn!(
                        "instance {} failed: {}",
                        trace.instance_id,
                        trace.error.as_ref().map_or("", |e| e.message.as_str())
                    );
                    failed += 1;
                }
                if write_error.is_none() {
                    if let Err(e) = writer.append(&trace) {
                        write_error = Some(io_err(&trace_path, e));
                        stop.store(true, Ordering::SeqCst);
                    }
                }
                cursor += 1;
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let written = writer.written();
    let manifest = RunManifest {
        config_hash: config.hash(),
        dataset_path: config.dataset.path.display().to_string(),
        dataset_id,
        mode: config.mode,
        roles: ManifestRoles {
            generator: config.roles.generator.backend.model_id.clone(),
            critic: if config.mode == PipelineMode::SelfRefine {
                config.roles.generator.backend.model_id.clone()
            } else {
                critic_cfg.model_id.clone()
            },
        },
        started_at,
        ended_at: chrono::Utc::now().to_rfc3339(),
        trace_file: trace_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        instances: instances.len(),
        written,
        failed,
        cancelled: written < instances.len(),
    };
    let manifest_path = config.manifest_path();
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| io_err(&manifest_path, e))?;
    Ok(RunSummary {
        manifest_path,
        trace_path,
        manifest,
    })
}

fn group_key(trace: &PipelineTrace) -> GroupKey {
    GroupKey {
        generator_id: trace.roles.generator.clone(),
        critic_id: trace.roles.critic.clone(),
        dataset_id: trace.dataset_id.clone(),
        mode: trace.mode,
    }
}

/// Score final explanations per configuration against gold explanations.
/// Failed traces are skipped. `instances` supplies the references by id.
pub fn score_traces(
    traces: &[PipelineTrace],
    instances: &[TaskInstance],
    metric_ids: &[String],
    scorer: &dyn Scorer,
) -> Result<Vec<ScoreReport>, ExperimentError> {
    let gold: HashMap<&str, &TaskInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut groups: BTreeMap<GroupKey, Vec<&PipelineTrace>> = BTreeMap::new();
    for t in traces.iter().filter(|t| !t.is_failed()) {
        groups.entry(group_key(t)).or_default().push(t);
    }
    let mut reports = Vec::new();
    for (key, group) in groups {
        let mut candidates = Vec::new();
        let mut references = Vec::new();
        let mut sources = Vec::new();
        let mut language = Language::En;
        for t in &group {
            let inst = gold
                .get(t.instance_id.as_str())
                .ok_or_else(|| ExperimentError::Config(format!("no dataset instance for trace `{}`", t.instance_id)))?;
            language = inst.language;
            candidates.push(t.final_explanation.clone());
            references.push(inst.gold_explanation.clone());
            sources.push(t.input_text.clone());
        }
        for metric in metric_ids {
            let request = ScoreRequest::new(metric.clone(), candidates.clone())
                .with_references(references.clone())
                .with_sources(sources.clone())
                .with_language(language);
            let scores = scorer.score(&request)?;
            reports.push(ScoreReport::new(metric.clone(), scores, key.clone())?);
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAnalysis {
    pub group: GroupKey,
    pub traces: usize,
    pub failed: usize,
    pub refined: usize,
    pub filter_pass: usize,
    pub languages: LanguageDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityReport>,
}

/// Per-configuration summary of a trace set: sample-filter pass counts
/// (question = rendered input), language shares of final explanations, and
/// suggestion-influence similarity where suggestions exist.
pub fn analyze_traces(
    traces: &[PipelineTrace],
    embedder: &dyn Embedder,
    criteria: &FilterCriteria,
) -> Result<Vec<GroupAnalysis>, ExperimentError> {
    criteria.validate()?;
    let similarity = similarity_by_group(traces, embedder)?;
    let mut groups: BTreeMap<GroupKey, Vec<&PipelineTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(group_key(t)).or_default().push(t);
    }
    let mut out = Vec::new();
    for (key, group) in groups {
        let ok: Vec<&&PipelineTrace> = group.iter().filter(|t| !t.is_failed()).collect();
        let mut filter_pass = 0;
        for t in &ok {
            match passes_filters(&t.input_text, &t.final_explanation, criteria, embedder) {
                Ok(v) if v.passed => filter_pass += 1,
                Ok(_) | Err(AnalysisError::EmptyText) => {}
                Err(e) => return Err(e.into()),
            }
        }
        let labels: Vec<DetectedLanguage> = ok.iter().map(|t| detect_language(&t.final_explanation)).collect();
        let languages = if labels.is_empty() {
            LanguageDistribution {
                german_pct: 0.0,
                english_pct: 0.0,
                other_pct: 0.0,
            }
        } else {
            LanguageDistribution::from_labels(&labels)?
        };
        out.push(GroupAnalysis {
            similarity: similarity.get(&key).copied(),
            traces: group.len(),
            failed: group.len() - ok.len(),
            refined: ok.iter().filter(|t| t.refinement_ran()).count(),
            filter_pass,
            languages,
            group: key,
        });
    }
    Ok(out)
}
