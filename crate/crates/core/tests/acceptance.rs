//! Acceptance suite. Runs every primary criterion, prints one PASS/FAIL line
//! each, and exits nonzero if any fails. Needs no network: model calls are
//! scripted and the scorer stub listens on localhost.

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

use crossrefine::analysis::{
    detect_language, format_language_table, krippendorff_alpha, passes_filters, similarity_report, AlphaLevel,
    DetectedLanguage, Dimension, FilterCriteria, LanguageDistribution, RatingMatrix,
};
use crossrefine::backend::{
    AttemptError, BackendConfig, ChatBackend, FnBackend, InitialStyle, SimulatedModel,
};
use crossrefine::corpus::{load_instances, Language, LoadOptions, TaskInstance, TaskKind};
use crossrefine::experiment::{run_experiment, RunConfig};
use crossrefine::metrics::{Embedder, EmbeddingVector, GroupKey, HttpScorer, MetricsError, ScoreRequest, Scorer};
use crossrefine::prompting::{load_demo_store, DemoStore, TemplateSet};
use crossrefine::refinery::{PipelineConfig, PipelineMode, PipelineTrace, Refinery, Role, TraceRoles};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
/// (metric id, language, expected error, description)
type StubCase = (&'static str, Language, fn(&MetricsError) -> bool, &'static str);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

const SAMPLES: [(&str, TaskKind, Language); 4] = [
    ("ecqa", TaskKind::CommonsenseQa, Language::En),
    ("esnli", TaskKind::Nli, Language::En),
    ("healthfc", TaskKind::FactCheck, Language::En),
    ("healthfc", TaskKind::FactCheck, Language::De),
];

fn sample(name: &str, kind: TaskKind, language: Language) -> (Vec<TaskInstance>, DemoStore) {
    let instances = load_instances(
        crate_dir().join(format!("data/samples/{name}.jsonl")),
        kind,
        LoadOptions { language },
    )
    .unwrap();
    let demos = load_demo_store(crate_dir().join(format!("data/fixer/{name}.jsonl"))).unwrap();
    (instances, demos)
}

/// The part of a prompt after the demonstrations: the instance itself.
fn instance_block(prompt: &str) -> &str {
    prompt.rfind("following instance.").map_or(prompt, |i| &prompt[i..])
}

// ---------------------------------------------------------------------------

fn golden_replay() -> Outcome {
    let start = Instant::now();
    let root = crate_dir().join("tests/fixtures/golden");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    let mut kinds = std::collections::BTreeSet::new();
    for entry in fs::read_dir(&root).map_err(|e| e.to_string())? {
        let dir = entry.map_err(|e| e.to_string())?.path();
        let base = RunConfig::load(dir.join("run.json")).map_err(|e| e.to_string())?;
        kinds.insert(base.dataset.schema_kind);
        for mode in PipelineMode::ALL {
            let mut config = base.clone();
            config.mode = mode;
            config.output_dir = out.path().join(dir.file_name().unwrap());
            let summary = run_experiment(&config, &AtomicBool::new(false)).map_err(|e| e.to_string())?;
            let got = fs::read(&summary.trace_path).map_err(|e| e.to_string())?;
            let want = fs::read(dir.join(format!("traces_{mode}.jsonl"))).map_err(|e| e.to_string())?;
            ensure!(got == want, "{} {mode}: traces differ from golden", dir.display());
            ensure!(summary.manifest.failed == 0, "{} {mode}: failures in replay", dir.display());
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(kinds.len() == 3, "fixtures cover {} task kinds", kinds.len());
    ensure!(compared >= 12, "only {compared} trace files compared");
    ensure!(elapsed.as_secs_f64() < 5.0, "replay took {elapsed:?}");
    Ok(format!("{compared} trace files byte-identical, {:.2}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------

fn run_with(
    mode: PipelineMode,
    instance: &TaskInstance,
    demos: &DemoStore,
    generator: &dyn ChatBackend,
    critic: &dyn ChatBackend,
    tweak: impl FnOnce(&mut PipelineConfig),
) -> PipelineTrace {
    let gen_cfg = BackendConfig::new(generator.model_id());
    let critic_cfg = BackendConfig::new(critic.model_id());
    let templates = TemplateSet::builtin(instance.task_kind, instance.language);
    let mut config = PipelineConfig::new(mode);
    tweak(&mut config);
    let refinery = Refinery {
        generator: Role::new(generator, &gen_cfg),
        critic: Role::new(critic, &critic_cfg),
        templates: &templates,
        generate_demos: demos,
        refine_demos: demos,
        config: &config,
    };
    refinery.run_instance(instance, "acceptance")
}

fn eq_dependency() -> Outcome {
    let generator = SimulatedModel::new("gen");
    let critic = SimulatedModel::new("critic").with_initial(InitialStyle::Reasoned);
    let mut runs = 0;
    let mut violations = Vec::new();
    for (name, kind, lang) in SAMPLES {
        let (instances, demos) = sample(name, kind, lang);
        for inst in &instances {
            for mode in PipelineMode::ALL {
                let t = run_with(mode, inst, &demos, &generator, &critic, |_| {});
                runs += 1;
                if t.is_failed() {
                    violations.push(format!("{} {mode}: failed", inst.id));
                    continue;
                }
                let suggested = t.prompts.contains_key("suggest") || t.suggestion.is_some();
                if mode == PipelineMode::AblateFeedbackOnly && suggested {
                    violations.push(format!("{} {mode}: suggestion produced", inst.id));
                }
                let mut check = |stage: &str, must: &[&str], must_not: &[&str]| {
                    let Some(prompt) = t.prompts.get(stage) else {
                        violations.push(format!("{} {mode}: no `{stage}` prompt", inst.id));
                        return;
                    };
                    let block = instance_block(prompt);
                    for m in must {
                        if !block.contains(m) {
                            violations.push(format!("{} {mode} {stage}: missing {m:?}", inst.id));
                        }
                    }
                    for m in must_not {
                        if block.contains(m) {
                            violations.push(format!("{} {mode} {stage}: contains {m:?}", inst.id));
                        }
                    }
                };
                let input = t.input_text.as_str();
                check("generate", &[input], &[]);
                if mode == PipelineMode::SelfRefine {
                    let fb = t.rounds[0].feedback.as_str();
                    check("self_refine_feedback.1", &[input, &t.initial], &[]);
                    check("self_refine_refine.1", &[input, &t.initial, fb], &[]);
                    continue;
                }
                let fb = t.feedback.clone().unwrap_or_default();
                let sug = t.suggestion.clone().unwrap_or_default();
                check("assess", &[input, &t.initial], &[]);
                check("feedback", &[input, &t.initial], &[]);
                match mode {
                    PipelineMode::CrossRefine => {
                        check("suggest", &[input, &t.initial, &fb], &[]);
                        check("refine", &[input, &t.initial, &fb, &sug], &[]);
                    }
                    PipelineMode::AblateFeedbackOnly => {
                        check("refine", &[input, &t.initial, &fb], &["Suggested explanation:"]);
                    }
                    PipelineMode::AblateSuggestionOnly => {
                        check("suggest", &[input, &t.initial, &fb], &[]);
                        check("refine", &[input, &t.initial, &sug], &[&fb, "Feedback:"]);
                    }
                    PipelineMode::SelfRefine => unreachable!(),
                }
            }
        }
    }
    ensure!(runs >= 20, "only {runs} runs");
    ensure!(violations.is_empty(), "{} violations, first: {}", violations.len(), violations[0]);
    Ok(format!("{runs} runs, 0 violations"))
}

// ---------------------------------------------------------------------------

fn short_circuit() -> Outcome {
    let negatives = [
        "No. The explanation is fine.",
        "no",
        "Nein, keine Verbesserung nötig.",
        "The explanation does not need improvement.",
        "It needs no improvement at all.",
    ];
    let mut cases = 0;
    for (name, kind, lang) in SAMPLES {
        let (instances, demos) = sample(name, kind, lang);
        for (i, inst) in instances.iter().enumerate() {
            let verdict = negatives[i % negatives.len()];
            for mode in [
                PipelineMode::CrossRefine,
                PipelineMode::AblateFeedbackOnly,
                PipelineMode::AblateSuggestionOnly,
            ] {
                let gen_calls = Arc::new(AtomicUsize::new(0));
                let critic_calls = Arc::new(AtomicUsize::new(0));
                let g = gen_calls.clone();
                let generator = FnBackend::new("gen", move |_| {
                    g.fetch_add(1, Ordering::SeqCst);
                    Ok("A first explanation.\nAnswer: x".into())
                });
                let c = critic_calls.clone();
                let critic = FnBackend::new("critic", move |_| {
                    c.fetch_add(1, Ordering::SeqCst);
                    Ok(verdict.to_string())
                });
                let t = run_with(mode, inst, &demos, &generator, &critic, |_| {});
                ensure!(!t.is_failed(), "{} {mode}: {:?}", inst.id, t.error);
                ensure!(t.final_explanation == t.initial, "{} {mode}: final != initial", inst.id);
                ensure!(
                    t.verdict.as_ref().is_some_and(|v| !v.needs_improvement),
                    "{} {mode}: verdict {verdict:?} not negative",
                    inst.id
                );
                ensure!(
                    t.feedback.is_none() && t.suggestion.is_none() && t.refined.is_none(),
                    "{} {mode}: later stages present",
                    inst.id
                );
                let keys: Vec<&str> = t.prompts.keys().map(String::as_str).collect();
                ensure!(keys == ["assess", "generate"], "{} {mode}: stages {keys:?}", inst.id);
                ensure!(
                    gen_calls.load(Ordering::SeqCst) == 1 && critic_calls.load(Ordering::SeqCst) == 1,
                    "{} {mode}: extra backend calls",
                    inst.id
                );
                cases += 1;
            }
        }
    }
    Ok(format!("{cases}/{cases} negative verdicts short-circuited"))
}

// ---------------------------------------------------------------------------

/// Gives the question one vector and everything else another.
struct PairEmbedder {
    question: String,
    question_vec: Vec<f64>,
    other_vec: Vec<f64>,
}

impl Embedder for PairEmbedder {
    fn dim(&self) -> usize {
        self.question_vec.len()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError> {
        Ok(EmbeddingVector::new(if text == self.question {
            self.question_vec.clone()
        } else {
            self.other_vec.clone()
        }))
    }
}

/// `n` tokens: distinct words, then the first `dup + 1` repeated, which
/// duplicates exactly `dup` bigrams. `digits` of the distinct words are
/// numbers.
fn build_text(n: usize, dup: usize, digits: usize) -> String {
    let distinct = n - if dup > 0 { dup + 1 } else { 0 };
    assert!(distinct >= dup + 1 + digits);
    let mut words: Vec<String> = (0..distinct)
        .map(|i| {
            let mut w = String::from("w");
            let mut k = i;
            loop {
                w.push((b'a' + (k % 26) as u8) as char);
                k /= 26;
                if k == 0 {
                    break;
                }
            }
            w
        })
        .collect();
    for j in 0..digits {
        words[distinct - 1 - j] = format!("{}", 100 + j);
    }
    if dup > 0 {
        let head: Vec<String> = words[..dup + 1].to_vec();
        words.extend(head);
    }
    words.join(" ")
}

struct FilterCase {
    name: &'static str,
    tokens: usize,
    dup: usize,
    digits: usize,
    /// Question and explanation vectors.
    sim: (Vec<f64>, Vec<f64>),
    expect: [bool; 4],
}

fn filter_suite() -> Outcome {
    let exact = |s: f64| (vec![1.0, 0.0], vec![s, (1.0 - s * s).sqrt()]);
    // 5·(3,4)/sqrt(25·25) is exactly 0.6.
    let six = (vec![5.0, 0.0], vec![3.0, 4.0]);
    let one = (vec![1.0, 2.0], vec![1.0, 2.0]);
    let t = true;
    let f = false;
    let cases = vec![
        FilterCase { name: "19 tokens", tokens: 19, dup: 0, digits: 0, sim: one.clone(), expect: [f, t, t, t] },
        FilterCase { name: "20 tokens", tokens: 20, dup: 0, digits: 0, sim: one.clone(), expect: [t, t, t, t] },
        FilterCase { name: "35 tokens", tokens: 35, dup: 0, digits: 0, sim: one.clone(), expect: [t, t, t, t] },
        FilterCase { name: "50 tokens", tokens: 50, dup: 0, digits: 0, sim: one.clone(), expect: [t, t, t, t] },
        FilterCase { name: "51 tokens", tokens: 51, dup: 0, digits: 0, sim: one.clone(), expect: [f, t, t, t] },
        FilterCase { name: "5 tokens", tokens: 5, dup: 0, digits: 0, sim: one.clone(), expect: [f, t, t, t] },
        // 21 tokens, 4 of 20 bigrams repeated: 16/20 = 0.80.
        FilterCase { name: "bigram 0.80", tokens: 21, dup: 4, digits: 0, sim: one.clone(), expect: [t, t, t, t] },
        // 25 tokens, 5 of 24 repeated: 19/24 = 0.79.
        FilterCase { name: "bigram 0.79", tokens: 25, dup: 5, digits: 0, sim: one.clone(), expect: [t, f, t, t] },
        // 41 tokens, 8 of 40 repeated: 32/40 = 0.80.
        FilterCase { name: "bigram 0.80 long", tokens: 41, dup: 8, digits: 0, sim: one.clone(), expect: [t, t, t, t] },
        // 41 tokens, 9 of 40 repeated: 31/40 = 0.775.
        FilterCase { name: "bigram 0.775", tokens: 41, dup: 9, digits: 0, sim: one.clone(), expect: [t, f, t, t] },
        FilterCase { name: "bigram 0.95", tokens: 21, dup: 1, digits: 0, sim: one.clone(), expect: [t, t, t, t] },
        // 6 of 20 digit tokens: 0.30.
        FilterCase { name: "digits 0.30", tokens: 20, dup: 0, digits: 6, sim: one.clone(), expect: [t, t, t, t] },
        // 9 of 29: 0.31.
        FilterCase { name: "digits 0.31", tokens: 29, dup: 0, digits: 9, sim: one.clone(), expect: [t, t, f, t] },
        // 12 of 40: 0.30.
        FilterCase { name: "digits 0.30 long", tokens: 40, dup: 0, digits: 12, sim: one.clone(), expect: [t, t, t, t] },
        // 13 of 40: 0.325.
        FilterCase { name: "digits 0.325", tokens: 40, dup: 0, digits: 13, sim: one.clone(), expect: [t, t, f, t] },
        FilterCase { name: "digits 0.05", tokens: 20, dup: 0, digits: 1, sim: one.clone(), expect: [t, t, t, t] },
        FilterCase { name: "similarity 0.60", tokens: 30, dup: 0, digits: 0, sim: six.clone(), expect: [t, t, t, t] },
        FilterCase { name: "similarity 0.59", tokens: 30, dup: 0, digits: 0, sim: exact(0.59), expect: [t, t, t, f] },
        FilterCase { name: "similarity 0.61", tokens: 30, dup: 0, digits: 0, sim: exact(0.61), expect: [t, t, t, t] },
        FilterCase { name: "similarity 0", tokens: 30, dup: 0, digits: 0, sim: (vec![1.0, 0.0], vec![0.0, 1.0]), expect: [t, t, t, f] },
        FilterCase { name: "similarity -1", tokens: 30, dup: 0, digits: 0, sim: (vec![1.0, 0.0], vec![-1.0, 0.0]), expect: [t, t, t, f] },
        // 19 tokens, 4 of 18 repeated: 14/18.
        FilterCase { name: "19 tokens, 0.78 bigrams", tokens: 19, dup: 4, digits: 0, sim: one.clone(), expect: [f, f, t, t] },
        FilterCase { name: "51 tokens, many digits", tokens: 51, dup: 0, digits: 20, sim: one.clone(), expect: [f, t, f, t] },
        FilterCase { name: "all four fail", tokens: 19, dup: 4, digits: 6, sim: exact(0.59), expect: [f, f, f, f] },
        // 16/20 bigrams, 6/21 digits, similarity 0.6.
        FilterCase { name: "bigram, digit and similarity bounds together", tokens: 21, dup: 4, digits: 6, sim: six.clone(), expect: [t, t, t, t] },
        // 40/49 bigrams, 15/50 digits.
        FilterCase { name: "50 tokens, 0.82 bigrams, 0.30 digits", tokens: 50, dup: 9, digits: 15, sim: six, expect: [t, t, t, t] },
    ];
    let criteria = FilterCriteria::default();
    for case in &cases {
        let text = build_text(case.tokens, case.dup, case.digits);
        let embedder = PairEmbedder {
            question: "the question".into(),
            question_vec: case.sim.0.clone(),
            other_vec: case.sim.1.clone(),
        };
        let v = passes_filters("the question", &text, &criteria, &embedder).map_err(|e| e.to_string())?;
        let got = [v.length.passed, v.bigram_ratio.passed, v.digit_ratio.passed, v.question_similarity.passed];
        ensure!(got == case.expect, "{}: got {got:?}, want {:?} ({v:?})", case.name, case.expect);
        ensure!(v.passed == case.expect.iter().all(|b| *b), "{}: overall verdict", case.name);
    }
    ensure!(cases.len() >= 24, "only {} cases", cases.len());
    Ok(format!("{} boundary cases classified as expected", cases.len()))
}

// ---------------------------------------------------------------------------

/// Alpha straight from the definition: every ordered pair of values within
/// a unit is one observed coincidence weighted 1/(m-1); expected
/// disagreement averages over all ordered pairs of distinct pairable values.
fn brute_force_alpha(rows: &[Vec<Option<u8>>], level: AlphaLevel) -> Option<f64> {
    let items = rows[0].len();
    let units: Vec<Vec<u8>> = (0..items)
        .map(|j| rows.iter().filter_map(|r| r[j]).collect::<Vec<u8>>())
        .filter(|u| u.len() >= 2)
        .collect();
    if units.len() < 2 {
        return None;
    }
    let all: Vec<u8> = units.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let count = |v: u8| all.iter().filter(|x| **x == v).count() as f64;
    let delta = |a: u8, b: u8| -> f64 {
        if a == b {
            return 0.0;
        }
        match level {
            AlphaLevel::Nominal => 1.0,
            AlphaLevel::Interval => (a as f64 - b as f64).powi(2),
            AlphaLevel::Ordinal => {
                let (lo, hi) = (a.min(b), a.max(b));
                let between: f64 = (lo..=hi).map(count).sum();
                (between - (count(lo) + count(hi)) / 2.0).powi(2)
            }
        }
    };
    let mut d_o = 0.0;
    for u in &units {
        let w = 1.0 / (u.len() - 1) as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    d_o += w * delta(u[i], u[j]);
                }
            }
        }
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j {
                d_e += delta(all[i], all[j]);
            }
        }
    }
    d_e /= n * (n - 1.0);
    if d_o == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - d_o / d_e)
}

fn alpha_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 50 {
        let raters = rng.gen_range(2..=4);
        let items = rng.gen_range(3..=10);
        let (dim, level) = if checked % 2 == 0 {
            (Dimension::Faithfulness, AlphaLevel::Nominal)
        } else {
            (Dimension::Coherence, AlphaLevel::Ordinal)
        };
        let (lo, hi) = dim.value_range();
        let rows: Vec<Vec<Option<u8>>> = (0..raters)
            .map(|_| {
                (0..items)
                    .map(|_| (!rng.gen_bool(0.15)).then(|| rng.gen_range(lo..=hi)))
                    .collect()
            })
            .collect();
        let Some(want) = brute_force_alpha(&rows, level) else { continue };
        if !want.is_finite() {
            // Every pairable value identical but with gaps: skip, covered below.
            continue;
        }
        let m = RatingMatrix::from_values(dim, rows).map_err(|e| e.to_string())?;
        let got = krippendorff_alpha(&m, level).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        ensure!((got - want).abs() < 1e-9, "matrix {checked}: got {got}, oracle {want}");
        checked += 1;
    }
    let mut perfect = 0;
    for raters in 2..=4 {
        for items in [3, 6, 10] {
            let row: Vec<Option<u8>> = (0..items).map(|i| Some(1 + (i % 5) as u8)).collect();
            let m = RatingMatrix::from_values(Dimension::Coherence, vec![row; raters]).map_err(|e| e.to_string())?;
            for level in [AlphaLevel::Nominal, AlphaLevel::Ordinal, AlphaLevel::Interval] {
                let a = krippendorff_alpha(&m, level).map_err(|e| e.to_string())?;
                ensure!(a == 1.0, "perfect agreement gave {a}");
                perfect += 1;
            }
        }
    }
    Ok(format!("{checked} random matrices within {worst:.1e}; {perfect} perfect-agreement cases = 1.0"))
}

// ---------------------------------------------------------------------------

struct TableEmbedder(HashMap<&'static str, [f64; 2]>);

impl Embedder for TableEmbedder {
    fn dim(&self) -> usize {
        2
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError> {
        Ok(EmbeddingVector::new(self.0[text].to_vec()))
    }
}

fn trace(id: &str, initial: &str, suggestion: &str, refined: &str) -> PipelineTrace {
    let roles = TraceRoles {
        generator: "g".into(),
        critic: "c".into(),
    };
    let mut t = PipelineTrace::new(id, "d", PipelineMode::CrossRefine, roles);
    t.initial = initial.into();
    t.suggestion = Some(suggestion.into());
    t.refined = Some(refined.into());
    t.final_explanation = refined.into();
    t
}

fn similarity() -> Outcome {
    let embedder = TableEmbedder(HashMap::from([
        ("x", [1.0, 0.0]),
        ("y", [0.0, 1.0]),
        ("a", [3.0, 4.0]),
        ("b", [4.0, 3.0]),
        ("neg", [-1.0, 0.0]),
        ("diag", [1.0, 1.0]),
    ]));
    // (initial, suggestion, refined) with cosines worked out by hand:
    //   cos(x,x)=1, cos(x,y)=0, cos(x,a)=3/5, cos(a,b)=24/25, cos(x,neg)=-1,
    //   cos(diag,x)=1/sqrt2, cos(a,diag)=7/(5 sqrt2).
    let traces = vec![
        trace("t1", "x", "a", "a"),      // init 0.6,        sug 1
        trace("t2", "y", "x", "x"),      // init 0,          sug 1
        trace("t3", "b", "x", "a"),      // init 0.96,       sug 0.6
        trace("t4", "neg", "diag", "x"), // init -1,         sug 1/sqrt2
        trace("t5", "diag", "y", "a"),   // init 7/(5sqrt2), sug 0.8
    ];
    let s2 = 2f64.sqrt();
    let want_init = (0.6 + 0.0 + 0.96 - 1.0 + 7.0 / (5.0 * s2)) / 5.0;
    let want_sug = (1.0 + 1.0 + 0.6 + 1.0 / s2 + 0.8) / 5.0;
    let r = similarity_report(&traces, &embedder).map_err(|e| e.to_string())?;
    ensure!((r.init_sim - want_init).abs() < 1e-9, "init_sim {} vs {want_init}", r.init_sim);
    ensure!((r.sug_sim - want_sug).abs() < 1e-9, "sug_sim {} vs {want_sug}", r.sug_sim);
    ensure!((-1.0..=1.0).contains(&r.init_sim) && (-1.0..=1.0).contains(&r.sug_sim), "out of range");

    let degenerate: Vec<PipelineTrace> = [("x", "a"), ("y", "b"), ("neg", "diag"), ("a", "x"), ("b", "y")]
        .iter()
        .enumerate()
        .map(|(i, (init, sug))| trace(&format!("d{i}"), init, sug, sug))
        .collect();
    let d = similarity_report(&degenerate, &embedder).map_err(|e| e.to_string())?;
    ensure!(d.sug_sim == 1.0, "degenerate sug_sim {}", d.sug_sim);
    Ok(format!(
        "Init. {:.4} / Sug. {:.4} match hand values; refined = suggestion gives Sug. {}",
        r.init_sim, r.sug_sim, d.sug_sim
    ))
}

// ---------------------------------------------------------------------------

fn language() -> Outcome {
    let text = fs::read_to_string(crate_dir().join("data/langid/eval.tsv")).map_err(|e| e.to_string())?;
    let mut total = 0;
    let mut correct = 0;
    let mut labels = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (label, sentence) = line.split_once('\t').ok_or("bad eval line")?;
        let want = match label {
            "en" => DetectedLanguage::En,
            "de" => DetectedLanguage::De,
            other => return Err(format!("unknown label {other}")),
        };
        let got = detect_language(sentence);
        total += 1;
        correct += usize::from(got == want);
        labels.push(got);
    }
    ensure!(total == 200, "eval corpus has {total} sentences");
    let accuracy = correct as f64 / total as f64;
    ensure!(accuracy >= 0.95, "accuracy {accuracy}");

    let d = LanguageDistribution::from_labels(&labels).map_err(|e| e.to_string())?;
    let sum = d.german_pct + d.english_pct + d.other_pct;
    ensure!((sum - 100.0).abs() <= 0.01, "percentages sum to {sum}");
    let mut shuffled = labels.clone();
    shuffled.reverse();
    let d2 = LanguageDistribution::from_labels(&shuffled).map_err(|e| e.to_string())?;
    ensure!(d == d2, "distribution depends on order");
    let key = GroupKey {
        generator_id: "eval".into(),
        critic_id: "corpus".into(),
        dataset_id: "langid".into(),
        mode: PipelineMode::CrossRefine,
    };
    let table = format_language_table("Labeled corpus", &[(key, d)]);
    ensure!(table.lines().count() == 3, "table:\n{table}");
    ensure!(
        table.lines().nth(1).unwrap().split_whitespace().collect::<Vec<_>>()
            == ["Generator", "Critic", "German", "English", "Other"],
        "header:\n{table}"
    );
    println!("{table}");
    Ok(format!("{correct}/{total} correct; shares sum to {sum:.2}"))
}

// ---------------------------------------------------------------------------

/// Localhost scorer stub. Scores are `index + len(candidate)/1000` so order
/// is observable; special metric ids trigger protocol faults.
fn start_stub() -> (String, Arc<AtomicUsize>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for mut request in server.incoming_requests() {
            counter.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            std::io::Read::read_to_string(request.as_reader(), &mut body).unwrap();
            let req: serde_json::Value = serde_json::from_str(&body).unwrap();
            let metric = req["metric_id"].as_str().unwrap_or_default().to_string();
            let language = req["language"].as_str().unwrap_or_default();
            let n = req["candidates"].as_array().map_or(0, Vec::len);
            let mut scores: Vec<f64> = req["candidates"]
                .as_array()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, c)| i as f64 + c.as_str().unwrap().len() as f64 / 1000.0)
                .collect();
            let (status, payload) = match metric.as_str() {
                "bleurt" | "tigerscore" if language == "de" => (422, "{\"detail\":\"English only\"}".to_string()),
                "short" => {
                    scores.pop();
                    (200, serde_json::json!({"metric_id": metric, "scores": scores}).to_string())
                }
                "tigerscore" => {
                    let s: Vec<f64> = (0..n).map(|i| if i == n / 2 { 0.5 } else { -1.0 }).collect();
                    (200, serde_json::json!({"metric_id": metric, "scores": s}).to_string())
                }
                "crash" => (500, "boom".to_string()),
                "reject" => (400, "bad schema".to_string()),
                _ => (200, serde_json::json!({"metric_id": metric, "scores": scores}).to_string()),
            };
            let _ = request.respond(tiny_http::Response::from_string(payload).with_status_code(status));
        }
    });
    (endpoint, hits)
}

fn scorer_protocol() -> Outcome {
    let (endpoint, hits) = start_stub();
    let scorer = HttpScorer::new(&endpoint);
    let candidates: Vec<String> = (0..100).map(|i| "c".repeat(1 + i % 7)).collect();
    let references: Vec<String> = (0..100).map(|i| format!("ref {i}")).collect();

    let request = ScoreRequest::new("bertscore", candidates.clone()).with_references(references.clone());
    let scores = scorer.score(&request).map_err(|e| e.to_string())?;
    ensure!(scores.len() == 100, "{} scores", scores.len());
    for (i, (s, c)) in scores.iter().zip(&candidates).enumerate() {
        ensure!(*s == i as f64 + c.len() as f64 / 1000.0, "score {i} out of order");
    }

    let before = hits.load(Ordering::SeqCst);
    let bad = ScoreRequest::new("bertscore", candidates.clone()).with_references(references[..99].to_vec());
    ensure!(
        matches!(scorer.score(&bad), Err(MetricsError::LengthMismatch { field: "references", expected: 100, got: 99 })),
        "reference length mismatch not caught"
    );
    let bad = ScoreRequest::new("bartscore", candidates.clone()).with_sources(vec!["s".into()]);
    ensure!(
        matches!(scorer.score(&bad), Err(MetricsError::LengthMismatch { field: "sources", .. })),
        "source length mismatch not caught"
    );
    ensure!(hits.load(Ordering::SeqCst) == before, "invalid requests reached the server");

    let cases: [StubCase; 5] = [
        ("short", Language::En, |e| matches!(e, MetricsError::Protocol(_)), "short response"),
        ("tigerscore", Language::En, |e| matches!(e, MetricsError::Protocol(_)), "positive tigerscore"),
        ("bleurt", Language::De, |e| matches!(e, MetricsError::Unsupported { .. }), "422"),
        ("crash", Language::En, |e| matches!(e, MetricsError::ScorerUnavailable(_)), "500"),
        ("reject", Language::En, |e| matches!(e, MetricsError::Protocol(_)), "400"),
    ];
    for (metric, lang, expected, what) in cases {
        let req = ScoreRequest::new(metric, candidates.clone()).with_language(lang);
        match scorer.score(&req) {
            Err(e) if expected(&e) => {}
            other => return Err(format!("{what}: got {other:?}")),
        }
    }
    let unreachable = HttpScorer::with_timeout("http://127.0.0.1:9", std::time::Duration::from_secs(2));
    ensure!(
        matches!(unreachable.score(&request), Err(MetricsError::ScorerUnavailable(_))),
        "refused connection not mapped"
    );
    Ok("100-candidate batch ordered; length, bound, 4xx/422/5xx and transport errors mapped".into())
}

// ---------------------------------------------------------------------------

/// Self-refine backend: feedback verdicts come from `verdicts` (by round,
/// last one repeating); refinements return `refine(round)`.
fn self_refine_run(
    verdicts: &'static [&'static str],
    refine: fn(usize) -> String,
    max_iterations: u32,
    stop_on_no_change: bool,
) -> (PipelineTrace, usize, usize) {
    let (instances, demos) = sample("ecqa", TaskKind::CommonsenseQa, Language::En);
    let feedback_calls = Arc::new(AtomicUsize::new(0));
    let refine_calls = Arc::new(AtomicUsize::new(0));
    let (fc, rc) = (feedback_calls.clone(), refine_calls.clone());
    let backend = FnBackend::new("solo", move |prompt: &str| -> Result<String, AttemptError> {
        let last = prompt.trim_end().lines().last().unwrap_or_default();
        Ok(match last {
            "Explanation:" => "initial".into(),
            "Feedback:" => {
                let n = fc.fetch_add(1, Ordering::SeqCst);
                verdicts[n.min(verdicts.len() - 1)].into()
            }
            _ => refine(rc.fetch_add(1, Ordering::SeqCst) + 1),
        })
    });
    let t = run_with(PipelineMode::SelfRefine, &instances[0], &demos, &backend, &backend, |c| {
        c.self_refine.max_iterations = max_iterations;
        c.self_refine.stop_on_no_change = stop_on_no_change;
    });
    let (f, r) = (feedback_calls.load(Ordering::SeqCst), refine_calls.load(Ordering::SeqCst));
    (t, f, r)
}

fn self_refine_control() -> Outcome {
    fn distinct(round: usize) -> String {
        format!("refined {round}")
    }
    fn same(_: usize) -> String {
        "initial".into()
    }
    fn constant(_: usize) -> String {
        "steady".into()
    }

    // Stop as soon as feedback reports no improvement needed.
    let (t, f, r) = self_refine_run(&["No improvement needed."], distinct, 3, true);
    ensure!((f, r, t.rounds.len()) == (1, 0, 1), "immediate stop: {f} feedback, {r} refine");
    ensure!(t.final_explanation == "initial" && t.refined.is_none(), "immediate stop changed text");

    let (t, f, r) = self_refine_run(&["Yes, add detail.", "Yes, more.", "No."], distinct, 5, true);
    ensure!((f, r) == (3, 2), "stop at round 3: {f} feedback, {r} refine");
    ensure!(t.final_explanation == "refined 2", "final {:?}", t.final_explanation);

    // Stop when a refinement returns the text unchanged.
    let (t, f, r) = self_refine_run(&["Yes."], same, 5, true);
    ensure!((f, r, t.rounds.len()) == (1, 1, 1), "no change: {f} feedback, {r} refine");
    let (_, f, r) = self_refine_run(&["Yes."], constant, 5, true);
    ensure!((f, r) == (2, 2), "no change at round 2: {f} feedback, {r} refine");
    let (t, f, r) = self_refine_run(&["Yes."], same, 4, false);
    ensure!((f, r, t.rounds.len()) == (4, 4, 4), "no-change stop disabled: {f}/{r}");

    // Ceiling.
    for max in [1u32, 2, 3, 5, 10] {
        let (t, f, r) = self_refine_run(&["Yes."], distinct, max, true);
        let m = max as usize;
        ensure!((f, r, t.rounds.len()) == (m, m, m), "max {max}: {f} feedback, {r} refine");
        ensure!(t.final_explanation == format!("refined {max}"), "max {max}: final {:?}", t.final_explanation);
    }
    // Unparseable feedback counts as a request to improve.
    let (_, f, r) = self_refine_run(&["Consider the options again."], distinct, 2, true);
    ensure!((f, r) == (2, 2), "unparseable feedback: {f}/{r}");
    for bad in [0u32, 11] {
        let (t, _, _) = self_refine_run(&["Yes."], distinct, bad, true);
        ensure!(t.is_failed(), "max_iterations {bad} accepted");
    }
    Ok("stop-on-no-improvement, stop-on-no-change and ceilings 1..10 exact".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 9] = [
        ("golden-trace replay", golden_replay),
        ("stage conditioning and ablation exclusion", eq_dependency),
        ("short-circuit on negative verdict", short_circuit),
        ("sample filter boundaries", filter_suite),
        ("krippendorff alpha oracle", alpha_oracle),
        ("suggestion similarity report", similarity),
        ("language identification and distribution", language),
        ("scorer protocol conformance", scorer_protocol),
        ("self-refine iteration control", self_refine_control),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
