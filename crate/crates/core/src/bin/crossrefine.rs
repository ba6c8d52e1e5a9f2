use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crossrefine::analysis::{format_language_table, load_ratings, pooled_alpha, FilterCriteria};
use crossrefine::corpus::{load_instances, LoadOptions};
use crossrefine::experiment::{ablation_configs, analyze_traces, run_experiment, score_traces, RunConfig};
use crossrefine::metrics::{format_score_table, HashingEmbedder, HttpScorer};
use crossrefine::refinery::{read_traces, PipelineMode};

/// Generator/critic explanation refinement. Model API keys are read from
/// CROSSREFINE_API_KEY.
#[derive(Parser)]
#[command(name = "crossrefine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one pipeline mode over a dataset.
    Run(RunArgs),
    /// Run the full pipeline and both single-component variants.
    Ablate(RunArgs),
    /// Score final explanations with the external metric service.
    Score(ScoreArgs),
    /// Filter pass rates, language shares, suggestion similarity, rater agreement.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// cross, self, ablate-feedback or ablate-suggestion
    #[arg(long)]
    mode: Option<PipelineMode>,
    #[arg(long)]
    max_instances: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop at the first failed instance and exit nonzero.
    #[arg(long)]
    fail_fast: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Run config naming the dataset with gold explanations.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    scorer_endpoint: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "bertscore,bleurt")]
    metrics: Vec<String>,
    /// Write reports as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    traces: PathBuf,
    /// CSV of rater_id,item_id,dimension,value.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Write the analysis as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(args: &RunArgs) -> Result<RunConfig, String> {
    let mut config = RunConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(n) = args.max_instances {
        config.limits.max_instances = Some(n);
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if args.seed.is_some() {
        config.generation.seed = args.seed;
    }
    config.fail_fast |= args.fail_fast;
    Ok(config)
}

fn run(configs: Vec<RunConfig>, cancel: &AtomicBool) -> Result<bool, String> {
    let mut ok = true;
    for config in configs {
        let summary = run_experiment(&config, cancel).map_err(|e| e.to_string())?;
        let m = &summary.manifest;
        println!(
            "{}: {}/{} written, {} failed -> {}",
            m.mode,
            m.written,
            m.instances,
            m.failed,
            summary.trace_path.display()
        );
        if summary.should_fail(config.fail_fast) {
            ok = false;
            break;
        }
        if m.cancelled {
            break;
        }
    }
    Ok(ok)
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<(), String> {
    let json = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    fs::write(path, json + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

fn score(args: &ScoreArgs) -> Result<(), String> {
    let config = RunConfig::load(&args.config).map_err(|e| e.to_string())?;
    let endpoint = args
        .scorer_endpoint
        .clone()
        .or(config.scorer_endpoint.clone())
        .ok_or("no scorer endpoint given")?;
    let instances = load_instances(
        &config.dataset.path,
        config.dataset.schema_kind,
        LoadOptions {
            language: config.dataset.language,
        },
    )
    .map_err(|e| e.to_string())?;
    let traces = read_traces(&args.traces).map_err(|e| format!("{}: {e}", args.traces.display()))?;
    let reports =
        score_traces(&traces, &instances, &args.metrics, &HttpScorer::new(endpoint)).map_err(|e| e.to_string())?;
    print!("{}", format_score_table(&reports));
    if let Some(out) = &args.out {
        write_json(out, &reports)?;
    }
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<(), String> {
    let traces = read_traces(&args.traces).map_err(|e| format!("{}: {e}", args.traces.display()))?;
    let groups =
        analyze_traces(&traces, &HashingEmbedder::default(), &FilterCriteria::default()).map_err(|e| e.to_string())?;
    for g in &groups {
        println!(
            "{} / {} [{}] on {}: {} traces, {} failed, {} refined, {} pass filters",
            g.group.generator_id, g.group.critic_id, g.group.mode, g.group.dataset_id, g.traces, g.failed, g.refined, g.filter_pass
        );
        if let Some(s) = &g.similarity {
            println!("  suggestion similarity: init {:.4}, sug {:.4}", s.init_sim, s.sug_sim);
        }
    }
    let rows: Vec<_> = groups.iter().map(|g| (g.group.clone(), g.languages)).collect();
    if !rows.is_empty() {
        print!("{}", format_language_table("Final explanations", &rows));
    }
    let mut json = serde_json::json!({ "groups": groups });
    if let Some(path) = &args.ratings {
        let matrices = load_ratings(path).map_err(|e| e.to_string())?;
        let report = pooled_alpha(&matrices).map_err(|e| e.to_string())?;
        println!("pooled alpha: {:.3}", report.pooled);
        for (dim, a) in &report.per_dimension {
            println!("  {dim}: {a:.3}");
        }
        json["agreement"] = serde_json::to_value(&report).map_err(|e| e.to_string())?;
    }
    if let Some(out) = &args.out {
        write_json(out, &json)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cancel = Arc::new(AtomicBool::new(false));
    {
        let cancel = Arc::clone(&cancel);
        if let Err(e) = ctrlc::set_handler(move || cancel.store(true, Ordering::SeqCst)) {
            log::warn!("cannot install interrupt handler: {e}");
        }
    }

    let result = match &cli.command {
        Command::Run(args) => load_config(args).and_then(|c| run(vec![c], &cancel)),
        Command::Ablate(args) => load_config(args).and_then(|c| run(ablation_configs(&c), &cancel)),
        Command::Score(args) => score(args).map(|_| true),
        Command::Analyze(args) => analyze(args).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
