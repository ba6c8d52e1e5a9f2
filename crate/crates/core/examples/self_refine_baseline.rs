//! Single-model self-refinement on the NLI samples, printing each round.
//!
//!     cargo run --example self_refine_baseline [-- <max iterations>]

use crossrefine::backend::{BackendConfig, InitialStyle, SimulatedModel};
use crossrefine::corpus::{load_instances, Language, LoadOptions, TaskKind};
use crossrefine::prompting::{load_demo_store, TemplateSet};
use crossrefine::refinery::{PipelineConfig, PipelineMode, Refinery, Role, SelfRefineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let max_iterations: u32 = std::env::args().nth(1).map_or(Ok(3), |s| s.parse())?;
    let instances = load_instances(data.join("samples/esnli.jsonl"), TaskKind::Nli, LoadOptions::default())?;
    let demos = load_demo_store(data.join("fixer/esnli.jsonl"))?;
    let templates = TemplateSet::builtin(TaskKind::Nli, Language::En);

    let model = SimulatedModel::new("sim-model").with_initial(InitialStyle::Mixed);
    let backend = BackendConfig::new("sim-model");
    let config = PipelineConfig {
        self_refine: SelfRefineConfig {
            max_iterations,
            stop_on_no_change: true,
        },
        ..PipelineConfig::new(PipelineMode::SelfRefine)
    };
    config.self_refine.validate()?;
    let refinery = Refinery {
        generator: Role::new(&model, &backend),
        critic: Role::new(&model, &backend),
        templates: &templates,
        generate_demos: &demos,
        refine_demos: &demos,
        config: &config,
    };

    for instance in &instances {
        let trace = refinery.run_self_refine(instance, "esnli")?;
        println!("{} initial: {}", trace.instance_id, trace.initial);
        for (i, round) in trace.rounds.iter().enumerate() {
            println!("  round {}: needs improvement = {}", i + 1, round.needs_improvement);
            if let Some(r) = &round.refined {
                println!("    refined: {r}");
            }
        }
        println!("  final: {}\n", trace.final_explanation);
    }
    Ok(())
}
