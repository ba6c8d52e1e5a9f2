//! Run the generator/critic pipeline on one commonsense QA sample with the
//! offline simulated models and print every stage.
//!
//!     cargo run --example cross_refine [-- <instance index>]

use crossrefine::backend::{BackendConfig, InitialStyle, SimulatedModel};
use crossrefine::corpus::{load_instances, Language, LoadOptions, TaskKind};
use crossrefine::prompting::{load_demo_store, TemplateSet};
use crossrefine::refinery::{PipelineConfig, PipelineMode, Refinery, Role};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let index: usize = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let instances = load_instances(data.join("samples/ecqa.jsonl"), TaskKind::CommonsenseQa, LoadOptions::default())?;
    let instance = instances.get(index).ok_or("no such instance")?;
    let demos = load_demo_store(data.join("fixer/ecqa.jsonl"))?;
    let templates = TemplateSet::builtin(TaskKind::CommonsenseQa, Language::En);

    let generator = SimulatedModel::new("sim-generator").with_initial(InitialStyle::Bare);
    let critic = SimulatedModel::new("sim-critic");
    let (gen_cfg, critic_cfg) = (BackendConfig::new("sim-generator"), BackendConfig::new("sim-critic"));
    let config = PipelineConfig::new(PipelineMode::CrossRefine);
    let refinery = Refinery {
        generator: Role::new(&generator, &gen_cfg),
        critic: Role::new(&critic, &critic_cfg),
        templates: &templates,
        generate_demos: &demos,
        refine_demos: &demos,
        config: &config,
    };

    let trace = refinery.run_cross_refine(instance, "ecqa")?;
    println!("{}\n", trace.input_text);
    println!("initial:    {}", trace.initial);
    println!("verdict:    {:?}", trace.verdict);
    if let Some(f) = &trace.feedback {
        println!("feedback:   {f}");
    }
    if let Some(s) = &trace.suggestion {
        println!("suggestion: {s}");
    }
    println!("final:      {}", trace.final_explanation);
    for (stage, ms) in &trace.timings_ms {
        println!("  {stage:<8} {ms} ms, {} prompt bytes", trace.prompts[stage].len());
    }
    Ok(())
}
