//! Run the full pipeline and both single-component variants from a config
//! file and compare final explanations side by side.
//!
//!     cargo run --example ablation_variants [-- <run.json>]
//!
//! Defaults to the scripted fact-checking fixture, which needs no network.

use std::path::PathBuf;
use std::sync::atomic::AtomicBool;

use crossrefine::experiment::{ablation_configs, run_experiment, RunConfig};
use crossrefine::refinery::read_traces;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/healthfc/run.json")
    });
    let base = RunConfig::load(&path)?;
    let out = std::env::temp_dir().join(format!("crossrefine-ablation-{}", std::process::id()));

    let mut runs = Vec::new();
    for mut config in ablation_configs(&base) {
        config.output_dir = out.clone();
        let summary = run_experiment(&config, &AtomicBool::new(false))?;
        runs.push((config.mode, read_traces(&summary.trace_path)?));
    }
    for i in 0..runs[0].1.len() {
        println!("{}: {}", runs[0].1[i].instance_id, runs[0].1[i].initial);
        for (mode, traces) in &runs {
            let t = &traces[i];
            let changed = if t.final_explanation == t.initial { "unchanged" } else { "refined" };
            println!("  {:<24} {changed:<9} {}", mode.as_str(), t.final_explanation);
        }
    }
    std::fs::remove_dir_all(out)?;
    Ok(())
}
