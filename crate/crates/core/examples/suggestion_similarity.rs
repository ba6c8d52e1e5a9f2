//! How close refined explanations are to the initial explanation versus the
//! critic's suggestion, per configuration.
//!
//!     cargo run --example suggestion_similarity [-- <traces.jsonl>...]
//!
//! Without arguments, reads every bundled fixture trace. Uses the hashing
//! embedder; swap in any [`Embedder`](crossrefine::metrics::Embedder).

use std::path::PathBuf;

use crossrefine::analysis::{format_similarity_table, similarity_by_group};
use crossrefine::metrics::HashingEmbedder;
use crossrefine::refinery::{read_traces, PipelineMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut paths: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
        for task in ["ecqa", "esnli", "healthfc", "healthfc_de"] {
            paths.extend(PipelineMode::ALL.iter().map(|m| root.join(task).join(format!("traces_{m}.jsonl"))));
        }
    }
    let mut traces = Vec::new();
    for p in &paths {
        traces.extend(read_traces(p)?);
    }
    let reports = similarity_by_group(&traces, &HashingEmbedder::default())?;
    for (key, r) in &reports {
        println!("{} [{}] on {}: init {:.4}, sug {:.4}", key.critic_id, key.mode, key.dataset_id, r.init_sim, r.sug_sim);
    }
    println!();
    print!("{}", format_similarity_table(&reports));
    Ok(())
}
