//! Detect the language of final explanations in trace files and print the
//! per-configuration distribution table.
//!
//!     cargo run --example language_stats [-- <traces.jsonl>...]
//!
//! Without arguments, reads the German fact-checking fixtures.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crossrefine::analysis::{detect_language, format_language_table, language_distribution};
use crossrefine::metrics::GroupKey;
use crossrefine::refinery::{read_traces, PipelineMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut paths: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/healthfc_de");
        paths = PipelineMode::ALL.iter().map(|m| dir.join(format!("traces_{m}.jsonl"))).collect();
    }

    let mut groups: BTreeMap<GroupKey, Vec<String>> = BTreeMap::new();
    for path in &paths {
        for t in read_traces(path)? {
            if t.error.is_some() {
                continue;
            }
            let key = GroupKey {
                generator_id: t.roles.generator.clone(),
                critic_id: t.roles.critic.clone(),
                dataset_id: t.dataset_id.clone(),
                mode: t.mode,
            };
            groups.entry(key).or_default().push(t.final_explanation);
        }
    }

    let mut rows = Vec::new();
    for (key, texts) in &groups {
        rows.push((key.clone(), language_distribution(texts)?));
    }
    print!("{}", format_language_table("Final explanations", &rows));

    if let Some(texts) = groups.values().next() {
        println!("\nper-text labels, first group:");
        for text in texts {
            let short: String = text.chars().take(70).collect();
            println!("  {:?}  {short}", detect_language(text));
        }
    }
    Ok(())
}
