//! Record replay scripts and golden traces for every pipeline mode on the
//! bundled sample datasets, using the simulated models.
//!
//!     cargo run --example record_fixture_script [-- <fixture dir>]
//!
//! Writes `<dir>/<task>/{run.json, generator.json, critic.json,
//! traces_<mode>.jsonl}`. The default directory is the one the golden tests read.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use crossrefine::backend::{InitialStyle, RecordingBackend, Script, SimulatedModel};
use crossrefine::experiment::{prepare, run_prepared, RunConfig};
use crossrefine::refinery::PipelineMode;

/// (fixture name, dataset file stem, task kind, language)
const TASKS: [(&str, &str, &str, &str); 4] = [
    ("ecqa", "ecqa", "commonsense_qa", "en"),
    ("esnli", "esnli", "nli", "en"),
    ("healthfc", "healthfc", "fact_check", "en"),
    ("healthfc_de", "healthfc", "fact_check", "de"),
];

fn config_for(task: &str, data: &str, kind: &str, language: &str) -> RunConfig {
    // Paths are relative to <dir>/<task>/ once the config is written there.
    serde_json::from_value(serde_json::json!({
        "dataset": {
            "path": format!("../../../../data/samples/{data}.jsonl"),
            "schema_kind": kind,
            "language": language,
            "id": task
        },
        "mode": "cross_refine",
        "roles": {
            "generator": {"model_id": "sim-generator", "script": "generator.json"},
            "critic": {"model_id": "sim-critic", "script": "critic.json"}
        },
        "demos": {
            "generate_store": format!("../../../../data/fixer/{data}.jsonl"),
            "refine_store": format!("../../../../data/fixer/{data}.jsonl")
        },
        "limits": {"worker_cap": 3},
        "output_dir": "out"
    }))
    .expect("valid config")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden"));
    for (task, data, kind, language) in TASKS {
        let dir = root.join(task);
        fs::create_dir_all(&dir)?;
        let stored = config_for(task, data, kind, language);
        fs::write(dir.join("run.json"), serde_json::to_string_pretty(&stored)? + "\n")?;

        let generator = RecordingBackend::new(SimulatedModel::new("sim-generator").with_initial(InitialStyle::Mixed));
        let critic = RecordingBackend::new(SimulatedModel::new("sim-critic").with_initial(InitialStyle::Reasoned));
        let mut config = stored.clone();
        config.resolve_paths(&dir);
        // Scripts do not exist yet; validation only needs the data files.
        config.roles.generator.script = None;
        config.roles.critic.as_mut().expect("critic").script = None;
        config.roles.generator.backend.endpoint = "recording".into();
        config.roles.critic.as_mut().expect("critic").backend.endpoint = "recording".into();
        let scratch = tempfile_dir()?;
        config.output_dir = scratch.clone();
        let prepared = prepare(&config)?;

        for mode in PipelineMode::ALL {
            let config = RunConfig { mode, ..config.clone() };
            let summary = run_prepared(&config, &prepared, &generator, &critic, &AtomicBool::new(false))?;
            fs::copy(&summary.trace_path, dir.join(format!("traces_{mode}.jsonl")))?;
            println!(
                "{task} {mode}: {} traces, {} failed",
                summary.manifest.written, summary.manifest.failed
            );
        }
        save(generator.script(), &dir.join("generator.json"))?;
        save(critic.script(), &dir.join("critic.json"))?;
        fs::remove_dir_all(scratch)?;
    }
    Ok(())
}

fn save(script: Script, path: &Path) -> Result<(), Box<dyn std::error::Error>> {
    script.save(path)?;
    println!("wrote {} ({} prompts)", path.display(), script.entries.len());
    Ok(())
}

fn tempfile_dir() -> std::io::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("crossrefine-record-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}
