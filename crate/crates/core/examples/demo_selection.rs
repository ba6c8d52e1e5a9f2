//! How many demonstrations fit each stage's prompt at different context
//! budgets, and what the rendered block looks like.
//!
//!     cargo run --example demo_selection

use crossrefine::prompting::{load_demo_store, render_demonstrations, select_demonstrations, shot_count, Stage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixer/esnli.jsonl");
    let store = load_demo_store(path)?;
    println!("{} demonstrations, {:.1} tokens on average\n", store.len(), store.mean_tokens());

    let input_tokens = 120;
    println!("{:<10} {:>6} {:>6} {:>6} {:>6}", "stage", "256", "1024", "4096", "32768");
    for stage in [Stage::Generate, Stage::Feedback, Stage::Suggest, Stage::Refine] {
        let counts: Vec<String> = [256, 1024, 4096, 32768]
            .iter()
            .map(|&b| shot_count(&store, stage, input_tokens, b, false).map(|k| k.to_string()))
            .collect::<Result<_, _>>()?;
        println!("{:<10} {:>6} {:>6} {:>6} {:>6}", stage.as_str(), counts[0], counts[1], counts[2], counts[3]);
    }
    match shot_count(&store, Stage::Refine, input_tokens, 256, true) {
        Ok(k) => println!("\nstrict budget 256: {k} shots"),
        Err(e) => println!("\nstrict budget 256: {e}"),
    }

    let demos = select_demonstrations(&store, Stage::Refine, input_tokens, 700, false)?;
    println!("\nrefine block at budget 700 ({} shots):\n", demos.len());
    println!("{}", render_demonstrations(Stage::Refine, demos));
    Ok(())
}
