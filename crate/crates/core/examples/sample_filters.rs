//! Check candidate explanations against the sample quality filters and show
//! which criteria each one fails.
//!
//!     cargo run --example sample_filters

use crossrefine::analysis::{passes_filters, FilterCriteria};
use crossrefine::metrics::HashingEmbedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let question = "Where would you most likely keep a spare blanket so it stays clean and dry \
                    until a guest needs it for the night?";
    let candidates = [
        "A linen closet.",
        "You would keep a spare blanket in a linen closet because a closet stays clean and dry, \
         so the blanket is ready when a guest needs it for the night.",
        "blanket blanket blanket blanket blanket blanket blanket blanket blanket blanket \
         blanket blanket blanket blanket blanket blanket blanket blanket blanket blanket blanket",
        "Shelf 12, row 4, bin 9: 2 of 3 units (66%) stocked as of 2024-01-07 at 10:45, \
         per inventory code 7731-B and form 19 revision 2.",
    ];
    let criteria = FilterCriteria::default();
    let embedder = HashingEmbedder::default();
    println!("{criteria:?}\n");
    for text in candidates {
        let v = passes_filters(question, text, &criteria, &embedder)?;
        println!(
            "{} len={} bigram={:.2} digits={:.2} sim={:.2}",
            if v.passed { "PASS" } else { "FAIL" },
            v.length.value,
            v.bigram_ratio.value,
            v.digit_ratio.value,
            v.question_similarity.value,
        );
        if !v.passed {
            println!("     failed: {}", v.failures().join(", "));
        }
        println!("     {text}\n");
    }
    Ok(())
}
