//! Inter-rater agreement and mean ratings from a ratings CSV
//! (`rater_id,item_id,dimension,value`, empty value = missing).
//!
//!     cargo run --example annotator_agreement [-- <ratings.csv>]

use std::path::PathBuf;

use crossrefine::analysis::{aggregate_ratings, krippendorff_alpha, load_ratings, pooled_alpha, AlphaLevel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/samples/ratings.csv"));
    let matrices = load_ratings(&path)?;

    println!("{:<24} {:>6} {:>6} {:>9} {:>9} {:>9}", "dimension", "raters", "items", "nominal", "ordinal", "interval");
    for m in &matrices {
        let alpha = |level| krippendorff_alpha(m, level).map_or("n/a".to_string(), |a| format!("{a:.3}"));
        println!(
            "{:<24} {:>6} {:>6} {:>9} {:>9} {:>9}",
            m.dimension.as_str(),
            m.raters.len(),
            m.items.len(),
            alpha(AlphaLevel::Nominal),
            alpha(AlphaLevel::Ordinal),
            alpha(AlphaLevel::Interval),
        );
    }

    let report = pooled_alpha(&matrices)?;
    println!("\npooled (interval, normalized): {:.3}", report.pooled);
    println!("means on each scale:");
    for (dim, mean) in aggregate_ratings(&matrices)? {
        println!("  {dim}: {mean:.2}");
    }
    Ok(())
}
