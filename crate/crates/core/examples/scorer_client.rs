//! Send one batch to a running scoring service and print the scores.
//!
//!     cargo run --example scorer_client -- http://127.0.0.1:8000 [metric]
//!
//! The service answers `POST /score`; see `metrics::ScoreRequest` for the
//! request body. Length mismatches are caught here before anything is sent.

use crossrefine::corpus::Language;
use crossrefine::metrics::{HttpScorer, MetricsError, ScoreRequest, Scorer};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(endpoint) = args.next() else {
        eprintln!("usage: scorer_client <endpoint> [metric]");
        std::process::exit(2);
    };
    let metric = args.next().unwrap_or_else(|| "bertscore".into());
    let scorer = HttpScorer::new(endpoint);

    let request = ScoreRequest::new(
        metric.clone(),
        vec![
            "Ice floats because it is less dense than liquid water.".into(),
            "Ice floats.".into(),
        ],
    )
    .with_references(vec![
        "Water expands when it freezes, so ice is less dense and floats.".into(),
        "Frozen water is lighter per volume than liquid water, so it floats.".into(),
    ])
    .with_language(Language::En);

    let broken = ScoreRequest::new(metric, vec!["one".into(), "two".into()]).with_references(vec!["only one".into()]);
    if let Err(e) = scorer.score(&broken) {
        println!("rejected locally: {e}");
    }

    match scorer.score(&request) {
        Ok(scores) => {
            for (c, s) in request.candidates.iter().zip(scores) {
                println!("{s:>8.4}  {c}");
            }
        }
        Err(MetricsError::Unsupported { metric_id, language, .. }) => {
            println!("{metric_id} does not support {language:?}")
        }
        Err(e) => {
            eprintln!("scoring failed: {e}");
            std::process::exit(1);
        }
    }
}
