//! Rebuild the bundled trigram profiles from the training texts in
//! `data/langid`, then report accuracy on the labeled evaluation sentences.
//!
//! ```text
//! cargo run --example build_language_profiles
//! ```
//!
//! Rebuild the crate afterwards so the new profiles are compiled in.

use std::fs;
use std::path::Path;

use crossrefine::analysis::{LanguageProfile, ProfileDetector, BUNDLED_PROFILES, PROFILE_SIZE};

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/langid");
    let mut profiles = Vec::new();
    for (code, lang, _) in BUNDLED_PROFILES {
        let text = fs::read_to_string(dir.join(format!("{code}_train.txt")))?;
        let profile = LanguageProfile::train(&text, PROFILE_SIZE);
        fs::write(dir.join(format!("{code}.profile")), profile.serialize())?;
        println!("{code}: {} trigrams", profile.len());
        profiles.push((lang, profile));
    }

    let detector = ProfileDetector::new(profiles);
    let eval = fs::read_to_string(dir.join("eval.tsv"))?;
    let (mut total, mut correct) = (0, 0);
    for line in eval.lines().filter(|l| !l.trim().is_empty()) {
        let (label, sentence) = line.split_once('\t').expect("label<TAB>sentence");
        let got = detector.detect(sentence);
        total += 1;
        if got.to_string() == label {
            correct += 1;
        } else {
            println!("miss: expected {label}, got {got}: {sentence}");
        }
    }
    println!("accuracy {correct}/{total}");
    Ok(())
}
