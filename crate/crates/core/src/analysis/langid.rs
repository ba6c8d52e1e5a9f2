//! English/German identification by character-trigram rank profiles, and
//! language shares over a set of generated explanations.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::tokenize::token_count;
use super::{row_label, AnalysisError};
use crate::metrics::GroupKey;

/// Trigrams kept per profile.
pub const PROFILE_SIZE: usize = 400;

/// Bundled profiles by language code. Profiles for other Latin-script
/// languages let text from them be recognised as `Other` instead of falling
/// to the nearer of English and German.
pub const BUNDLED_PROFILES: [(&str, DetectedLanguage, &str); 6] = [
    ("en", DetectedLanguage::En, include_str!("../../data/langid/en.profile")),
    ("de", DetectedLanguage::De, include_str!("../../data/langid/de.profile")),
    ("fr", DetectedLanguage::Other, include_str!("../../data/langid/fr.profile")),
    ("es", DetectedLanguage::Other, include_str!("../../data/langid/es.profile")),
    ("it", DetectedLanguage::Other, include_str!("../../data/langid/it.profile")),
    ("nl", DetectedLanguage::Other, include_str!("../../data/langid/nl.profile")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectedLanguage {
    De,
    En,
    Other,
}

impl fmt::Display for DetectedLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectedLanguage::De => "de",
            DetectedLanguage::En => "en",
            DetectedLanguage::Other => "other",
        })
    }
}

/// Trigram counts of `text`. Words are runs of letters, lowercased and
/// padded with one space on each side.
fn trigram_counts(text: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for word in text.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()) {
        let padded: Vec<char> = std::iter::once(' ')
            .chain(word.chars().flat_map(char::to_lowercase))
            .chain(std::iter::once(' '))
            .collect();
        for w in padded.windows(3) {
            *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
        }
    }
    counts
}

/// Most frequent first; ties broken alphabetically so profiles are stable.
fn ranked(counts: HashMap<String, usize>, size: usize) -> Vec<String> {
    let mut items: Vec<(String, usize)> = counts.into_iter().collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items.into_iter().take(size).map(|(g, _)| g).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageProfile {
    grams: Vec<String>,
    ranks: HashMap<String, usize>,
}

impl LanguageProfile {
    pub fn from_ranked(grams: Vec<String>) -> Self {
        let ranks = grams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        Self { grams, ranks }
    }

    pub fn train(text: &str, size: usize) -> Self {
        Self::from_ranked(ranked(trigram_counts(text), size))
    }

    /// One trigram per line in rank order. Spaces are written as `_`.
    pub fn parse(text: &str) -> Self {
        Self::from_ranked(
            text.lines()
                .filter(|l| !l.is_empty())
                .map(|l| l.replace('_', " "))
                .collect(),
        )
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for g in &self.grams {
            out.push_str(&g.replace(' ', "_"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    /// Out-of-place distance of a document profile from this one, scaled to
    /// [0, 1]. A trigram missing here costs the full profile length.
    pub fn distance(&self, document: &[String]) -> f64 {
        if document.is_empty() {
            return 1.0;
        }
        let max = self.grams.len().max(document.len());
        let total: usize = document
            .iter()
            .enumerate()
            .map(|(i, g)| self.ranks.get(g).map_or(max, |&r| r.abs_diff(i)))
            .sum();
        total as f64 / (document.len() * max) as f64
    }
}

#[derive(Debug, Clone)]
pub struct ProfileDetector {
    profiles: Vec<(DetectedLanguage, LanguageProfile)>,
    /// Texts whose best distance exceeds this are `Other`.
    pub max_distance: f64,
    /// Texts with fewer tokens are `Other`.
    pub min_tokens: usize,
}

impl ProfileDetector {
    pub fn new(profiles: Vec<(DetectedLanguage, LanguageProfile)>) -> Self {
        Self {
            profiles,
            max_distance: 0.8,
            min_tokens: 5,
        }
    }

    /// The profiles shipped with the crate.
    pub fn bundled() -> &'static ProfileDetector {
        static DETECTOR: OnceLock<ProfileDetector> = OnceLock::new();
        DETECTOR.get_or_init(|| {
            ProfileDetector::new(
                BUNDLED_PROFILES
                    .iter()
                    .map(|(_, lang, text)| (*lang, LanguageProfile::parse(text)))
                    .collect(),
            )
        })
    }

    /// Distance to each profile, in profile order.
    pub fn distances(&self, text: &str) -> Vec<(DetectedLanguage, f64)> {
        let document = ranked(trigram_counts(text), PROFILE_SIZE);
        self.profiles
            .iter()
            .map(|(lang, p)| (*lang, p.distance(&document)))
            .collect()
    }

    pub fn detect(&self, text: &str) -> DetectedLanguage {
        if token_count(text) < self.min_tokens {
            return DetectedLanguage::Other;
        }
        self.distances(text)
            .into_iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .filter(|(_, d)| *d <= self.max_distance)
            .map_or(DetectedLanguage::Other, |(lang, _)| lang)
    }
}

/// Classify with the bundled profiles.
pub fn detect_language(text: &str) -> DetectedLanguage {
    ProfileDetector::bundled().detect(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanguageDistribution {
    pub german_pct: f64,
    pub english_pct: f64,
    pub other_pct: f64,
}

impl LanguageDistribution {
    pub fn from_labels(labels: &[DetectedLanguage]) -> Result<Self, AnalysisError> {
        if labels.is_empty() {
            return Err(AnalysisError::EmptyList);
        }
        let pct = |lang| 100.0 * labels.iter().filter(|l| **l == lang).count() as f64 / labels.len() as f64;
        Ok(Self {
            german_pct: pct(DetectedLanguage::De),
            english_pct: pct(DetectedLanguage::En),
            other_pct: pct(DetectedLanguage::Other),
        })
    }
}

pub fn language_distribution<S: AsRef<str>>(texts: &[S]) -> Result<LanguageDistribution, AnalysisError> {
    let labels: Vec<DetectedLanguage> = texts.iter().map(|t| detect_language(t.as_ref())).collect();
    LanguageDistribution::from_labels(&labels)
}

/// Generator/critic rows with German, English and Other percentages.
pub fn format_language_table(dataset: &str, rows: &[(GroupKey, LanguageDistribution)]) -> String {
    let labels: Vec<(String, String)> = rows.iter().map(|(k, _)| row_label(k)).collect();
    let gen_w = labels.iter().map(|l| l.0.len()).chain([9]).max().unwrap_or(9);
    let critic_w = labels.iter().map(|l| l.1.len()).chain([6]).max().unwrap_or(6);
    let lead = gen_w + 2 + critic_w;
    let w = 8;

    let mut out = String::new();
    let _ = writeln!(out, "{:<lead$}  {:^block$}", "", dataset, block = 3 * w + 4);
    let _ = writeln!(
        out,
        "{:<gen_w$}  {:<critic_w$}  {:>w$}  {:>w$}  {:>w$}",
        "Generator", "Critic", "German", "English", "Other"
    );
    for ((g, c), (_, d)) in labels.iter().zip(rows) {
        let head = if c.is_empty() {
            format!("{g:<lead$}")
        } else {
            format!("{g:<gen_w$}  {c:<critic_w$}")
        };
        let _ = writeln!(
            out,
            "{head}  {:>w$.2}  {:>w$.2}  {:>w$.2}",
            d.german_pct, d.english_pct, d.other_pct
        );
    }
    out
}
