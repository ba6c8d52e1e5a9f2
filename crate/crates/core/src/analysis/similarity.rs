//! How closely refined explanations follow the initial explanation versus
//! the critic's suggestion.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{row_label, AnalysisError};
use crate::metrics::{cosine_similarity, Embedder, GroupKey};
use crate::refinery::PipelineTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Mean cosine(refined, initial).
    pub init_sim: f64,
    /// Mean cosine(refined, suggestion).
    pub sug_sim: f64,
    pub traces: usize,
}

/// Mean similarities over traces. Every trace must carry a refined
/// explanation, an initial explanation and a suggestion.
pub fn similarity_report(traces: &[PipelineTrace], embedder: &dyn Embedder) -> Result<SimilarityReport, AnalysisError> {
    if traces.is_empty() {
        return Err(AnalysisError::EmptyList);
    }
    let (mut init_sum, mut sug_sum) = (0.0, 0.0);
    for t in traces {
        let missing = || AnalysisError::MissingStage(t.instance_id.clone());
        let refined = t.refined.as_deref().ok_or_else(missing)?;
        let suggestion = t.suggestion.as_deref().ok_or_else(missing)?;
        if t.initial.is_empty() {
            return Err(missing());
        }
        let r = embedder.embed(refined)?;
        init_sum += cosine_similarity(&r, &embedder.embed(&t.initial)?)?;
        sug_sum += cosine_similarity(&r, &embedder.embed(suggestion)?)?;
    }
    let n = traces.len() as f64;
    Ok(SimilarityReport {
        init_sim: init_sum / n,
        sug_sim: sug_sum / n,
        traces: traces.len(),
    })
}

/// One report per configuration. Traces without a suggestion or refinement
/// (failed, short-circuited or feedback-only runs) are left out; groups with
/// nothing left are omitted.
pub fn similarity_by_group(
    traces: &[PipelineTrace],
    embedder: &dyn Embedder,
) -> Result<BTreeMap<GroupKey, SimilarityReport>, AnalysisError> {
    let mut groups: BTreeMap<GroupKey, Vec<PipelineTrace>> = BTreeMap::new();
    for t in traces {
        if t.refined.is_none() || t.suggestion.is_none() {
            continue;
        }
        let key = GroupKey {
            generator_id: t.roles.generator.clone(),
            critic_id: t.roles.critic.clone(),
            dataset_id: t.dataset_id.clone(),
            mode: t.mode,
        };
        groups.entry(key).or_default().push(t.clone());
    }
    groups
        .into_iter()
        .map(|(k, ts)| similarity_report(&ts, embedder).map(|r| (k, r)))
        .collect()
}

/// Generator/critic rows by dataset columns, each with `Init.` and `Sug.`.
pub fn format_similarity_table(reports: &BTreeMap<GroupKey, SimilarityReport>) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    for key in reports.keys() {
        let row = row_label(key);
        if !rows.contains(&row) {
            rows.push(row);
        }
        if !datasets.contains(&key.dataset_id) {
            datasets.push(key.dataset_id.clone());
        }
    }
    let gen_w = rows.iter().map(|r| r.0.len()).chain([9]).max().unwrap_or(9);
    let critic_w = rows.iter().map(|r| r.1.len()).chain([6]).max().unwrap_or(6);
    let col_w: Vec<usize> = datasets.iter().map(|d| d.len().max(13)).collect();

    let mut out = String::new();
    let _ = write!(out, "{:<gen_w$}  {:<critic_w$}", "", "");
    for (d, w) in datasets.iter().zip(&col_w) {
        let _ = write!(out, "  {d:^w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<gen_w$}  {:<critic_w$}", "Generator", "Critic");
    for w in &col_w {
        let half = (w - 1) / 2;
        let _ = write!(out, "  {:>half$} {:>rest$}", "Init.", "Sug.", rest = w - 1 - half);
    }
    out.push('\n');
    for (generator, critic) in &rows {
        let _ = write!(out, "{generator:<gen_w$}  {critic:<critic_w$}");
        for (d, w) in datasets.iter().zip(&col_w) {
            let half = (w - 1) / 2;
            let rest = w - 1 - half;
            let found = reports
                .iter()
                .find(|(k, _)| row_label(k) == (generator.clone(), critic.clone()) && &k.dataset_id == d);
            match found {
                Some((_, r)) => {
                    let _ = write!(out, "  {:>half$.2} {:>rest$.2}", r.init_sim, r.sug_sim);
                }
                None => {
                    let _ = write!(out, "  {:>half$} {:>rest$}", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
