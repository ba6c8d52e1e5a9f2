use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::refinery::PipelineMode;

/// Which configuration a score belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub generator_id: String,
    pub critic_id: String,
    pub dataset_id: String,
    pub mode: PipelineMode,
}

impl GroupKey {
    /// The label shown in the critic column. Self-refinement has no
    /// separate critic and is listed as such.
    pub fn critic_label(&self) -> &str {
        if self.mode == PipelineMode::SelfRefine {
            "Self-Refine"
        } else {
            &self.critic_id
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric_id: String,
    pub per_example: Vec<f64>,
    pub aggregate: f64,
    pub group_key: GroupKey,
}

impl ScoreReport {
    pub fn new(metric_id: impl Into<String>, per_example: Vec<f64>, group_key: GroupKey) -> Result<Self, MetricsError> {
        let aggregate = aggregate_scores(&per_example)?;
        Ok(Self {
            metric_id: metric_id.into(),
            per_example,
            aggregate,
            group_key,
        })
    }
}

/// Arithmetic mean.
pub fn aggregate_scores(per_example: &[f64]) -> Result<f64, MetricsError> {
    if per_example.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    Ok(per_example.iter().sum::<f64>() / per_example.len() as f64)
}

fn push_unique<T: PartialEq + Clone>(items: &mut Vec<T>, item: &T) {
    if !items.contains(item) {
        items.push(item.clone());
    }
}

/// Render reports as a critic/generator by dataset/metric table with two
/// decimals, rows and columns in first-appearance order.
pub fn format_score_table(reports: &[ScoreReport]) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    let mut metrics: Vec<String> = Vec::new();
    for r in reports {
        push_unique(
            &mut rows,
            &(r.group_key.critic_label().to_string(), r.group_key.generator_id.clone()),
        );
        push_unique(&mut datasets, &r.group_key.dataset_id);
        push_unique(&mut metrics, &r.metric_id);
    }
    let columns: Vec<(&String, &String)> = datasets
        .iter()
        .flat_map(|d| metrics.iter().map(move |m| (d, m)))
        .collect();

    let lookup = |critic: &str, generator: &str, dataset: &str, metric: &str| {
        reports.iter().find(|r| {
            r.group_key.critic_label() == critic
                && r.group_key.generator_id == generator
                && r.group_key.dataset_id == dataset
                && r.metric_id == metric
        })
    };

    let critic_w = rows.iter().map(|r| r.0.len()).chain(["Critic".len()]).max().unwrap_or(6);
    let gen_w = rows.iter().map(|r| r.1.len()).chain(["Generator".len()]).max().unwrap_or(9);
    let col_w: Vec<usize> = columns
        .iter()
        .map(|(d, m)| d.len().max(m.len()).max(6))
        .collect();

    let mut out = String::new();
    let _ = write!(out, "{:<critic_w$}  {:<gen_w$}", "", "");
    for ((d, _), w) in columns.iter().zip(&col_w) {
        let _ = write!(out, "  {d:>w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<critic_w$}  {:<gen_w$}", "Critic", "Generator");
    for ((_, m), w) in columns.iter().zip(&col_w) {
        let _ = write!(out, "  {m:>w$}");
    }
    out.push('\n');
    for (critic, generator) in &rows {
        let _ = write!(out, "{critic:<critic_w$}  {generator:<gen_w$}");
        for ((d, m), w) in columns.iter().zip(&col_w) {
            match lookup(critic, generator, d, m) {
                Some(r) => {
                    let _ = write!(out, "  {:>w$.2}", r.aggregate);
                }
                None => {
                    let _ = write!(out, "  {:>w$}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
