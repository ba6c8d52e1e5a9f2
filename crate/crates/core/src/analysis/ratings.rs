//! Human ratings: loading, validation and per-dimension means.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::alpha::AlphaLevel;
use super::{row_label, AnalysisError};
use crate::metrics::GroupKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    #[serde(rename = "faithfulness_binary")]
    Faithfulness,
    #[serde(rename = "coherence_likert5")]
    Coherence,
    #[serde(rename = "insightfulness_likert5")]
    Insightfulness,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Faithfulness, Dimension::Coherence, Dimension::Insightfulness];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Faithfulness => "faithfulness_binary",
            Dimension::Coherence => "coherence_likert5",
            Dimension::Insightfulness => "insightfulness_likert5",
        }
    }

    pub fn short_label(self) -> &'static str {
        match self {
            Dimension::Faithfulness => "Faith.",
            Dimension::Coherence => "Coh.",
            Dimension::Insightfulness => "Insight.",
        }
    }

    pub fn value_range(self) -> (u8, u8) {
        match self {
            Dimension::Faithfulness => (0, 1),
            _ => (1, 5),
        }
    }

    /// Nominal for the binary scale, ordinal for Likert scales.
    pub fn default_level(self) -> AlphaLevel {
        match self {
            Dimension::Faithfulness => AlphaLevel::Nominal,
            _ => AlphaLevel::Ordinal,
        }
    }

    /// Map a rating onto [0, 1].
    pub fn normalize(self, value: u8) -> f64 {
        let (lo, hi) = self.value_range();
        (value - lo) as f64 / (hi - lo) as f64
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "faithfulness_binary" | "faithfulness" | "faith" => Ok(Dimension::Faithfulness),
            "coherence_likert5" | "coherence" | "coh" => Ok(Dimension::Coherence),
            "insightfulness_likert5" | "insightfulness" | "insight" => Ok(Dimension::Insightfulness),
            other => Err(AnalysisError::InvalidRating(format!("unknown dimension `{other}`"))),
        }
    }
}

/// Ratings of one dimension, raters by items. `None` marks a missing rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub dimension: Dimension,
    pub raters: Vec<String>,
    pub items: Vec<String>,
    pub values: Vec<Vec<Option<u8>>>,
}

impl RatingMatrix {
    pub fn new(
        dimension: Dimension,
        raters: Vec<String>,
        items: Vec<String>,
        values: Vec<Vec<Option<u8>>>,
    ) -> Result<Self, AnalysisError> {
        let m = Self {
            dimension,
            raters,
            items,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Matrix with generated rater and item names.
    pub fn from_values(dimension: Dimension, values: Vec<Vec<Option<u8>>>) -> Result<Self, AnalysisError> {
        let raters = (0..values.len()).map(|r| format!("r{r}")).collect();
        let items = (0..values.first().map_or(0, Vec::len)).map(|i| format!("i{i}")).collect();
        Self::new(dimension, raters, items, values)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.raters.len() < 2 {
            return Err(AnalysisError::DegenerateData(format!(
                "{} rater(s); at least 2 needed",
                self.raters.len()
            )));
        }
        if self.values.len() != self.raters.len() {
            return Err(AnalysisError::InvalidRating("row count differs from rater count".into()));
        }
        let (lo, hi) = self.dimension.value_range();
        for (r, row) in self.values.iter().enumerate() {
            if row.len() != self.items.len() {
                return Err(AnalysisError::InvalidRating(format!(
                    "rater {} has {} cells for {} items",
                    self.raters[r],
                    row.len(),
                    self.items.len()
                )));
            }
            if let Some(v) = row.iter().flatten().find(|v| !(lo..=hi).contains(*v)) {
                return Err(AnalysisError::InvalidRating(format!(
                    "{v} outside [{lo}, {hi}] for {}",
                    self.dimension
                )));
            }
        }
        Ok(())
    }

    /// Present ratings per item, in rater order.
    pub fn units(&self) -> Vec<Vec<u8>> {
        (0..self.items.len())
            .map(|i| self.values.iter().filter_map(|row| row[i]).collect())
            .collect()
    }

    /// Mean over present cells.
    pub fn mean(&self) -> Result<f64, AnalysisError> {
        let present: Vec<u8> = self.values.iter().flatten().flatten().copied().collect();
        if present.is_empty() {
            return Err(AnalysisError::AllMissing(self.dimension));
        }
        Ok(present.iter().map(|&v| v as f64).sum::<f64>() / present.len() as f64)
    }
}

/// Mean rating per dimension.
pub fn aggregate_ratings(matrices: &[RatingMatrix]) -> Result<BTreeMap<Dimension, f64>, AnalysisError> {
    if matrices.is_empty() {
        return Err(AnalysisError::EmptyList);
    }
    matrices.iter().map(|m| m.mean().map(|v| (m.dimension, v))).collect()
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    rater_id: String,
    item_id: String,
    dimension: String,
    value: Option<String>,
}

/// Parse `rater_id,item_id,dimension,value` CSV into one matrix per
/// dimension. An empty value is a missing rating. Raters and items keep
/// first-appearance order.
pub fn parse_ratings(text: &str) -> Result<Vec<RatingMatrix>, AnalysisError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut cells: BTreeMap<Dimension, Vec<(String, String, Option<u8>)>> = BTreeMap::new();
    for (i, row) in reader.deserialize::<RatingRow>().enumerate() {
        let row = row.map_err(|e| AnalysisError::InvalidRating(format!("row {}: {e}", i + 2)))?;
        let dim: Dimension = row.dimension.parse()?;
        let value = match row.value.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(v) => Some(
                v.parse::<u8>()
                    .map_err(|_| AnalysisError::InvalidRating(format!("row {}: value `{v}`", i + 2)))?,
            ),
        };
        cells.entry(dim).or_default().push((row.rater_id, row.item_id, value));
    }
    let mut out = Vec::new();
    for (dim, entries) in cells {
        let mut raters: Vec<String> = Vec::new();
        let mut items: Vec<String> = Vec::new();
        for (r, i, _) in &entries {
            if !raters.contains(r) {
                raters.push(r.clone());
            }
            if !items.contains(i) {
                items.push(i.clone());
            }
        }
        let mut values = vec![vec![None; items.len()]; raters.len()];
        for (r, i, v) in entries {
            let ri = raters.iter().position(|x| *x == r).unwrap();
            let ii = items.iter().position(|x| *x == i).unwrap();
            if values[ri][ii].is_some() && v.is_some() {
                return Err(AnalysisError::InvalidRating(format!(
                    "rater {r} rated item {i} twice on {dim}"
                )));
            }
            values[ri][ii] = values[ri][ii].or(v);
        }
        out.push(RatingMatrix::new(dim, raters, items, values)?);
    }
    Ok(out)
}

pub fn load_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingMatrix>, AnalysisError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
    parse_ratings(&text)
}

/// Generator/critic rows by dataset columns, each with the three dimension
/// means to two decimals. Self-refinement rows span both label columns.
pub fn format_rating_table(rows: &[(GroupKey, BTreeMap<Dimension, f64>)]) -> String {
    let mut labels: Vec<(String, String)> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    for (key, _) in rows {
        let label = row_label(key);
        if !labels.contains(&label) {
            labels.push(label);
        }
        if !datasets.contains(&key.dataset_id) {
            datasets.push(key.dataset_id.clone());
        }
    }
    let label_w = labels
        .iter()
        .map(|(g, c)| if c.is_empty() { g.len() } else { 0 })
        .max()
        .unwrap_or(0);
    let gen_w = labels.iter().map(|l| l.0.len()).chain([9]).max().unwrap_or(9);
    let critic_w = labels.iter().map(|l| l.1.len()).chain([6]).max().unwrap_or(6);
    let critic_w = critic_w.max(label_w.saturating_sub(gen_w + 2));
    let lead = gen_w + 2 + critic_w;
    let cell_w = 8;
    let block_w = 3 * cell_w + 4;

    let mut out = String::new();
    let _ = write!(out, "{:<lead$}", "");
    for d in &datasets {
        let _ = write!(out, "  {d:^block_w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<gen_w$}  {:<critic_w$}", "Generator", "Critic");
    for _ in &datasets {
        for dim in Dimension::ALL {
            let _ = write!(out, "  {:>cell_w$}", dim.short_label());
        }
    }
    out.push('\n');
    for label in &labels {
        if label.1.is_empty() {
            let _ = write!(out, "{:<lead$}", label.0);
        } else {
            let _ = write!(out, "{:<gen_w$}  {:<critic_w$}", label.0, label.1);
        }
        for d in &datasets {
            let found = rows.iter().find(|(k, _)| &row_label(k) == label && &k.dataset_id == d);
            for dim in Dimension::ALL {
                match found.and_then(|(_, means)| means.get(&dim)) {
                    Some(v) => {
                        let _ = write!(out, "  {v:>cell_w$.2}");
                    }
                    None => {
                        let _ = write!(out, "  {:>cell_w$}", "-");
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}
