//! Krippendorff's alpha over coincidence matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ratings::{Dimension, RatingMatrix};
use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaLevel {
    Nominal,
    Ordinal,
    Interval,
}

/// Alpha for a set of units, each the list of values it received.
/// Units with fewer than two values are not pairable and are ignored.
fn alpha_from_units(units: &[Vec<f64>], level: AlphaLevel) -> Result<f64, AnalysisError> {
    let pairable: Vec<&Vec<f64>> = units.iter().filter(|u| u.len() >= 2).collect();
    if pairable.len() < 2 {
        return Err(AnalysisError::DegenerateData(format!(
            "{} item(s) with two or more ratings; at least 2 needed",
            pairable.len()
        )));
    }

    let mut values: Vec<f64> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let index = |v: f64| values.binary_search_by(|x| x.total_cmp(&v)).expect("value indexed");
    let k = values.len();

    // o[c][k]: coincidences of value c with value k.
    let mut o = vec![vec![0.0; k]; k];
    for unit in &pairable {
        let weight = 1.0 / (unit.len() - 1) as f64;
        for (i, &a) in unit.iter().enumerate() {
            for (j, &b) in unit.iter().enumerate() {
                if i != j {
                    o[index(a)][index(b)] += weight;
                }
            }
        }
    }
    let marginals: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();

    let delta = |c: usize, e: usize| -> f64 {
        if c == e {
            return 0.0;
        }
        match level {
            AlphaLevel::Nominal => 1.0,
            AlphaLevel::Interval => (values[c] - values[e]).powi(2),
            AlphaLevel::Ordinal => {
                let (lo, hi) = (c.min(e), c.max(e));
                let between: f64 = marginals[lo..=hi].iter().sum();
                (between - (marginals[lo] + marginals[hi]) / 2.0).powi(2)
            }
        }
    };

    let (mut observed, mut expected) = (0.0, 0.0);
    for c in 0..k {
        for e in 0..k {
            let d = delta(c, e);
            observed += o[c][e] * d;
            expected += marginals[c] * marginals[e] * d;
        }
    }
    if observed == 0.0 {
        return Ok(1.0);
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - 1.0));
    Ok(1.0 - d_o / d_e)
}

/// Alpha for one rating dimension at the given measurement level.
///
/// Missing ratings are skipped pairwise. Perfect agreement yields exactly
/// 1.0. Fewer than two raters or fewer than two items rated at least twice
/// is [`AnalysisError::DegenerateData`].
pub fn krippendorff_alpha(matrix: &RatingMatrix, level: AlphaLevel) -> Result<f64, AnalysisError> {
    matrix.validate()?;
    let units: Vec<Vec<f64>> = matrix
        .units()
        .into_iter()
        .map(|u| u.into_iter().map(f64::from).collect())
        .collect();
    alpha_from_units(&units, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Interval alpha over all dimensions, values scaled to [0, 1].
    pub pooled: f64,
    /// Alpha per dimension at its default level. Dimensions too sparse for
    /// alpha are left out.
    pub per_dimension: BTreeMap<Dimension, f64>,
}

/// Pooled and per-dimension agreement. Each dimension's items are kept as
/// separate units in the pooled computation.
pub fn pooled_alpha(matrices: &[RatingMatrix]) -> Result<AgreementReport, AnalysisError> {
    if matrices.is_empty() {
        return Err(AnalysisError::EmptyList);
    }
    let mut units = Vec::new();
    let mut per_dimension = BTreeMap::new();
    for m in matrices {
        m.validate()?;
        units.extend(
            m.units()
                .into_iter()
                .map(|u| u.into_iter().map(|v| m.dimension.normalize(v)).collect::<Vec<f64>>()),
        );
        match krippendorff_alpha(m, m.dimension.default_level()) {
            Ok(a) => {
                per_dimension.insert(m.dimension, a);
            }
            Err(AnalysisError::DegenerateData(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(AgreementReport {
        pooled: alpha_from_units(&units, AlphaLevel::Interval)?,
        per_dimension,
    })
}
