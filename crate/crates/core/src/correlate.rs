//! Filter/property Pearson correlation and property relevance ranking.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::FilterRecord;
use crate::props::{PropertyStats, PropertyVector};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CorrelateError {
    #[error("filter activations cover {filters} solutions but {properties} property vectors were given")]
    Mismatch { filters: usize, properties: usize },
    #[error("property vector for `{0}` is out of order or unknown")]
    UnknownSolution(String),
    #[error("need at least 3 solutions, got {0}")]
    TooFew(usize),
}

/// Product-moment correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopFilter {
    pub filter: String,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    /// Filter labels in record order.
    pub filters: Vec<String>,
    pub properties: Vec<String>,
    /// `r[filter][property]`; `None` where either vector is constant.
    pub r: Vec<Vec<Option<f64>>>,
    pub corpus_size: usize,
    pub top: BTreeMap<String, Vec<TopFilter>>,
}

/// Correlate every retained filter with every property. `solutions` names
/// the corpus order the activation vectors follow.
pub fn correlate(
    records: &[FilterRecord],
    solutions: &[String],
    vectors: &[PropertyVector],
    property_ids: &[String],
) -> Result<CorrelationMatrix, CorrelateError> {
    if vectors.len() != solutions.len() {
        return Err(CorrelateError::Mismatch { filters: solutions.len(), properties: vectors.len() });
    }
    for (v, s) in vectors.iter().zip(solutions) {
        if &v.solution != s {
            return Err(CorrelateError::UnknownSolution(v.solution.clone()));
        }
    }
    for rec in records {
        if rec.activations.len() != solutions.len() {
            return Err(CorrelateError::Mismatch { filters: rec.activations.len(), properties: vectors.len() });
        }
    }
    if solutions.len() < 3 {
        return Err(CorrelateError::TooFew(solutions.len()));
    }
    let columns: Vec<Vec<f64>> =
        (0..property_ids.len()).map(|p| vectors.iter().map(|v| v.values[p]).collect()).collect();
    let r: Vec<Vec<Option<f64>>> =
        records.par_iter().map(|rec| columns.iter().map(|col| pearson(&rec.activations, col)).collect()).collect();
    let filters: Vec<String> = records.iter().map(FilterRecord::label).collect();

    let mut top = BTreeMap::new();
    for (p, id) in property_ids.iter().enumerate() {
        let mut cells: Vec<(usize, f64)> = (0..records.len()).filter_map(|f| r[f][p].map(|v| (f, v))).collect();
        cells.sort_by(|a, b| {
            b.1.abs().total_cmp(&a.1.abs()).then_with(|| records[a.0].key().cmp(&records[b.0].key()))
        });
        let best = cells.into_iter().take(3).map(|(f, v)| TopFilter { filter: filters[f].clone(), r: v }).collect();
        top.insert(id.clone(), best);
    }
    Ok(CorrelationMatrix { filters, properties: property_ids.to_vec(), r, corpus_size: solutions.len(), top })
}

impl CorrelationMatrix {
    /// Max |r| over all filters, `None` when every cell is undefined.
    pub fn score(&self, property: usize) -> Option<f64> {
        self.r.iter().filter_map(|row| row[property]).map(f64::abs).reduce(f64::max)
    }

    /// Tab-separated table, one row per filter.
    pub fn to_text(&self) -> String {
        let mut out = format!("filter\t{}\n", self.properties.join("\t"));
        for (f, row) in self.filters.iter().zip(&self.r) {
            let cells: Vec<String> =
                row.iter().map(|c| c.map(|v| format!("{v:.4}")).unwrap_or_else(|| "NA".into())).collect();
            out.push_str(&format!("{f}\t{}\n", cells.join("\t")));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankTag {
    /// Ordered by correlation score.
    Correlated,
    /// No defined correlation; ordered near-constant first.
    Fallback,
    /// Constant over the corpus, so already implied by the model.
    Implied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedProperty {
    pub id: String,
    pub score: Option<f64>,
    pub near_constant: bool,
    pub tag: RankTag,
}

/// Rank the catalog: correlated properties by max |r|, then uncorrelated
/// ones near-constant first, then constant properties tagged implied.
pub fn rank_properties(matrix: Option<&CorrelationMatrix>, stats: &PropertyStats) -> Vec<RankedProperty> {
    let mut ranked: Vec<(usize, RankedProperty)> = stats
        .props
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let score = matrix.and_then(|m| m.properties.iter().position(|p| p == &s.id).and_then(|p| m.score(p)));
            let tag = if s.constant {
                RankTag::Implied
            } else if score.is_some() {
                RankTag::Correlated
            } else {
                RankTag::Fallback
            };
            (i, RankedProperty { id: s.id.clone(), score, near_constant: s.near_constant, tag })
        })
        .collect();
    let group = |t: RankTag| match t {
        RankTag::Correlated => 0,
        RankTag::Fallback => 1,
        RankTag::Implied => 2,
    };
    ranked.sort_by(|(ia, a), (ib, b)| {
        group(a.tag)
            .cmp(&group(b.tag))
            .then_with(|| b.score.unwrap_or(0.0).total_cmp(&a.score.unwrap_or(0.0)))
            .then_with(|| b.near_constant.cmp(&a.near_constant))
            .then(ia.cmp(ib))
    });
    ranked.into_iter().map(|(_, r)| r).collect()
}
