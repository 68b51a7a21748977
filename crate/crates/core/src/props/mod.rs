//! Structural properties of solutions: per-kind catalogs, per-solution
//! vectors, corpus statistics and cross-size progression tables.

mod catalog;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{PackingNames, Problem, ShapeKind, Solution};
use crate::encode::{self, EncodeError, SolutionTensor};
use crate::minicp::{print_expr, MiniModel};
use crate::Scalar;

pub use catalog::{catalog, extremum_groups, ExtremumGroup, PropertyDef};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PropsError {
    #[error("unsupported shape kind {0:?}")]
    Unsupported(ShapeKind),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("need at least {need} property vectors, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("property vectors disagree in length")]
    Ragged,
}

/// Everything a property may read, precomputed once per solution.
pub struct PropInput {
    /// Primary variable as rows (1-D variables are a single row).
    pub matrix: Vec<Vec<i64>>,
    /// Declared lower index of each plane axis.
    pub row_lo: i64,
    pub col_lo: i64,
    pub domain: (i64, i64),
    /// Packing: (left, bottom, extent along left, extent along bottom).
    pub footprints: Vec<(i64, i64, i64, i64)>,
    pub classes: Vec<i64>,
    pub rotated: Vec<i64>,
    /// Channel-summed tensor plane.
    pub plane: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl PropInput {
    pub fn row(&self) -> &[i64] {
        &self.matrix[0]
    }
}

/// How a property can be written as a constraint expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PropForm {
    /// property = expr / denom
    Direct { expr: String, denom: i64 },
    /// property = max over `gens` of `term`
    MaxOf { gens: String, term: String },
    /// property = min over `gens` of `term`
    MinOf { gens: String, term: String },
}

impl PropForm {
    pub fn direct(expr: String) -> PropForm {
        PropForm::Direct { expr, denom: 1 }
    }

    /// Constraint text for `property op k`, `op` one of `=`, `<=`, `>=`.
    pub fn constraint(&self, op: &str, k: i64) -> String {
        match self {
            PropForm::Direct { expr, denom } => format!("{expr} {op} {}", k * denom),
            PropForm::MaxOf { gens, term } => match op {
                "<=" => format!("forall({gens})({term} <= {k})"),
                ">=" => format!("exists({gens})({term} >= {k})"),
                _ => format!("forall({gens})({term} <= {k}) /\\ exists({gens})({term} = {k})"),
            },
            PropForm::MinOf { gens, term } => match op {
                ">=" => format!("forall({gens})({term} >= {k})"),
                "<=" => format!("exists({gens})({term} <= {k})"),
                _ => format!("forall({gens})({term} >= {k}) /\\ exists({gens})({term} = {k})"),
            },
        }
    }

    /// Constraint for `property op value`, when the scaled value is an
    /// integer.
    pub fn constraint_value(&self, op: &str, value: f64) -> Option<String> {
        let raw = value * self.denom() as f64;
        if (raw - raw.round()).abs() > 1e-9 {
            return None;
        }
        let raw = raw.round() as i64;
        Some(match self {
            PropForm::Direct { expr, .. } => format!("{expr} {op} {raw}"),
            _ => self.constraint(op, raw),
        })
    }

    /// Scale factor between the property and the constraint's integer side.
    pub fn denom(&self) -> i64 {
        match self {
            PropForm::Direct { denom, .. } => *denom,
            _ => 1,
        }
    }
}

/// Names and symbolic index ranges the constraint forms are written with.
#[derive(Debug, Clone)]
pub struct FormCtx {
    pub var: String,
    /// Printed `(lo, hi)` source expressions per dimension of the primary
    /// variable.
    pub dims: Vec<(String, String)>,
    pub extents: Vec<i64>,
    pub packing: PackingNames,
    pub containers: Option<(String, String)>,
    pub n_containers: i64,
}

impl FormCtx {
    pub fn new(problem: &Problem, model: &MiniModel) -> FormCtx {
        let var = problem.primary_var(model);
        let src = |name: &str| {
            model.var(name).map(|d| {
                let dims: Vec<(String, String)> =
                    d.shape_src.iter().map(|(l, h)| (print_expr(l), print_expr(h))).collect();
                let ext: Vec<i64> = d.shape.iter().map(|(l, h)| h - l + 1).collect();
                (dims, ext)
            })
        };
        let (dims, extents) = src(&var).unwrap_or_default();
        let packing = problem.spec.packing.clone();
        let (containers, n_containers) = match src(&packing.left) {
            Some((d, e)) if d.len() == 1 => (Some(d[0].clone()), e[0]),
            _ => (None, 0),
        };
        FormCtx { var, dims, extents, packing, containers, n_containers }
    }

    /// `lo..hi` of dimension `d`.
    pub fn range(&self, d: usize) -> String {
        let (l, h) = &self.dims[d];
        format!("{l}..{h}")
    }

    /// `lo..hi - 1` of dimension `d`.
    pub fn range_but_last(&self, d: usize) -> String {
        let (l, h) = &self.dims[d];
        format!("{l}..{h} - 1")
    }

    pub fn is_square(&self) -> bool {
        self.dims.len() == 2 && self.dims[0] == self.dims[1]
    }
}

/// Per-solution values in catalog order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyVector {
    pub solution: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropStat {
    pub id: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub near_constant: bool,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyStats {
    pub count: usize,
    pub props: Vec<PropStat>,
}

impl PropertyStats {
    pub fn get(&self, id: &str) -> Option<&PropStat> {
        self.props.iter().find(|p| p.id == id)
    }
}

pub fn near_constant_threshold(mean: f64) -> f64 {
    0.05f64.max(0.01 * (mean.abs() + 1.0))
}

pub fn prop_input<T: Scalar>(
    problem: &Problem,
    model: &MiniModel,
    tensor: &SolutionTensor<T>,
    raw: &Solution,
) -> Result<PropInput, PropsError> {
    let mut input = PropInput {
        matrix: Vec::new(),
        row_lo: 1,
        col_lo: 1,
        domain: (0, 0),
        footprints: Vec::new(),
        classes: Vec::new(),
        rotated: Vec::new(),
        plane: tensor.plane(),
        height: tensor.height,
        width: tensor.width,
    };
    match problem.kind() {
        ShapeKind::Matrix | ShapeKind::Assignment | ShapeKind::Permutation => {
            let var = problem.primary_var(model);
            let decl = model.var(&var).ok_or_else(|| EncodeError::Shape(format!("no variable `{var}`")))?;
            let vals = raw.get(&var).ok_or_else(|| EncodeError::MissingVar(raw.id(), var.clone()))?;
            input.domain = decl.domain;
            match decl.shape.as_slice() {
                [(lo, _)] => {
                    input.col_lo = *lo;
                    input.matrix = vec![vals.to_vec()];
                }
                [(rl, _), (cl, ch)] => {
                    input.row_lo = *rl;
                    input.col_lo = *cl;
                    let w = (ch - cl + 1) as usize;
                    input.matrix = vals.chunks(w).map(|c| c.to_vec()).collect();
                }
                _ => return Err(EncodeError::Shape(format!("{var} must be 1-D or 2-D")).into()),
            }
        }
        ShapeKind::PackingCoords => {
            let names = &problem.spec.packing;
            input.footprints = encode::footprints(model, raw, names)?;
            input.classes = encode::param_array(model, &names.class)?.to_vec();
            input.rotated = raw.get(&names.rotated).map(|r| r.to_vec()).unwrap_or_default();
        }
    }
    Ok(input)
}

pub fn compute_properties<T: Scalar>(
    problem: &Problem,
    model: &MiniModel,
    tensor: &SolutionTensor<T>,
    raw: &Solution,
) -> Result<PropertyVector, PropsError> {
    let input = prop_input(problem, model, tensor, raw)?;
    let values = catalog(problem.kind()).iter().map(|p| (p.compute)(&input)).collect();
    Ok(PropertyVector { solution: raw.id(), values })
}

pub fn classify_properties(kind: ShapeKind, vectors: &[PropertyVector]) -> Result<PropertyStats, PropsError> {
    let ids: Vec<&str> = catalog(kind).iter().map(|p| p.id).collect();
    classify_with_ids(&ids, vectors)
}

pub fn classify_with_ids(ids: &[&str], vectors: &[PropertyVector]) -> Result<PropertyStats, PropsError> {
    if vectors.len() < 2 {
        return Err(PropsError::TooFew { need: 2, got: vectors.len() });
    }
    if vectors.iter().any(|v| v.values.len() != ids.len()) {
        return Err(PropsError::Ragged);
    }
    let props = ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let col: Vec<f64> = vectors.iter().map(|v| v.values[j]).collect();
            column_stat(id, &col)
        })
        .collect();
    Ok(PropertyStats { count: vectors.len(), props })
}

pub(crate) fn column_stat(id: &str, col: &[f64]) -> PropStat {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let median = sorted[(sorted.len() - 1) / 2];
    let constant = max == min;
    PropStat {
        id: id.to_string(),
        mean,
        std,
        min,
        max,
        median,
        near_constant: constant || std <= near_constant_threshold(mean),
        constant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionRow {
    pub size: i64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyProgression {
    pub id: String,
    pub rows: Vec<ProgressionRow>,
    /// Least-squares `(slope, intercept)` of max against size.
    pub fit: Option<(f64, f64)>,
}

impl PropertyProgression {
    pub fn predict(&self, size: f64) -> Option<f64> {
        self.fit.map(|(a, b)| a * size + b)
    }

    /// Largest size in the table plus the typical step between sizes.
    pub fn next_size(&self) -> Option<i64> {
        let last = self.rows.last()?.size;
        if self.rows.len() < 2 {
            return None;
        }
        let step = (last - self.rows[0].size) / (self.rows.len() as i64 - 1);
        Some(last + step.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progression {
    pub props: Vec<PropertyProgression>,
}

impl Progression {
    pub fn get(&self, id: &str) -> Option<&PropertyProgression> {
        self.props.iter().find(|p| p.id == id)
    }
}

/// Per-property table across instance sizes; the fit is absent with fewer
/// than two sizes.
pub fn progression_table(per_size: &BTreeMap<i64, PropertyStats>) -> Progression {
    let Some(first) = per_size.values().next() else {
        return Progression { props: Vec::new() };
    };
    let props = first
        .props
        .iter()
        .map(|p0| {
            let rows: Vec<ProgressionRow> = per_size
                .iter()
                .filter_map(|(size, st)| {
                    st.get(&p0.id).map(|p| ProgressionRow { size: *size, mean: p.mean, min: p.min, max: p.max })
                })
                .collect();
            let fit = (rows.len() >= 2).then(|| {
                let xs: Vec<f64> = rows.iter().map(|r| r.size as f64).collect();
                let ys: Vec<f64> = rows.iter().map(|r| r.max).collect();
                least_squares(&xs, &ys)
            });
            PropertyProgression { id: p0.id.clone(), rows, fit }
        })
        .collect();
    Progression { props }
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs(vals: &[f64]) -> Vec<PropertyVector> {
        vals.iter().map(|v| PropertyVector { solution: String::new(), values: vec![*v] }).collect()
    }

    #[test]
    fn classification() {
        let s = classify_with_ids(&["p"], &vecs(&[7.0, 7.0, 7.0])).unwrap();
        assert!(s.props[0].constant && s.props[0].near_constant);
        let s = classify_with_ids(&["p"], &vecs(&[1.0, 100.0])).unwrap();
        assert!(!s.props[0].constant && !s.props[0].near_constant);
        assert_eq!(s.props[0].median, 1.0);
        // mean 1.32, population std 0.009
        let s = classify_with_ids(&["p"], &vecs(&[1.311, 1.329])).unwrap();
        assert!((s.props[0].std - 0.009).abs() < 1e-12);
        assert!(s.props[0].near_constant && !s.props[0].constant);
        assert!(classify_with_ids(&["p"], &vecs(&[1.0])).is_err());
    }

    #[test]
    fn progression_fit() {
        let mut per = BTreeMap::new();
        for (n, max) in [(3, 6.0), (4, 10.0), (5, 15.0)] {
            per.insert(n, classify_with_ids(&["row_sums_max", "k"], &[
                PropertyVector { solution: String::new(), values: vec![max, 2.0] },
                PropertyVector { solution: String::new(), values: vec![max, 2.0] },
            ]).unwrap());
        }
        let p = progression_table(&per);
        let (slope, _) = p.get("row_sums_max").unwrap().fit.unwrap();
        assert!((slope - 4.5).abs() < 1e-12);
        assert_eq!(p.get("k").unwrap().fit.unwrap().0, 0.0);
        assert_eq!(p.get("k").unwrap().next_size(), Some(6));
        per.retain(|k, _| *k == 4);
        assert!(progression_table(&per).props[0].fit.is_none());
    }
}
