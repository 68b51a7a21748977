//! Solution to tensor encoders, one per variable-shape kind.

use crate::corpus::{PackingNames, Problem, ShapeKind, Solution};
use crate::minicp::{MiniModel, ParamValue};
use crate::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EncodeError {
    #[error("solution {0} has no variable `{1}`")]
    MissingVar(String, String),
    #[error("model has no parameter `{0}`")]
    MissingParam(String),
    #[error("{0}")]
    Shape(String),
    #[error("value {value} outside domain {lo}..{hi} in {var}")]
    OutOfDomain { var: String, value: i64, lo: i64, hi: i64 },
    #[error("containers {a} and {b} overlap at cell ({row}, {col})")]
    Overlap { a: usize, b: usize, row: usize, col: usize },
    #[error("container {0} lies outside the deck")]
    OffDeck(usize),
}

/// Channels-first dense tensor with cells in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTensor<T> {
    pub kind: ShapeKind,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> SolutionTensor<T> {
    pub fn zeros(kind: ShapeKind, channels: usize, height: usize, width: usize) -> Self {
        SolutionTensor { kind, channels, height, width, data: vec![T::zero(); channels * height * width] }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn at(&self, c: usize, r: usize, col: usize) -> T {
        self.data[(c * self.height + r) * self.width + col]
    }

    pub fn set(&mut self, c: usize, r: usize, col: usize, v: T) {
        self.data[(c * self.height + r) * self.width + col] = v;
    }

    /// Sum over channels: the `H x W` plane property code works on.
    pub fn plane(&self) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; hw];
        for c in 0..self.channels {
            for (o, v) in out.iter_mut().zip(&self.data[c * hw..(c + 1) * hw]) {
                *o += v.f64();
            }
        }
        out
    }

    /// Text grid for inspection; see [`crate::grid`].
    pub fn to_grid(&self, name: &str) -> String {
        let data: Vec<f64> = self.data.iter().map(|v| v.f64()).collect();
        crate::grid::write_grid(name, self.channels, self.height, self.width, &data)
    }
}

pub fn encode<T: Scalar>(problem: &Problem, model: &MiniModel, sol: &Solution) -> Result<SolutionTensor<T>, EncodeError> {
    let primary = problem.primary_var(model);
    match problem.kind() {
        ShapeKind::Matrix => encode_matrix(model, sol, &primary),
        ShapeKind::Permutation => encode_permutation(model, sol, &primary),
        ShapeKind::Assignment => encode_assignment(model, sol, &primary),
        ShapeKind::PackingCoords => encode_packing(model, sol, &problem.spec.packing),
    }
}

fn var_values<'s>(model: &MiniModel, sol: &'s Solution, name: &str) -> Result<(&'s [i64], Vec<usize>, (i64, i64)), EncodeError> {
    let decl = model.var(name).ok_or_else(|| EncodeError::Shape(format!("model has no variable `{name}`")))?;
    let vals = sol.get(name).ok_or_else(|| EncodeError::MissingVar(sol.id(), name.to_string()))?;
    if vals.len() != decl.len() {
        return Err(EncodeError::Shape(format!("{name} has {} values, expected {}", vals.len(), decl.len())));
    }
    let extents = decl.shape.iter().map(|(l, h)| (h - l + 1) as usize).collect();
    Ok((vals, extents, decl.domain))
}

fn plane_dims(name: &str, extents: &[usize]) -> Result<(usize, usize), EncodeError> {
    match extents {
        [w] => Ok((1, *w)),
        [h, w] => Ok((*h, *w)),
        _ => Err(EncodeError::Shape(format!("{name} must be 1-D or 2-D"))),
    }
}

fn check_domain(var: &str, v: i64, (lo, hi): (i64, i64)) -> Result<(), EncodeError> {
    if v < lo || v > hi {
        return Err(EncodeError::OutOfDomain { var: var.to_string(), value: v, lo, hi });
    }
    Ok(())
}

/// Grayscale: value divided by the declared domain maximum.
fn encode_matrix<T: Scalar>(model: &MiniModel, sol: &Solution, var: &str) -> Result<SolutionTensor<T>, EncodeError> {
    let (vals, ext, dom) = var_values(model, sol, var)?;
    let (h, w) = plane_dims(var, &ext)?;
    if dom.1 <= 0 {
        return Err(EncodeError::Shape(format!("{var} needs a positive domain maximum for grayscale")));
    }
    let mut t = SolutionTensor::zeros(ShapeKind::Matrix, 1, h, w);
    for (i, &v) in vals.iter().enumerate() {
        check_domain(var, v, dom)?;
        t.data[i] = T::of(v as f64 / dom.1 as f64);
    }
    Ok(t)
}

/// `n x |domain|` 0/1 matrix with a one at `(p, x[p] - lo)`.
fn encode_permutation<T: Scalar>(model: &MiniModel, sol: &Solution, var: &str) -> Result<SolutionTensor<T>, EncodeError> {
    let (vals, ext, dom) = var_values(model, sol, var)?;
    if ext.len() != 1 {
        return Err(EncodeError::Shape(format!("{var} must be 1-D for the permutation encoding")));
    }
    let w = (dom.1 - dom.0 + 1) as usize;
    let mut t = SolutionTensor::zeros(ShapeKind::Permutation, 1, vals.len(), w);
    for (p, &v) in vals.iter().enumerate() {
        check_domain(var, v, dom)?;
        t.set(0, p, (v - dom.0) as usize, T::one());
    }
    Ok(t)
}

/// One-hot over values, one channel per value, on the entity x slot plane.
fn encode_assignment<T: Scalar>(model: &MiniModel, sol: &Solution, var: &str) -> Result<SolutionTensor<T>, EncodeError> {
    let (vals, ext, dom) = var_values(model, sol, var)?;
    let (h, w) = plane_dims(var, &ext)?;
    let c = (dom.1 - dom.0 + 1) as usize;
    let mut t = SolutionTensor::zeros(ShapeKind::Assignment, c, h, w);
    for (i, &v) in vals.iter().enumerate() {
        check_domain(var, v, dom)?;
        t.set((v - dom.0) as usize, i / w, i % w, T::one());
    }
    Ok(t)
}

pub(crate) fn param_array<'m>(model: &'m MiniModel, name: &str) -> Result<&'m [i64], EncodeError> {
    match model.params.get(name) {
        Some(ParamValue::Array { data, .. }) => Ok(data),
        _ => Err(EncodeError::MissingParam(name.to_string())),
    }
}

pub(crate) fn param_int(model: &MiniModel, name: &str) -> Result<i64, EncodeError> {
    model.param_int(name).ok_or_else(|| EncodeError::MissingParam(name.to_string()))
}

/// Container footprint `(left, bottom, extent along left, extent along bottom)`
/// honoring rotation.
pub(crate) fn footprints(model: &MiniModel, sol: &Solution, n: &PackingNames) -> Result<Vec<(i64, i64, i64, i64)>, EncodeError> {
    let left = sol.get(&n.left).ok_or_else(|| EncodeError::MissingVar(sol.id(), n.left.clone()))?;
    let bottom = sol.get(&n.bottom).ok_or_else(|| EncodeError::MissingVar(sol.id(), n.bottom.clone()))?;
    let width = param_array(model, &n.width)?;
    let length = param_array(model, &n.length)?;
    let rotated = sol.get(&n.rotated);
    let k = left.len();
    if bottom.len() != k || width.len() != k || length.len() != k || rotated.is_some_and(|r| r.len() != k) {
        return Err(EncodeError::Shape("container arrays disagree in length".into()));
    }
    Ok((0..k)
        .map(|c| {
            let rot = rotated.is_some_and(|r| r[c] != 0);
            let (w, l) = if rot { (length[c], width[c]) } else { (width[c], length[c]) };
            (left[c], bottom[c], w, l)
        })
        .collect())
}

/// Deck grid, rows along `Bottom`, columns along `Left`; each covered cell
/// holds the container's class over the largest class, empty cells 0.
fn encode_packing<T: Scalar>(model: &MiniModel, sol: &Solution, n: &PackingNames) -> Result<SolutionTensor<T>, EncodeError> {
    let deck_w = param_int(model, &n.deck_width)?;
    let deck_l = param_int(model, &n.deck_length)?;
    let class = param_array(model, &n.class)?;
    let fp = footprints(model, sol, n)?;
    if class.len() != fp.len() {
        return Err(EncodeError::Shape("class array disagrees with containers".into()));
    }
    let max_class = class.iter().copied().max().unwrap_or(1).max(1);
    let (h, w) = (deck_l as usize, deck_w as usize);
    let mut owner: Vec<Option<usize>> = vec![None; h * w];
    let mut t = SolutionTensor::zeros(ShapeKind::PackingCoords, 1, h, w);
    for (c, &(x, y, cw, cl)) in fp.iter().enumerate() {
        if x < 0 || y < 0 || x + cw > deck_w || y + cl > deck_l {
            return Err(EncodeError::OffDeck(c));
        }
        for row in y as usize..(y + cl) as usize {
            for col in x as usize..(x + cw) as usize {
                if let Some(a) = owner[row * w + col] {
                    return Err(EncodeError::Overlap { a, b: c, row, col });
                }
                owner[row * w + col] = Some(c);
                t.set(0, row, col, T::of(class[c] as f64 / max_class as f64));
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ProblemSpec;
    use crate::minicp::ModelFile;
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    fn problem(kind: &str, model: &str) -> (Problem, MiniModel) {
        let mf = ModelFile::from_toml_str(model).unwrap();
        let spec: ProblemSpec = toml::from_str(&format!("id = \"t\"\nkind = \"{kind}\"\n[instances.i]\n")).unwrap();
        let m = mf.instantiate(&BTreeMap::new()).unwrap();
        (Problem::new(spec, PathBuf::new(), Some(mf)).unwrap(), m)
    }

    fn sol(pairs: &[(&str, Vec<i64>)]) -> Solution {
        Solution { instance: "i".into(), index: 0, vars: pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect() }
    }

    #[test]
    fn permutation_ones() {
        let (p, m) = problem("permutation", "[[var]]\nname = \"x\"\nshape = [\"1..3\"]\ndomain = \"1..3\"\n");
        let t: SolutionTensor<f64> = encode(&p, &m, &sol(&[("x", vec![2, 1, 3])])).unwrap();
        let ones: Vec<(usize, usize)> =
            (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).filter(|&(r, c)| t.at(0, r, c) == 1.0).collect();
        assert_eq!(ones, vec![(0, 1), (1, 0), (2, 2)]);
    }

    #[test]
    fn grayscale() {
        let (p, m) = problem("matrix", "[[var]]\nname = \"a\"\nshape = [\"1..2\", \"1..2\"]\ndomain = \"1..2\"\n");
        let t: SolutionTensor<f64> = encode(&p, &m, &sol(&[("a", vec![1, 2, 2, 1])])).unwrap();
        assert_eq!(t.data, vec![0.5, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn assignment_one_hot() {
        let (p, m) = problem("assignment", "[[var]]\nname = \"g\"\nshape = [\"1..2\", \"1..3\"]\ndomain = \"1..2\"\n");
        let t: SolutionTensor<f32> = encode(&p, &m, &sol(&[("g", vec![1, 2, 2, 1, 1, 2])])).unwrap();
        assert_eq!(t.dims(), (2, 2, 3));
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(t.at(0, r, c) + t.at(1, r, c), 1.0);
            }
        }
        assert_eq!(t.at(1, 0, 1), 1.0);
    }

    const PACK: &str = r#"
[params]
deck_width = 3
deck_length = 2
width = [2, 1]
length = [1, 1]
class = [2, 1]
[[var]]
name = "Left"
shape = ["1..2"]
domain = "0..2"
[[var]]
name = "Bottom"
shape = ["1..2"]
domain = "0..1"
[[var]]
name = "rotated"
shape = ["1..2"]
domain = "bool"
"#;

    #[test]
    fn packing_class_cells() {
        let (p, m) = problem("packing_coords", PACK);
        let s = sol(&[("Left", vec![0, 2]), ("Bottom", vec![0, 1]), ("rotated", vec![0, 0])]);
        let t: SolutionTensor<f64> = encode(&p, &m, &s).unwrap();
        assert_eq!(t.at(0, 0, 0), 1.0);
        assert_eq!(t.at(0, 0, 1), 1.0);
        assert_eq!(t.at(0, 1, 2), 0.5);
        assert_eq!(t.data.iter().filter(|&&v| v == 1.0).count(), 2);
        assert_eq!(t.data.iter().filter(|&&v| v == 0.5).count(), 1);
    }

    #[test]
    fn packing_rotation_and_overlap() {
        let (p, m) = problem("packing_coords", PACK);
        let s = sol(&[("Left", vec![0, 0]), ("Bottom", vec![0, 1]), ("rotated", vec![1, 0])]);
        let err = encode::<f64>(&p, &m, &s).unwrap_err();
        assert!(matches!(err, EncodeError::Overlap { a: 0, b: 1, row: 1, col: 0 }), "{err}");
    }
}
