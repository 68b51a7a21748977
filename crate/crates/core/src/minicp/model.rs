//! Self-contained problem models for the builtin solver.
//!
//! A model file is TOML:
//!
//! ```toml
//! name = "latin_square"
//! constraints = [
//!   "forall(i in 1..n)(alldifferent([a[i, j] | j in 1..n]))",
//! ]
//!
//! [params]
//! n = 4                       # integer
//! layout = [[1, 2], [3, 4]]   # 1-D or 2-D integer arrays, indexed from 1
//! Cells = "1..n * n"          # strings are expressions: `lo..hi` is a set
//! total = "n * (n + 1) div 2" # anything else must evaluate to an integer
//!
//! [[var]]
//! name = "a"
//! shape = ["1..n", "1..n"]    # one index range per dimension
//! domain = "1..n"             # or "bool" (0/1, usable with `not`)
//! ```
//!
//! String parameters may reference each other in any order. Instance data
//! files use the same `[params]` table and override the model's values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::eval::{Evaluator, NoVars};
use super::parser::{parse_expr_text, parse_range_text};
use super::printer::print_expr;
use super::MiniCpError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSource {
    Int(i64),
    Array1(Vec<i64>),
    Array2(Vec<Vec<i64>>),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamValue {
    Int(i64),
    Set(i64, i64),
    Array { dims: Vec<(i64, i64)>, data: Vec<i64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSource {
    pub name: String,
    #[serde(default)]
    pub shape: Vec<String>,
    pub domain: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, ParamSource>,
    #[serde(default, rename = "var")]
    pub vars: Vec<VarSource>,
}

impl ModelFile {
    pub fn from_toml_str(text: &str) -> Result<Self, MiniCpError> {
        toml::from_str(text).map_err(|e| MiniCpError::Model(format!("model file: {e}")))
    }

    /// Resolve parameters (with `overrides` taking precedence), declarations
    /// and constraints into a checked model.
    pub fn instantiate(
        &self,
        overrides: &BTreeMap<String, ParamSource>,
    ) -> Result<MiniModel, MiniCpError> {
        let mut sources = self.params.clone();
        for (k, v) in overrides {
            sources.insert(k.clone(), v.clone());
        }
        let params = resolve_params(&sources)?;
        let mut model = MiniModel {
            name: self.name.clone(),
            params,
            vars: Vec::new(),
            constraints: Vec::new(),
        };
        for v in &self.vars {
            let decl = VarDecl::resolve(v, &model)?;
            if model.var_index(&decl.name).is_some() || model.params.contains_key(&decl.name) {
                return Err(MiniCpError::Model(format!("`{}` declared twice", decl.name)));
            }
            model.vars.push(decl);
        }
        for text in &self.constraints {
            let e = model.parse_constraint(text)?;
            model.constraints.push(e);
        }
        Ok(model)
    }
}

fn resolve_params(
    sources: &BTreeMap<String, ParamSource>,
) -> Result<BTreeMap<String, ParamValue>, MiniCpError> {
    let mut done: BTreeMap<String, ParamValue> = BTreeMap::new();
    let mut pending: Vec<(&String, &String)> = Vec::new();
    for (name, src) in sources {
        match src {
            ParamSource::Int(v) => {
                done.insert(name.clone(), ParamValue::Int(*v));
            }
            ParamSource::Array1(v) => {
                let dims = vec![(1, v.len() as i64)];
                done.insert(name.clone(), ParamValue::Array { dims, data: v.clone() });
            }
            ParamSource::Array2(rows) => {
                let width = rows.first().map(|r| r.len()).unwrap_or(0);
                if rows.iter().any(|r| r.len() != width) {
                    return Err(MiniCpError::Model(format!("parameter `{name}` is not rectangular")));
                }
                let dims = vec![(1, rows.len() as i64), (1, width as i64)];
                let data = rows.iter().flatten().copied().collect();
                done.insert(name.clone(), ParamValue::Array { dims, data });
            }
            ParamSource::Expr(text) => pending.push((name, text)),
        }
    }
    while !pending.is_empty() {
        let before = pending.len();
        let mut still = Vec::new();
        let mut last_err = None;
        for (name, text) in pending {
            let probe = MiniModel {
                name: String::new(),
                params: done.clone(),
                vars: Vec::new(),
                constraints: Vec::new(),
            };
            match eval_param_text(text, &probe) {
                Ok(v) => {
                    done.insert(name.clone(), v);
                }
                Err(e) => {
                    last_err = Some((name.clone(), e));
                    still.push((name, text));
                }
            }
        }
        if still.len() == before {
            let (name, e) = last_err.expect("no progress implies an error");
            return Err(MiniCpError::Model(format!("cannot resolve parameter `{name}`: {e}")));
        }
        pending = still;
    }
    Ok(done)
}

fn eval_param_text(text: &str, model: &MiniModel) -> Result<ParamValue, MiniCpError> {
    let ev = Evaluator::new(model);
    if text.contains("..") {
        let (lo, hi) = parse_range_text(text)?;
        return Ok(ParamValue::Set(ev.eval_int(&lo, &NoVars)?, ev.eval_int(&hi, &NoVars)?));
    }
    let e = parse_expr_text(text)?;
    Ok(ParamValue::Int(ev.eval_int(&e, &NoVars)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    /// Inclusive index range per dimension.
    pub shape: Vec<(i64, i64)>,
    /// Source expressions of `shape`, kept so generated constraints can refer
    /// to symbolic bounds like `1..n`.
    pub shape_src: Vec<(Expr, Expr)>,
    pub domain: (i64, i64),
    pub is_bool: bool,
}

impl VarDecl {
    fn resolve(src: &VarSource, model: &MiniModel) -> Result<Self, MiniCpError> {
        let ev = Evaluator::new(model);
        let mut shape = Vec::new();
        let mut shape_src = Vec::new();
        for r in &src.shape {
            let (lo, hi) = parse_range_text(r)?;
            model.check_bound(&lo)?;
            model.check_bound(&hi)?;
            let (l, h) = (ev.eval_int(&lo, &NoVars)?, ev.eval_int(&hi, &NoVars)?);
            if h < l {
                return Err(MiniCpError::Model(format!("empty index range {r} for `{}`", src.name)));
            }
            shape.push((l, h));
            shape_src.push((lo, hi));
        }
        let (domain, is_bool) = if src.domain.trim() == "bool" {
            ((0, 1), true)
        } else {
            let (lo, hi) = parse_range_text(&src.domain)?;
            ((ev.eval_int(&lo, &NoVars)?, ev.eval_int(&hi, &NoVars)?), false)
        };
        if domain.1 < domain.0 {
            return Err(MiniCpError::Model(format!("empty domain for `{}`", src.name)));
        }
        Ok(VarDecl { name: src.name.clone(), shape, shape_src, domain, is_bool })
    }

    pub fn len(&self) -> usize {
        self.shape.iter().map(|(l, h)| (h - l + 1) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major offset of an index tuple, or `None` when out of bounds.
    pub fn flat_index(&self, idx: &[i64]) -> Option<usize> {
        flat_offset(&self.shape, idx)
    }

    /// Index tuple of a row-major offset.
    pub fn unflatten(&self, mut flat: usize) -> Vec<i64> {
        let mut out = vec![0; self.shape.len()];
        for (d, (l, h)) in self.shape.iter().enumerate().rev() {
            let extent = (h - l + 1) as usize;
            out[d] = l + (flat % extent) as i64;
            flat /= extent;
        }
        out
    }
}

pub(crate) fn flat_offset(dims: &[(i64, i64)], idx: &[i64]) -> Option<usize> {
    if dims.len() != idx.len() {
        return None;
    }
    let mut flat = 0usize;
    for ((l, h), &i) in dims.iter().zip(idx) {
        if i < *l || i > *h {
            return None;
        }
        flat = flat * (h - l + 1) as usize + (i - l) as usize;
    }
    Some(flat)
}

/// A resolved model: concrete parameters, variable declarations and base
/// constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniModel {
    pub name: String,
    pub params: BTreeMap<String, ParamValue>,
    pub vars: Vec<VarDecl>,
    pub constraints: Vec<Expr>,
}

impl MiniModel {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn param_int(&self, name: &str) -> Option<i64> {
        match self.params.get(name) {
            Some(ParamValue::Int(v)) => Some(*v),
            _ => None,
        }
    }

    /// Parse a constraint and check every identifier resolves in this model.
    pub fn parse_constraint(&self, text: &str) -> Result<Expr, MiniCpError> {
        let e = parse_expr_text(text)?;
        self.check_bound(&e)?;
        Ok(e)
    }

    /// Fails with [`MiniCpError::Unbound`] naming the first identifier that
    /// is neither a parameter, a variable nor a generator variable in scope.
    pub fn check_bound(&self, e: &Expr) -> Result<(), MiniCpError> {
        let mut scope = Vec::new();
        self.check_expr(e, &mut scope)
    }

    fn check_expr(&self, e: &Expr, scope: &mut Vec<String>) -> Result<(), MiniCpError> {
        match e {
            Expr::Int(_) | Expr::Bool(_) => Ok(()),
            Expr::Ident(n) => {
                if scope.iter().any(|s| s == n) {
                    return Ok(());
                }
                match self.params.get(n) {
                    Some(ParamValue::Int(_)) => Ok(()),
                    Some(_) => Err(MiniCpError::Type(format!("`{n}` is not a scalar"))),
                    None => match self.var(n) {
                        Some(v) if v.shape.is_empty() => Ok(()),
                        Some(_) => Err(MiniCpError::Type(format!("`{n}` is an array; index it"))),
                        None => Err(MiniCpError::Unbound(n.clone())),
                    },
                }
            }
            Expr::Index(n, idx) => {
                let arity = match (self.params.get(n), self.var(n)) {
                    (Some(ParamValue::Array { dims, .. }), _) => dims.len(),
                    (Some(_), _) => {
                        return Err(MiniCpError::Type(format!("`{n}` is not an array")))
                    }
                    (None, Some(v)) => v.shape.len(),
                    (None, None) => return Err(MiniCpError::Unbound(n.clone())),
                };
                if arity != idx.len() {
                    return Err(MiniCpError::Type(format!(
                        "`{n}` has {arity} dimension(s), indexed with {}",
                        idx.len()
                    )));
                }
                idx.iter().try_for_each(|i| self.check_expr(i, scope))
            }
            Expr::Unary(_, inner) => self.check_expr(inner, scope),
            Expr::Binary(_, l, r) => {
                self.check_expr(l, scope)?;
                self.check_expr(r, scope)
            }
            Expr::Call(_, args) => args.iter().try_for_each(|a| match a {
                CallArg::Scalar(e) => self.check_expr(e, scope),
                CallArg::Array(arr) => self.check_array(arr, scope),
            }),
            Expr::Aggregate(_, gens, body) => {
                let depth = scope.len();
                self.check_generators(gens, scope)?;
                let r = self.check_expr(body, scope);
                scope.truncate(depth);
                r
            }
        }
    }

    fn check_array(&self, arr: &ArrayExpr, scope: &mut Vec<String>) -> Result<(), MiniCpError> {
        match arr {
            ArrayExpr::Literal(items) => items.iter().try_for_each(|e| self.check_expr(e, scope)),
            ArrayExpr::Comprehension(body, gens) => {
                let depth = scope.len();
                self.check_generators(gens, scope)?;
                let r = self.check_expr(body, scope);
                scope.truncate(depth);
                r
            }
            ArrayExpr::Whole(n) => match (self.params.get(n), self.var(n)) {
                (Some(ParamValue::Array { dims, .. }), _) if dims.len() == 1 => Ok(()),
                (None, Some(v)) if v.shape.len() == 1 => Ok(()),
                (None, None) => Err(MiniCpError::Unbound(n.clone())),
                _ => Err(MiniCpError::Type(format!("`{n}` is not a one-dimensional array"))),
            },
        }
    }

    fn check_generators(&self, gens: &[Generator], scope: &mut Vec<String>) -> Result<(), MiniCpError> {
        for g in gens {
            match &g.set {
                SetExpr::Named(n) => match self.params.get(n) {
                    Some(ParamValue::Set(..)) => {}
                    Some(_) => return Err(MiniCpError::Type(format!("`{n}` is not a set"))),
                    None => return Err(MiniCpError::Unbound(n.clone())),
                },
                SetExpr::Range(lo, hi) => {
                    self.check_expr(lo, scope)?;
                    self.check_expr(hi, scope)?;
                }
            }
            scope.extend(g.vars.iter().cloned());
            if let Some(w) = &g.filter {
                self.check_expr(w, scope)?;
            }
        }
        Ok(())
    }

    /// MiniZinc-flavoured text of the model, shown to language models.
    pub fn render(&self) -> String {
        let mut s = String::new();
        if !self.name.is_empty() {
            let _ = writeln!(s, "% {}", self.name);
        }
        for (name, p) in &self.params {
            match p {
                ParamValue::Int(v) => {
                    let _ = writeln!(s, "int: {name} = {v};");
                }
                ParamValue::Set(l, h) => {
                    let _ = writeln!(s, "set of int: {name} = {l}..{h};");
                }
                ParamValue::Array { dims, data } => {
                    let ranges: Vec<String> = dims.iter().map(|(l, h)| format!("{l}..{h}")).collect();
                    let vals: Vec<String> = data.iter().map(|v| v.to_string()).collect();
                    let body = if dims.len() == 1 {
                        format!("[{}]", vals.join(", "))
                    } else {
                        format!("array{}d({}, [{}])", dims.len(), ranges.join(", "), vals.join(", "))
                    };
                    let _ = writeln!(s, "array[{}] of int: {name} = {body};", ranges.join(", "));
                }
            }
        }
        for v in &self.vars {
            let ty = if v.is_bool {
                "var bool".to_string()
            } else {
                format!("var {}..{}", v.domain.0, v.domain.1)
            };
            if v.shape.is_empty() {
                let _ = writeln!(s, "{ty}: {};", v.name);
            } else {
                let ranges: Vec<String> = v
                    .shape_src
                    .iter()
                    .map(|(l, h)| format!("{}..{}", print_expr(l), print_expr(h)))
                    .collect();
                let _ = writeln!(s, "array[{}] of {ty}: {};", ranges.join(", "), v.name);
            }
        }
        for c in &self.constraints {
            let _ = writeln!(s, "constraint {};", print_expr(c));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LATIN: &str = r#"
name = "latin"
constraints = ["forall(i in 1..n)(alldifferent([a[i, j] | j in 1..n]))"]
[params]
n = 3
N2 = "1..n * n"
total = "half * 2"
half = "n * (n + 1) div 2"
[[var]]
name = "a"
shape = ["1..n", "1..n"]
domain = "1..n"
"#;

    #[test]
    fn params_resolve_in_any_order() {
        let m = ModelFile::from_toml_str(LATIN).unwrap().instantiate(&BTreeMap::new()).unwrap();
        assert_eq!(m.params["total"], ParamValue::Int(12));
        assert_eq!(m.params["N2"], ParamValue::Set(1, 9));
        assert_eq!(m.vars[0].shape, vec![(1, 3), (1, 3)]);
    }

    #[test]
    fn overrides_win() {
        let file = ModelFile::from_toml_str(LATIN).unwrap();
        let mut o = BTreeMap::new();
        o.insert("n".to_string(), ParamSource::Int(5));
        let m = file.instantiate(&o).unwrap();
        assert_eq!(m.vars[0].len(), 25);
        assert_eq!(m.params["half"], ParamValue::Int(15));
    }

    #[test]
    fn unbound_identifier_named() {
        let m = ModelFile::from_toml_str(LATIN).unwrap().instantiate(&BTreeMap::new()).unwrap();
        match m.parse_constraint("forall(i in 1..n)(b[i, 1] = 1)") {
            Err(MiniCpError::Unbound(n)) => assert_eq!(n, "b"),
            other => panic!("{other:?}"),
        }
        // generator variables go out of scope after their aggregate
        assert!(matches!(
            m.parse_constraint("forall(i in 1..n)(a[i, i] = 1) /\\ i = 1"),
            Err(MiniCpError::Unbound(_))
        ));
    }

    #[test]
    fn flat_index_roundtrip() {
        let m = ModelFile::from_toml_str(LATIN).unwrap().instantiate(&BTreeMap::new()).unwrap();
        let v = &m.vars[0];
        for f in 0..v.len() {
            assert_eq!(v.flat_index(&v.unflatten(f)), Some(f));
        }
        assert_eq!(v.flat_index(&[4, 1]), None);
    }

    #[test]
    fn cyclic_params_fail() {
        let t = "[params]\na = \"b + 1\"\nb = \"a + 1\"\n";
        let err = ModelFile::from_toml_str(t).unwrap().instantiate(&BTreeMap::new()).unwrap_err();
        assert!(matches!(err, MiniCpError::Model(_)));
    }
}
