//! Tree-walking evaluation of constraint expressions.

use super::ast::*;
use super::model::{flat_offset, MiniModel, ParamValue, VarDecl};
use super::MiniCpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

/// Source of decision-variable values during evaluation.
pub trait VarLookup {
    /// Value of element `flat` (row-major) of variable `var_idx`, or `None`
    /// when unassigned.
    fn get(&self, var_idx: usize, decl: &VarDecl, flat: usize) -> Option<i64>;
}

/// A lookup with no variables bound; used for parameter arithmetic.
pub struct NoVars;

impl VarLookup for NoVars {
    fn get(&self, _: usize, _: &VarDecl, _: usize) -> Option<i64> {
        None
    }
}

/// Flat per-variable value vectors in model declaration order.
impl VarLookup for Vec<Vec<i64>> {
    fn get(&self, var_idx: usize, _: &VarDecl, flat: usize) -> Option<i64> {
        self.as_slice().get(var_idx).and_then(|v| v.get(flat)).copied()
    }
}

pub struct Evaluator<'m> {
    pub model: &'m MiniModel,
}

type Locals = Vec<(String, i64)>;

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m MiniModel) -> Self {
        Evaluator { model }
    }

    pub fn eval_bool(&self, e: &Expr, vars: &dyn VarLookup) -> Result<bool, MiniCpError> {
        self.eval_bool_in(e, vars, &mut Vec::new())
    }

    pub fn eval_int(&self, e: &Expr, vars: &dyn VarLookup) -> Result<i64, MiniCpError> {
        self.eval_int_in(e, vars, &mut Vec::new())
    }

    pub(crate) fn eval_bool_in(
        &self,
        e: &Expr,
        vars: &dyn VarLookup,
        locals: &mut Locals,
    ) -> Result<bool, MiniCpError> {
        match self.eval(e, vars, locals)? {
            Value::Bool(b) => Ok(b),
            Value::Int(_) => Err(MiniCpError::Type(format!("expected a boolean: {e}"))),
        }
    }

    pub(crate) fn eval_int_in(
        &self,
        e: &Expr,
        vars: &dyn VarLookup,
        locals: &mut Locals,
    ) -> Result<i64, MiniCpError> {
        match self.eval(e, vars, locals)? {
            Value::Int(v) => Ok(v),
            Value::Bool(_) => Err(MiniCpError::Type(format!("expected an integer: {e}"))),
        }
    }

    pub fn eval(&self, e: &Expr, vars: &dyn VarLookup, locals: &mut Locals) -> Result<Value, MiniCpError> {
        Ok(match e {
            Expr::Int(v) => Value::Int(*v),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Ident(n) => {
                if let Some((_, v)) = locals.iter().rev().find(|(k, _)| k == n) {
                    return Ok(Value::Int(*v));
                }
                if let Some(ParamValue::Int(v)) = self.model.params.get(n) {
                    return Ok(Value::Int(*v));
                }
                self.var_value(n, &[], vars)?
            }
            Expr::Index(n, idx) => {
                let mut at = Vec::with_capacity(idx.len());
                for i in idx {
                    at.push(self.eval_int_in(i, vars, locals)?);
                }
                if let Some(ParamValue::Array { dims, data }) = self.model.params.get(n) {
                    let off = flat_offset(dims, &at).ok_or_else(|| oob(n, &at))?;
                    return Ok(Value::Int(data[off]));
                }
                self.var_value(n, &at, vars)?
            }
            Expr::Unary(UnOp::Neg, inner) => Value::Int(
                self.eval_int_in(inner, vars, locals)?
                    .checked_neg()
                    .ok_or_else(|| overflow(e))?,
            ),
            Expr::Unary(UnOp::Not, inner) => Value::Bool(!self.eval_bool_in(inner, vars, locals)?),
            Expr::Binary(op, l, r) => self.binary(*op, l, r, vars, locals, e)?,
            Expr::Call(b, args) => self.call(*b, args, vars, locals)?,
            Expr::Aggregate(agg, gens, body) => {
                let mut acc = match agg {
                    Aggregate::Forall => Value::Bool(true),
                    Aggregate::Exists => Value::Bool(false),
                    Aggregate::Sum => Value::Int(0),
                };
                let mut failure = None;
                self.for_each_binding(gens, 0, vars, locals, &mut |ev, locals| {
                    match (agg, &mut acc) {
                        (Aggregate::Forall, Value::Bool(b)) => {
                            if !ev.eval_bool_in(body, vars, locals)? {
                                *b = false;
                                return Ok(false);
                            }
                        }
                        (Aggregate::Exists, Value::Bool(b)) => {
                            if ev.eval_bool_in(body, vars, locals)? {
                                *b = true;
                                return Ok(false);
                            }
                        }
                        (Aggregate::Sum, Value::Int(s)) => {
                            let v = ev.eval_int_in(body, vars, locals)?;
                            match s.checked_add(v) {
                                Some(t) => *s = t,
                                None => {
                                    failure = Some(overflow(e));
                                    return Ok(false);
                                }
                            }
                        }
                        _ => unreachable!(),
                    }
                    Ok(true)
                })?;
                if let Some(err) = failure {
                    return Err(err);
                }
                acc
            }
        })
    }

    fn var_value(&self, n: &str, at: &[i64], vars: &dyn VarLookup) -> Result<Value, MiniCpError> {
        let Some(vi) = self.model.var_index(n) else {
            return Err(MiniCpError::Unbound(n.to_string()));
        };
        let decl = &self.model.vars[vi];
        let flat = decl.flat_index(at).ok_or_else(|| oob(n, at))?;
        let v = vars
            .get(vi, decl, flat)
            .ok_or_else(|| MiniCpError::Unassigned(format!("{n}{at:?}")))?;
        Ok(if decl.is_bool { Value::Bool(v != 0) } else { Value::Int(v) })
    }

    fn binary(
        &self,
        op: BinOp,
        l: &Expr,
        r: &Expr,
        vars: &dyn VarLookup,
        locals: &mut Locals,
        whole: &Expr,
    ) -> Result<Value, MiniCpError> {
        match op {
            BinOp::And => {
                return Ok(Value::Bool(
                    self.eval_bool_in(l, vars, locals)? && self.eval_bool_in(r, vars, locals)?,
                ))
            }
            BinOp::Or => {
                return Ok(Value::Bool(
                    self.eval_bool_in(l, vars, locals)? || self.eval_bool_in(r, vars, locals)?,
                ))
            }
            BinOp::Implies => {
                return Ok(Value::Bool(
                    !self.eval_bool_in(l, vars, locals)? || self.eval_bool_in(r, vars, locals)?,
                ))
            }
            BinOp::Iff => {
                return Ok(Value::Bool(
                    self.eval_bool_in(l, vars, locals)? == self.eval_bool_in(r, vars, locals)?,
                ))
            }
            _ => {}
        }
        let (a, b) = (self.eval(l, vars, locals)?, self.eval(r, vars, locals)?);
        if op.is_comparison() {
            let (a, b) = match (a, b) {
                (Value::Int(a), Value::Int(b)) => (a, b),
                (Value::Bool(a), Value::Bool(b)) => (a as i64, b as i64),
                _ => return Err(MiniCpError::Type(format!("mixed boolean/integer comparison: {whole}"))),
            };
            return Ok(Value::Bool(match op {
                BinOp::Eq => a == b,
                BinOp::Ne => a != b,
                BinOp::Lt => a < b,
                BinOp::Le => a <= b,
                BinOp::Gt => a > b,
                BinOp::Ge => a >= b,
                _ => unreachable!(),
            }));
        }
        let (Value::Int(a), Value::Int(b)) = (a, b) else {
            return Err(MiniCpError::Type(format!("arithmetic on a boolean: {whole}")));
        };
        let v = match op {
            BinOp::Add => a.checked_add(b),
            BinOp::Sub => a.checked_sub(b),
            BinOp::Mul => a.checked_mul(b),
            // MiniZinc `div`/`mod` truncate toward zero, like Rust's `/` and `%`.
            BinOp::Div | BinOp::Mod if b == 0 => {
                return Err(MiniCpError::DivisionByZero(whole.to_string()))
            }
            BinOp::Div => a.checked_div(b),
            BinOp::Mod => a.checked_rem(b),
            _ => unreachable!(),
        };
        v.map(Value::Int).ok_or_else(|| overflow(whole))
    }

    fn call(
        &self,
        b: Builtin,
        args: &[CallArg],
        vars: &dyn VarLookup,
        locals: &mut Locals,
    ) -> Result<Value, MiniCpError> {
        match b {
            Builtin::Abs => {
                let CallArg::Scalar(e) = &args[0] else { unreachable!() };
                let v = self.eval_int_in(e, vars, locals)?;
                Ok(Value::Int(v.checked_abs().ok_or_else(|| overflow(e))?))
            }
            Builtin::Bool2Int => {
                let CallArg::Scalar(e) = &args[0] else { unreachable!() };
                Ok(Value::Int(self.eval_bool_in(e, vars, locals)? as i64))
            }
            Builtin::Max | Builtin::Min => {
                let vals = match args {
                    [CallArg::Array(arr)] => self.array_values(arr, vars, locals)?,
                    _ => {
                        let mut v = Vec::new();
                        for a in args {
                            let CallArg::Scalar(e) = a else { unreachable!() };
                            v.push(self.eval_int_in(e, vars, locals)?);
                        }
                        v
                    }
                };
                let pick = if b == Builtin::Max { vals.iter().max() } else { vals.iter().min() };
                pick.copied()
                    .map(Value::Int)
                    .ok_or_else(|| MiniCpError::Type(format!("`{}` of an empty array", b.name())))
            }
            Builtin::AllDifferent => {
                let CallArg::Array(arr) = &args[0] else { unreachable!() };
                let mut vals = self.array_values(arr, vars, locals)?;
                vals.sort_unstable();
                Ok(Value::Bool(vals.windows(2).all(|w| w[0] != w[1])))
            }
            Builtin::LexLess | Builtin::LexLessEq => {
                let (CallArg::Array(x), CallArg::Array(y)) = (&args[0], &args[1]) else {
                    unreachable!()
                };
                let (x, y) = (self.array_values(x, vars, locals)?, self.array_values(y, vars, locals)?);
                if x.len() != y.len() {
                    return Err(MiniCpError::Type(format!("`{}` on arrays of different length", b.name())));
                }
                let ord = x.cmp(&y);
                Ok(Value::Bool(match b {
                    Builtin::LexLess => ord.is_lt(),
                    _ => ord.is_le(),
                }))
            }
        }
    }

    pub(crate) fn array_values(
        &self,
        arr: &ArrayExpr,
        vars: &dyn VarLookup,
        locals: &mut Locals,
    ) -> Result<Vec<i64>, MiniCpError> {
        let as_int = |v: Value| match v {
            Value::Int(i) => i,
            Value::Bool(b) => b as i64,
        };
        match arr {
            ArrayExpr::Literal(items) => items
                .iter()
                .map(|e| self.eval(e, vars, locals).map(as_int))
                .collect(),
            ArrayExpr::Comprehension(body, gens) => {
                let mut out = Vec::new();
                self.for_each_binding(gens, 0, vars, locals, &mut |ev, locals| {
                    out.push(as_int(ev.eval(body, vars, locals)?));
                    Ok(true)
                })?;
                Ok(out)
            }
            ArrayExpr::Whole(n) => {
                if let Some(ParamValue::Array { data, .. }) = self.model.params.get(n) {
                    return Ok(data.clone());
                }
                let vi = self.model.var_index(n).ok_or_else(|| MiniCpError::Unbound(n.clone()))?;
                let decl = &self.model.vars[vi];
                (0..decl.len())
                    .map(|f| {
                        vars.get(vi, decl, f)
                            .ok_or_else(|| MiniCpError::Unassigned(format!("{n}[{f}]")))
                    })
                    .collect()
            }
        }
    }

    /// Integer bounds of a generator set.
    pub fn set_bounds(
        &self,
        set: &SetExpr,
        vars: &dyn VarLookup,
        locals: &mut Locals,
    ) -> Result<(i64, i64), MiniCpError> {
        match set {
            SetExpr::Named(n) => match self.model.params.get(n) {
                Some(ParamValue::Set(l, h)) => Ok((*l, *h)),
                Some(_) => Err(MiniCpError::Type(format!("`{n}` is not a set"))),
                None => Err(MiniCpError::Unbound(n.clone())),
            },
            SetExpr::Range(lo, hi) => Ok((
                self.eval_int_in(lo, vars, locals)?,
                self.eval_int_in(hi, vars, locals)?,
            )),
        }
    }

    /// Call `f` once per binding of the generator list that passes every
    /// `where` filter. `f` returns `Ok(false)` to stop early.
    pub(crate) fn for_each_binding(
        &self,
        gens: &[Generator],
        gi: usize,
        vars: &dyn VarLookup,
        locals: &mut Locals,
        f: &mut dyn FnMut(&Self, &mut Locals) -> Result<bool, MiniCpError>,
    ) -> Result<bool, MiniCpError> {
        if gi == gens.len() {
            return f(self, locals);
        }
        let g = &gens[gi];
        let (lo, hi) = self.set_bounds(&g.set, vars, locals)?;
        let base = locals.len();
        let k = g.vars.len();
        if lo > hi {
            return Ok(true);
        }
        let mut current = vec![lo; k];
        loop {
            locals.truncate(base);
            locals.extend(g.vars.iter().cloned().zip(current.iter().copied()));
            let pass = match &g.filter {
                Some(w) => self.eval_bool_in(w, vars, locals)?,
                None => true,
            };
            if pass && !self.for_each_binding(gens, gi + 1, vars, locals, f)? {
                locals.truncate(base);
                return Ok(false);
            }
            // odometer over the k variables, last one fastest
            let mut d = k;
            loop {
                if d == 0 {
                    locals.truncate(base);
                    return Ok(true);
                }
                d -= 1;
                if current[d] < hi {
                    current[d] += 1;
                    for c in current.iter_mut().skip(d + 1) {
                        *c = lo;
                    }
                    break;
                }
            }
        }
    }
}

fn oob(n: &str, at: &[i64]) -> MiniCpError {
    MiniCpError::IndexOutOfBounds(format!("{n}{at:?}"))
}

fn overflow(e: &Expr) -> MiniCpError {
    MiniCpError::Type(format!("integer overflow in {e}"))
}

#[cfg(test)]
mod tests {
    use super::super::model::ModelFile;
    use super::*;
    use std::collections::BTreeMap;

    fn perm_model(n: i64) -> MiniModel {
        let text = format!(
            "[params]\nn = {n}\n[[var]]\nname = \"x\"\nshape = [\"1..n\"]\ndomain = \"1..n\"\n"
        );
        ModelFile::from_toml_str(&text).unwrap().instantiate(&BTreeMap::new()).unwrap()
    }

    fn check(m: &MiniModel, vals: &Vec<Vec<i64>>, text: &str) -> Result<bool, MiniCpError> {
        let e = m.parse_constraint(text)?;
        Evaluator::new(m).eval_bool(&e, vals)
    }

    #[test]
    fn identity_permutation() {
        let m = perm_model(5);
        let x = vec![vec![1, 2, 3, 4, 5]];
        assert!(check(&m, &x, "forall(p in 1..4)(x[p+1] > x[p])").unwrap());
        assert!(!check(&m, &x, "exists(p in 1..4)(x[p+1] < x[p])").unwrap());
        assert!(check(&m, &x, "sum(p in 1..n-1)(bool2int(x[p+1] > x[p])) = 4").unwrap());
        assert!(check(&m, &x, "alldifferent(x)").unwrap());
        assert!(check(&m, &x, "lex_lesseq([x[1], x[2]], [x[1], x[3]])").unwrap());
        assert!(!check(&m, &x, "lex_less([x[1]], [x[1]])").unwrap());
    }

    #[test]
    fn errors_are_reported_not_false() {
        let m = perm_model(3);
        let x = vec![vec![1, 2, 3]];
        assert!(matches!(check(&m, &x, "x[4] = 1"), Err(MiniCpError::IndexOutOfBounds(_))));
        assert!(matches!(check(&m, &x, "x[1] div (x[1] - 1) = 0"), Err(MiniCpError::DivisionByZero(_))));
        assert!(matches!(check(&m, &x, "x[1] mod 0 = 0"), Err(MiniCpError::DivisionByZero(_))));
    }

    #[test]
    fn truncating_division() {
        let m = perm_model(3);
        let x = vec![vec![1, 2, 3]];
        assert!(check(&m, &x, "-7 div 2 = -3").unwrap());
        assert!(check(&m, &x, "-7 mod 13 = -7").unwrap());
        assert!(check(&m, &x, "(x[1] - 1) mod 13 = 0").unwrap());
    }

    #[test]
    fn multi_var_generator_with_filter() {
        let m = perm_model(4);
        let x = vec![vec![1, 2, 3, 4]];
        // pairs i < j over 1..4: 6 of them
        assert!(check(&m, &x, "sum(i, j in 1..n where i < j)(1) = 6").unwrap());
        assert!(check(&m, &x, "forall(i, j in 1..n where i < j)(x[i] < x[j])").unwrap());
    }
}
