//! Abstract syntax for the constraint mini-language.
//!
//! The tree carries no source positions and no parenthesisation, so two
//! texts that differ only in whitespace or redundant brackets produce equal
//! trees. The printer re-inserts the minimum set of brackets required by
//! operator precedence.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Implies,
    Iff,
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Implies | BinOp::Iff => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 6,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Implies => "->",
            BinOp::Iff => "<->",
            BinOp::Or => "\\/",
            BinOp::And => "/\\",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "div",
            BinOp::Mod => "mod",
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    /// The comparison obtained by swapping the operands (`a < b` is `b > a`).
    pub fn mirrored(self) -> BinOp {
        match self {
            BinOp::Lt => BinOp::Gt,
            BinOp::Le => BinOp::Ge,
            BinOp::Gt => BinOp::Lt,
            BinOp::Ge => BinOp::Le,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

/// Quantifier-style aggregates written `name(generators)(body)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Forall,
    Exists,
    Sum,
}

impl Aggregate {
    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Forall => "forall",
            Aggregate::Exists => "exists",
            Aggregate::Sum => "sum",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "forall" => Some(Aggregate::Forall),
            "exists" => Some(Aggregate::Exists),
            "sum" => Some(Aggregate::Sum),
            _ => None,
        }
    }
}

/// Builtin functions with ordinary call syntax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Abs,
    Max,
    Min,
    Bool2Int,
    AllDifferent,
    LexLessEq,
    LexLess,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Abs => "abs",
            Builtin::Max => "max",
            Builtin::Min => "min",
            Builtin::Bool2Int => "bool2int",
            Builtin::AllDifferent => "alldifferent",
            Builtin::LexLessEq => "lex_lesseq",
            Builtin::LexLess => "lex_less",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "abs" => Some(Builtin::Abs),
            "max" => Some(Builtin::Max),
            "min" => Some(Builtin::Min),
            "bool2int" => Some(Builtin::Bool2Int),
            "alldifferent" | "all_different" => Some(Builtin::AllDifferent),
            "lex_lesseq" => Some(Builtin::LexLessEq),
            "lex_less" => Some(Builtin::LexLess),
            _ => None,
        }
    }
}

/// The set a generator ranges over.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SetExpr {
    Range(Box<Expr>, Box<Expr>),
    Named(String),
}

/// `i, j in S where cond`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Generator {
    pub vars: Vec<String>,
    pub set: SetExpr,
    pub filter: Option<Box<Expr>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ArrayExpr {
    Literal(Vec<Expr>),
    Comprehension(Box<Expr>, Vec<Generator>),
    /// A whole declared one-dimensional array, e.g. `alldifferent(x)`.
    Whole(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Ident(String),
    Index(String, Vec<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<CallArg>),
    Aggregate(Aggregate, Vec<Generator>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CallArg {
    Scalar(Expr),
    Array(ArrayExpr),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn index<S: Into<String>>(name: S, idx: Vec<Expr>) -> Expr {
        Expr::Index(name.into(), idx)
    }

    pub fn ident<S: Into<String>>(name: S) -> Expr {
        Expr::Ident(name.into())
    }

    /// Visit every integer literal in printing order.
    pub fn for_each_int_mut(&mut self, f: &mut dyn FnMut(&mut i64)) {
        match self {
            Expr::Int(v) => f(v),
            Expr::Bool(_) | Expr::Ident(_) => {}
            Expr::Index(_, idx) => idx.iter_mut().for_each(|e| e.for_each_int_mut(f)),
            Expr::Unary(_, e) => e.for_each_int_mut(f),
            Expr::Binary(_, l, r) => {
                l.for_each_int_mut(f);
                r.for_each_int_mut(f);
            }
            Expr::Call(_, args) => {
                for a in args {
                    match a {
                        CallArg::Scalar(e) => e.for_each_int_mut(f),
                        CallArg::Array(arr) => arr.for_each_int_mut(f),
                    }
                }
            }
            Expr::Aggregate(_, gens, body) => {
                for g in gens.iter_mut() {
                    g.for_each_int_mut(f);
                }
                body.for_each_int_mut(f);
            }
        }
    }

    /// All integer literals in printing order.
    pub fn int_literals(&self) -> Vec<i64> {
        let mut out = Vec::new();
        self.clone().for_each_int_mut(&mut |v| out.push(*v));
        out
    }
}

impl Generator {
    pub fn for_each_int_mut(&mut self, f: &mut dyn FnMut(&mut i64)) {
        if let SetExpr::Range(lo, hi) = &mut self.set {
            lo.for_each_int_mut(f);
            hi.for_each_int_mut(f);
        }
        if let Some(w) = &mut self.filter {
            w.for_each_int_mut(f);
        }
    }
}

impl ArrayExpr {
    pub fn for_each_int_mut(&mut self, f: &mut dyn FnMut(&mut i64)) {
        match self {
            ArrayExpr::Literal(items) => items.iter_mut().for_each(|e| e.for_each_int_mut(f)),
            ArrayExpr::Comprehension(body, gens) => {
                body.for_each_int_mut(f);
                for g in gens.iter_mut() {
                    g.for_each_int_mut(f);
                }
            }
            ArrayExpr::Whole(_) => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::printer::print_expr(self))
    }
}
