//! A small constraint language (a MiniZinc expression subset) with a
//! parser, printer, evaluator and backtracking solver.

pub mod ast;
pub mod eval;
pub mod lexer;
pub mod model;
pub mod parser;
pub mod printer;
pub mod solver;

pub use ast::Expr;
pub use eval::{Evaluator, NoVars, Value, VarLookup};
pub use model::{MiniModel, ModelFile, ParamSource, ParamValue, VarDecl};
pub use parser::parse_expr_text;
pub use printer::{print_expr, print_signature};
pub use solver::{solve, Assignment, Clock, SearchResult, SearchStatus, SolveMode, SolveOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MiniCpError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("unbound identifier `{0}`")]
    Unbound(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),
    #[error("division by zero in {0}")]
    DivisionByZero(String),
    #[error("unassigned variable {0}")]
    Unassigned(String),
    #[error("time budget must be positive, got {0}")]
    Budget(f64),
}

/// Parse a constraint and check it against `model`'s identifiers.
pub fn parse_constraint(text: &str, model: &MiniModel) -> Result<Expr, MiniCpError> {
    model.parse_constraint(text)
}

/// Evaluate a constraint under a complete assignment.
pub fn eval_constraint(e: &Expr, model: &MiniModel, assignment: &Assignment) -> Result<bool, MiniCpError> {
    Evaluator::new(model).eval_bool(e, assignment)
}
