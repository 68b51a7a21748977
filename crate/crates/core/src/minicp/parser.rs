//! Recursive-descent parser for the constraint mini-language (a subset of
//! MiniZinc expressions).

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::MiniCpError;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

/// Parse one constraint expression. A leading `constraint` keyword and a
/// trailing `;` are accepted and dropped.
pub fn parse_expr_text(text: &str) -> Result<Expr, MiniCpError> {
    let mut p = Parser::new(text)?;
    if matches!(p.peek(), Some(Tok::Ident(s)) if s == "constraint") {
        p.pos += 1;
    }
    let e = p.expr(0)?;
    if p.peek() == Some(&Tok::Semi) {
        p.pos += 1;
    }
    p.expect_end()?;
    Ok(e)
}

/// Parse `lo..hi`.
pub fn parse_range_text(text: &str) -> Result<(Expr, Expr), MiniCpError> {
    let mut p = Parser::new(text)?;
    let lo = p.expr(5)?;
    p.expect(Tok::DotDot, "`..`")?;
    let hi = p.expr(5)?;
    p.expect_end()?;
    Ok((lo, hi))
}

impl Parser {
    fn new(text: &str) -> Result<Self, MiniCpError> {
        let toks = tokenize(text)?;
        let lines: Vec<&str> = text.split('\n').collect();
        let end = (lines.len(), lines.last().map(|l| l.chars().count()).unwrap_or(0) + 1);
        Ok(Parser { toks, pos: 0, end })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, off: usize) -> Option<&Tok> {
        self.toks.get(self.pos + off).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|t| (t.line, t.col)).unwrap_or(self.end)
    }

    fn error<T>(&self, message: String) -> Result<T, MiniCpError> {
        let (line, col) = self.here();
        Err(MiniCpError::Syntax { line, col, message })
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of input".to_string(),
            Some(Tok::Int(v)) => format!("`{v}`"),
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(t) => format!("`{t:?}`"),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), MiniCpError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}, found {}", self.describe()))
        }
    }

    fn expect_end(&self) -> Result<(), MiniCpError> {
        if self.pos < self.toks.len() {
            return self.error(format!("unexpected {} after expression", self.describe()));
        }
        Ok(())
    }

    fn ident(&mut self, what: &str) -> Result<String, MiniCpError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_reserved(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.error(format!("expected {what}, found {}", self.describe())),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek()? {
            Tok::Implies => BinOp::Implies,
            Tok::Iff => BinOp::Iff,
            Tok::Or => BinOp::Or,
            Tok::And => BinOp::And,
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Ident(s) if s == "div" => BinOp::Div,
            Tok::Ident(s) if s == "mod" => BinOp::Mod,
            _ => return None,
        })
    }

    /// Precedence climbing; every binary operator is left-associative.
    fn expr(&mut self, min_prec: u8) -> Result<Expr, MiniCpError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, MiniCpError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Int(v) => Expr::Int(-v),
                other => Expr::Unary(UnOp::Neg, Box::new(other)),
            });
        }
        if self.is_keyword("not") {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, MiniCpError> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Int(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr(0)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                match name.as_str() {
                    "true" => {
                        self.pos += 1;
                        return Ok(Expr::Bool(true));
                    }
                    "false" => {
                        self.pos += 1;
                        return Ok(Expr::Bool(false));
                    }
                    _ => {}
                }
                if is_reserved(&name) {
                    return self.error(format!("unexpected keyword `{name}`"));
                }
                self.pos += 1;
                match self.peek() {
                    Some(Tok::LBracket) => {
                        self.pos += 1;
                        let mut idx = vec![self.expr(0)?];
                        while self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                            idx.push(self.expr(0)?);
                        }
                        self.expect(Tok::RBracket, "`]`")?;
                        Ok(Expr::Index(name, idx))
                    }
                    Some(Tok::LParen) => self.call(name),
                    _ => Ok(Expr::Ident(name)),
                }
            }
            Some(Tok::LBracket) => {
                self.error("array expressions are only allowed as function arguments".into())
            }
            _ => self.error(format!("expected expression, found {}", self.describe())),
        }
    }

    fn call(&mut self, name: String) -> Result<Expr, MiniCpError> {
        if let Some(agg) = Aggregate::from_name(&name) {
            self.expect(Tok::LParen, "`(`")?;
            let gens = self.generators()?;
            self.expect(Tok::RParen, "`)`")?;
            self.expect(Tok::LParen, "`(` opening the aggregate body")?;
            let body = self.expr(0)?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Expr::Aggregate(agg, gens, Box::new(body)));
        }
        let Some(builtin) = Builtin::from_name(&name) else {
            self.pos -= 1;
            return self.error(format!("unknown function `{name}`"));
        };
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        loop {
            args.push(self.call_arg(builtin)?);
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        check_arity(builtin, &args).or_else(|m| self.error(m))?;
        Ok(Expr::Call(builtin, args))
    }

    fn call_arg(&mut self, builtin: Builtin) -> Result<CallArg, MiniCpError> {
        if self.peek() == Some(&Tok::LBracket) {
            return Ok(CallArg::Array(self.array()?));
        }
        let wants_array = matches!(
            builtin,
            Builtin::AllDifferent | Builtin::LexLess | Builtin::LexLessEq
        );
        if wants_array {
            let name = self.ident("array name")?;
            return Ok(CallArg::Array(ArrayExpr::Whole(name)));
        }
        Ok(CallArg::Scalar(self.expr(0)?))
    }

    fn array(&mut self) -> Result<ArrayExpr, MiniCpError> {
        self.expect(Tok::LBracket, "`[`")?;
        if self.peek() == Some(&Tok::RBracket) {
            self.pos += 1;
            return Ok(ArrayExpr::Literal(Vec::new()));
        }
        let first = self.expr(0)?;
        if self.peek() == Some(&Tok::Bar) {
            self.pos += 1;
            let gens = self.generators()?;
            self.expect(Tok::RBracket, "`]`")?;
            return Ok(ArrayExpr::Comprehension(Box::new(first), gens));
        }
        let mut items = vec![first];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            items.push(self.expr(0)?);
        }
        self.expect(Tok::RBracket, "`]`")?;
        Ok(ArrayExpr::Literal(items))
    }

    fn generators(&mut self) -> Result<Vec<Generator>, MiniCpError> {
        let mut gens = vec![self.generator()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            gens.push(self.generator()?);
        }
        Ok(gens)
    }

    fn generator(&mut self) -> Result<Generator, MiniCpError> {
        let mut vars = vec![self.ident("generator variable")?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            vars.push(self.ident("generator variable")?);
        }
        if !self.is_keyword("in") {
            return self.error(format!("expected `in`, found {}", self.describe()));
        }
        self.pos += 1;
        let named = matches!(self.peek(), Some(Tok::Ident(s)) if !is_reserved(s))
            && matches!(
                self.peek_at(1),
                None | Some(Tok::Comma) | Some(Tok::RParen) | Some(Tok::RBracket)
            )
            || matches!(self.peek(), Some(Tok::Ident(s)) if !is_reserved(s))
                && matches!(self.peek_at(1), Some(Tok::Ident(w)) if w == "where");
        let set = if named {
            SetExpr::Named(self.ident("set name")?)
        } else {
            let lo = self.expr(5)?;
            self.expect(Tok::DotDot, "`..`")?;
            let hi = self.expr(5)?;
            SetExpr::Range(Box::new(lo), Box::new(hi))
        };
        let filter = if self.is_keyword("where") {
            self.pos += 1;
            Some(Box::new(self.expr(0)?))
        } else {
            None
        };
        Ok(Generator { vars, set, filter })
    }
}

fn check_arity(b: Builtin, args: &[CallArg]) -> Result<(), String> {
    let scalar = |a: &CallArg| matches!(a, CallArg::Scalar(_));
    let ok = match b {
        Builtin::Abs | Builtin::Bool2Int => args.len() == 1 && scalar(&args[0]),
        Builtin::Max | Builtin::Min => {
            (args.len() == 2 && args.iter().all(scalar)) || (args.len() == 1 && !scalar(&args[0]))
        }
        Builtin::AllDifferent => args.len() == 1 && !scalar(&args[0]),
        Builtin::LexLess | Builtin::LexLessEq => args.len() == 2 && !args.iter().any(scalar),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("wrong arguments for `{}`", b.name()))
    }
}

pub(crate) fn is_reserved(s: &str) -> bool {
    matches!(
        s,
        "in" | "where" | "not" | "div" | "mod" | "true" | "false" | "constraint"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr_text("1 + 2 * 3 - 4").unwrap();
        let expect = Expr::binary(
            BinOp::Sub,
            Expr::binary(
                BinOp::Add,
                Expr::Int(1),
                Expr::binary(BinOp::Mul, Expr::Int(2), Expr::Int(3)),
            ),
            Expr::Int(4),
        );
        assert_eq!(e, expect);
    }

    #[test]
    fn negative_literals_fold() {
        assert_eq!(parse_expr_text("-3").unwrap(), Expr::Int(-3));
        assert_eq!(parse_expr_text("- (3)").unwrap(), Expr::Int(-3));
    }

    #[test]
    fn strips_constraint_keyword() {
        let e = parse_expr_text("constraint p = k;").unwrap();
        assert_eq!(e, Expr::binary(BinOp::Eq, Expr::ident("p"), Expr::ident("k")));
    }

    #[test]
    fn generator_with_filter_then_more() {
        let e = parse_expr_text(
            "forall(g in Golfer where g > 1, w in 1..n_rounds-1)(assign[g, w] != assign[g, w+1])",
        )
        .unwrap();
        let Expr::Aggregate(Aggregate::Forall, gens, _) = e else { panic!() };
        assert_eq!(gens.len(), 2);
        assert_eq!(gens[0].set, SetExpr::Named("Golfer".into()));
        assert!(gens[0].filter.is_some());
        assert!(matches!(gens[1].set, SetExpr::Range(..)));
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_expr_text("forall(i in 1..3)\n  (x[i] <= )").unwrap_err();
        match err {
            MiniCpError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 12)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_function_rejected() {
        assert!(parse_expr_text("foo(1)").is_err());
        assert!(parse_expr_text("x[1] = ").is_err());
        assert!(parse_expr_text("[1, 2]").is_err());
    }
}
