use super::ast::*;

/// Canonical single-line rendering; `parse(print(e)) == e`.
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

/// Like [`print_expr`] but every integer literal is replaced by `?`.
pub fn print_signature(e: &Expr) -> String {
    let mut holed = e.clone();
    // i64::MIN never survives the parser, so it marks holes unambiguously.
    holed.for_each_int_mut(&mut |v| *v = i64::MIN);
    print_expr(&holed).replace(&i64::MIN.to_string(), "?")
}

const UNARY_PREC: u8 = 7;

fn prec_of(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(..) => UNARY_PREC,
        Expr::Int(v) if *v < 0 => UNARY_PREC,
        _ => 8,
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let needs_parens = prec_of(e) < min_prec;
    if needs_parens {
        out.push('(');
    }
    match e {
        Expr::Int(v) => out.push_str(&v.to_string()),
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Ident(n) => out.push_str(n),
        Expr::Index(n, idx) => {
            out.push_str(n);
            out.push('[');
            write_list(out, idx);
            out.push(']');
        }
        Expr::Unary(op, inner) => {
            match op {
                UnOp::Neg => out.push('-'),
                UnOp::Not => out.push_str("not "),
            }
            // `- -3` must not print as `--3`; `-(-3)` keeps the tree shape
            let inner_min = if matches!(**inner, Expr::Int(_)) && *op == UnOp::Neg {
                UNARY_PREC + 1
            } else {
                UNARY_PREC
            };
            write_expr(out, inner, inner_min);
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            write_expr(out, l, p);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, r, p + 1);
        }
        Expr::Call(b, args) => {
            out.push_str(b.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                match a {
                    CallArg::Scalar(e) => write_expr(out, e, 0),
                    CallArg::Array(arr) => write_array(out, arr),
                }
            }
            out.push(')');
        }
        Expr::Aggregate(agg, gens, body) => {
            out.push_str(agg.name());
            out.push('(');
            write_generators(out, gens);
            out.push_str(")(");
            write_expr(out, body, 0);
            out.push(')');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

fn write_list(out: &mut String, items: &[Expr]) {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, e, 0);
    }
}

fn write_array(out: &mut String, arr: &ArrayExpr) {
    match arr {
        ArrayExpr::Literal(items) => {
            out.push('[');
            write_list(out, items);
            out.push(']');
        }
        ArrayExpr::Comprehension(body, gens) => {
            out.push('[');
            write_expr(out, body, 0);
            out.push_str(" | ");
            write_generators(out, gens);
            out.push(']');
        }
        ArrayExpr::Whole(name) => out.push_str(name),
    }
}

fn write_generators(out: &mut String, gens: &[Generator]) {
    for (i, g) in gens.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&g.vars.join(", "));
        out.push_str(" in ");
        match &g.set {
            SetExpr::Named(n) => out.push_str(n),
            SetExpr::Range(lo, hi) => {
                write_expr(out, lo, 5);
                out.push_str("..");
                write_expr(out, hi, 5);
            }
        }
        if let Some(w) = &g.filter {
            out.push_str(" where ");
            write_expr(out, w, 0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse_expr_text;
    use super::*;

    fn rt(s: &str) -> String {
        let e = parse_expr_text(s).unwrap();
        let p = print_expr(&e);
        assert_eq!(parse_expr_text(&p).unwrap(), e, "{p}");
        p
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(rt("(a - (b - c))"), "a - (b - c)");
        assert_eq!(rt("((a - b) - c)"), "a - b - c");
        assert_eq!(rt("(x[52]-1) mod 13 = 12"), "(x[52] - 1) mod 13 = 12");
        assert_eq!(rt("not (a = b)"), "not (a = b)");
        assert_eq!(rt("a - -3"), "a - -3");
        assert_eq!(rt("-(-3)"), "3");
        assert_eq!(rt("- - x"), "--x");
    }

    #[test]
    fn signature_holes() {
        let a = parse_expr_text("x[1] = 1").unwrap();
        let b = parse_expr_text("x[2] = 1").unwrap();
        assert_eq!(print_signature(&a), "x[?] = ?");
        assert_eq!(print_signature(&a), print_signature(&b));
    }
}
