use super::MiniCpError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Int(i64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Bar,
    DotDot,
    Plus,
    Minus,
    Star,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Implies,
    Iff,
    And,
    Or,
    Semi,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, MiniCpError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };

        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '%' {
            // comment to end of line
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let v = text.parse::<i64>().map_err(|_| MiniCpError::Syntax {
                line: tl,
                col: tc,
                message: format!("integer literal `{text}` out of range"),
            })?;
            out.push(Token { tok: Tok::Int(v), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            let text: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Ident(text), line: tl, col: tc });
            continue;
        }

        let next = chars.get(i + 1).copied();
        let next2 = chars.get(i + 2).copied();
        let (tok, len) = match (c, next, next2) {
            ('<', Some('-'), Some('>')) => (Tok::Iff, 3),
            ('-', Some('>'), _) => (Tok::Implies, 2),
            ('<', Some('='), _) => (Tok::Le, 2),
            ('>', Some('='), _) => (Tok::Ge, 2),
            ('!', Some('='), _) => (Tok::Ne, 2),
            ('=', Some('='), _) => (Tok::Eq, 2),
            ('.', Some('.'), _) => (Tok::DotDot, 2),
            ('/', Some('\\'), _) => (Tok::And, 2),
            ('\\', Some('/'), _) => (Tok::Or, 2),
            ('<', _, _) => (Tok::Lt, 1),
            ('>', _, _) => (Tok::Gt, 1),
            ('=', _, _) => (Tok::Eq, 1),
            ('(', _, _) => (Tok::LParen, 1),
            (')', _, _) => (Tok::RParen, 1),
            ('[', _, _) => (Tok::LBracket, 1),
            (']', _, _) => (Tok::RBracket, 1),
            (',', _, _) => (Tok::Comma, 1),
            ('|', _, _) => (Tok::Bar, 1),
            ('+', _, _) => (Tok::Plus, 1),
            ('-', _, _) => (Tok::Minus, 1),
            ('*', _, _) => (Tok::Star, 1),
            (';', _, _) => (Tok::Semi, 1),
            _ => {
                return Err(MiniCpError::Syntax {
                    line: tl,
                    col: tc,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push(Token { tok, line: tl, col: tc });
        advance(len, &mut i, &mut col);
    }
    Ok(out)
}

/// Token texts joined by single spaces; used to normalise whitespace.
pub fn normalized_text(src: &str) -> Option<String> {
    let toks = tokenize(src).ok()?;
    let parts: Vec<String> = toks
        .iter()
        .map(|t| match &t.tok {
            Tok::Int(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            other => symbol(other).to_string(),
        })
        .collect();
    Some(parts.join(" "))
}

fn symbol(t: &Tok) -> &'static str {
    match t {
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBracket => "[",
        Tok::RBracket => "]",
        Tok::Comma => ",",
        Tok::Bar => "|",
        Tok::DotDot => "..",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Eq => "=",
        Tok::Ne => "!=",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::Implies => "->",
        Tok::Iff => "<->",
        Tok::And => "/\\",
        Tok::Or => "\\/",
        Tok::Semi => ";",
        Tok::Int(_) | Tok::Ident(_) => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("x[1]\n  <= 3").unwrap();
        assert_eq!((toks[0].line, toks[0].col), (1, 1));
        let le = toks.iter().find(|t| t.tok == Tok::Le).unwrap();
        assert_eq!((le.line, le.col), (2, 3));
    }

    #[test]
    fn normalization_ignores_spacing() {
        assert_eq!(normalized_text("x[1]=1"), normalized_text("x[1] = 1"));
        assert_ne!(normalized_text("x[1]=1"), normalized_text("x[2]=1"));
    }

    #[test]
    fn bad_character() {
        let err = tokenize("x # 1").unwrap_err();
        assert!(matches!(err, MiniCpError::Syntax { line: 1, col: 3, .. }));
    }
}
