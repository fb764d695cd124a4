//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := unary (('*'|'/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^(3^2)`. Whitespace is insignificant.

use super::Expr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("column {column}: unknown character '{ch}'")]
    UnknownCharacter { column: usize, ch: char },
    #[error("column {column}: malformed number literal")]
    BadNumber { column: usize },
    #[error("column {column}: expected {expected}, found {found}")]
    Unexpected {
        column: usize,
        expected: &'static str,
        found: String,
    },
    #[error("unexpected end of input (expected {expected})")]
    UnexpectedEnd { expected: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(v) => format!("number {}", v),
            Tok::Ident(s) => format!("identifier '{}'", s),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
        }
    }
}

/// Token plus its 1-based column in the source text.
struct Spanned {
    tok: Tok,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
            }
            '+' => {
                toks.push(Spanned { tok: Tok::Plus, column });
                i += 1;
            }
            '-' => {
                toks.push(Spanned { tok: Tok::Minus, column });
                i += 1;
            }
            '*' => {
                toks.push(Spanned { tok: Tok::Star, column });
                i += 1;
            }
            '/' => {
                toks.push(Spanned { tok: Tok::Slash, column });
                i += 1;
            }
            '^' => {
                toks.push(Spanned { tok: Tok::Caret, column });
                i += 1;
            }
            '(' => {
                toks.push(Spanned { tok: Tok::LParen, column });
                i += 1;
            }
            ')' => {
                toks.push(Spanned { tok: Tok::RParen, column });
                i += 1;
            }
            ',' => {
                toks.push(Spanned { tok: Tok::Comma, column });
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    if i >= chars.len() || !chars[i].is_ascii_digit() {
                        return Err(ParseError::BadNumber { column });
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                    // otherwise the 'e' belongs to a following identifier
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| ParseError::BadNumber { column })?;
                toks.push(Spanned { tok: Tok::Number(v), column });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                toks.push(Spanned { tok: Tok::Ident(s), column });
            }
            _ => return Err(ParseError::UnknownCharacter { column, ch: c }),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(0, |s| s.column)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, expected: &'static str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(ParseError::Unexpected {
                column: self.column(),
                expected,
                found: t.describe(),
            }),
            None => Err(ParseError::UnexpectedEnd { expected }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Expr::Add(Arc::new(acc), Arc::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = Expr::Sub(Arc::new(acc), Arc::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    acc = Expr::Mul(Arc::new(acc), Arc::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    acc = Expr::Div(Arc::new(acc), Arc::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Arc::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Arc::new(base), Arc::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let column = self.column();
        match self.bump() {
            Some(Tok::Number(v)) => Ok(Expr::Number(v)),
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Symbol(name))
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(t) => Err(ParseError::Unexpected {
                column,
                expected: "a number, identifier or '('",
                found: t.describe(),
            }),
            None => Err(ParseError::UnexpectedEnd {
                expected: "a number, identifier or '('",
            }),
        }
    }
}

/// Parse an expression string into its unique AST.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(ParseError::Unexpected {
            column: p.column(),
            expected: "end of input",
            found: t.describe(),
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, Bindings};

    fn eval_at(text: &str, binds: &[(&str, f64)]) -> f64 {
        let e = parse(text).unwrap();
        let b = Bindings::from_pairs(binds);
        evaluate(&e, &b).unwrap()
    }

    #[test]
    fn precedence_and_structure() {
        let e = parse("2*x + sin(y)").unwrap();
        match &e {
            Expr::Add(l, r) => {
                assert!(matches!(**l, Expr::Mul(..)));
                assert!(matches!(**r, Expr::Call(ref n, _) if n == "sin"));
            }
            other => panic!("unexpected shape: {:?}", other),
        }
        assert!((eval_at("2*x + sin(y)", &[("x", 1.0), ("y", 0.0)]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = parse("-x^2").unwrap();
        assert!(matches!(e, Expr::Neg(ref inner) if matches!(**inner, Expr::Pow(..))));
        assert!((eval_at("-x^2", &[("x", 3.0)]) - (-9.0)).abs() < 1e-15);
    }

    #[test]
    fn power_is_right_associative() {
        assert!((eval_at("2^3^2", &[]) - 512.0).abs() < 1e-12);
    }

    #[test]
    fn number_forms() {
        assert_eq!(eval_at("2.5e-3", &[]), 2.5e-3);
        assert_eq!(eval_at("1", &[]), 1.0);
        assert_eq!(eval_at("0.3", &[]), 0.3);
    }

    #[test]
    fn exponent_suffix_not_confused_with_symbol() {
        // a bare 'e' after digits is not an exponent; "2e" lexes as 2 then e
        assert_eq!(eval_at("2e1", &[]), 20.0);
        assert_eq!(eval_at("2*e", &[("e", 3.0)]), 6.0);
        assert!(parse("2e").is_err());
    }

    #[test]
    fn unknown_character_reports_column() {
        match parse("x + $y") {
            Err(ParseError::UnknownCharacter { column, ch }) => {
                assert_eq!(column, 5);
                assert_eq!(ch, '$');
            }
            other => panic!("expected unknown character error, got {:?}", other),
        }
    }

    #[test]
    fn syntax_error_reports_column() {
        match parse("x + * y") {
            Err(ParseError::Unexpected { column, .. }) => assert_eq!(column, 5),
            other => panic!("expected syntax error, got {:?}", other),
        }
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!(parse("x y").is_err());
        assert!(parse("").is_err());
        assert!(parse("f()").is_err());
    }
}
