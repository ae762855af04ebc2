//! Text-to-AST parser for calculator and solver arguments.
//!
//! Grammar, loosest binding first: `mod` (left-assoc), `+ -`, `* /` and
//! implicit multiplication, unary `-`, `^` (right-assoc). Accepts the LaTeX
//! fragments `\frac{a}{b}`, `\sqrt{a}`, `\cdot`, `\times`, `\mod`/`\bmod`,
//! brace grouping (`2^{13}`), and ignores `$`, `\left`, `\right`.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::pow::Pow;

use crate::expr::Expr;

/// Parse failure with the byte offset it occurred at.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("parse error at position {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl ParseError {
    fn new(pos: usize, message: impl Into<String>) -> Self {
        ParseError {
            pos,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Token {
    Number { integer: String, fraction: Option<String> },
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    ModOp,
    LParen,
    RParen,
    LBrace,
    RBrace,
    FracTok,
    SqrtTok,
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' | '$' => i += 1,
            '+' => {
                toks.push((Token::Plus, i));
                i += 1;
            }
            '-' => {
                toks.push((Token::Minus, i));
                i += 1;
            }
            '*' => {
                toks.push((Token::Star, i));
                i += 1;
            }
            '/' => {
                toks.push((Token::Slash, i));
                i += 1;
            }
            '^' => {
                toks.push((Token::Caret, i));
                i += 1;
            }
            '%' => {
                toks.push((Token::ModOp, i));
                i += 1;
            }
            '(' => {
                toks.push((Token::LParen, i));
                i += 1;
            }
            ')' => {
                toks.push((Token::RParen, i));
                i += 1;
            }
            '{' => {
                toks.push((Token::LBrace, i));
                i += 1;
            }
            '}' => {
                toks.push((Token::RBrace, i));
                i += 1;
            }
            '\\' => {
                let start = i;
                i += 1;
                let word_start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphabetic() {
                    i += 1;
                }
                let word = &src[word_start..i];
                match word {
                    "frac" | "dfrac" | "tfrac" => toks.push((Token::FracTok, start)),
                    "sqrt" => toks.push((Token::SqrtTok, start)),
                    "cdot" | "times" => toks.push((Token::Star, start)),
                    "mod" | "bmod" => toks.push((Token::ModOp, start)),
                    "left" | "right" => {}
                    // \, \; \! spacing commands and a lone backslash-space
                    "" if i < bytes.len() && matches!(bytes[i] as char, ',' | ';' | '!' | ' ') => {
                        i += 1;
                    }
                    other => {
                        return Err(ParseError::new(
                            start,
                            format!("unknown LaTeX command '\\{other}'"),
                        ))
                    }
                }
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                let integer = src[start..i].to_string();
                let mut fraction = None;
                if i < bytes.len() && bytes[i] as char == '.' {
                    let dot = i;
                    i += 1;
                    let fstart = i;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                    if i == fstart {
                        return Err(ParseError::new(dot, "expected digits after decimal point"));
                    }
                    fraction = Some(src[fstart..i].to_string());
                }
                toks.push((Token::Number { integer, fraction }, start));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] as char == '_')
                {
                    i += 1;
                }
                let word = &src[start..i];
                if word == "mod" {
                    toks.push((Token::ModOp, start));
                } else {
                    toks.push((Token::Ident(word.to_string()), start));
                }
            }
            _ => {
                return Err(ParseError::new(i, format!("unexpected character '{c}'")));
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Token, usize)>,
    pos: usize,
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, p)| *p)
            .unwrap_or(self.src_len)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::new(self.here(), format!("expected {what}")))
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_additive()?;
        while self.peek() == Some(&Token::ModOp) {
            let at = self.here();
            self.pos += 1;
            let rhs = self.parse_additive()?;
            lhs = Expr::modulo(lhs, rhs)
                .map_err(|_| ParseError::new(at, "modulus is zero".to_string()))?;
        }
        Ok(lhs)
    }

    fn parse_additive(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.parse_multiplicative()?];
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    terms.push(self.parse_multiplicative()?);
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    terms.push(Expr::neg(self.parse_multiplicative()?));
                }
                _ => break,
            }
        }
        Ok(Expr::add(terms))
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Some(Token::Number { .. })
                | Some(Token::Ident(_))
                | Some(Token::LParen)
                | Some(Token::LBrace)
                | Some(Token::FracTok)
                | Some(Token::SqrtTok)
        )
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::mul(vec![lhs, rhs]);
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::div(lhs, rhs);
                }
                // adjacency is implicit multiplication: 2x, 2(x+1), 2\sqrt{3}
                _ if self.starts_atom() => {
                    let rhs = self.parse_unary()?;
                    lhs = Expr::mul(vec![lhs, rhs]);
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(Expr::neg(self.parse_unary()?))
            }
            Some(Token::Plus) => {
                self.pos += 1;
                self.parse_unary()
            }
            _ => self.parse_power(),
        }
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            // right-associative, and the exponent may carry its own sign
            let exponent = self.parse_unary()?;
            Ok(Expr::pow(base, exponent))
        } else {
            Ok(base)
        }
    }

    fn parse_braced(&mut self) -> Result<Expr, ParseError> {
        self.expect(Token::LBrace, "'{'")?;
        let inner = self.parse_expr()?;
        self.expect(Token::RBrace, "'}'")?;
        Ok(inner)
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.here();
        match self.bump() {
            Some(Token::Number { integer, fraction }) => {
                let int_part: BigInt = integer.parse().expect("digits parse as BigInt");
                match fraction {
                    None => Ok(Expr::integer(int_part)),
                    Some(frac) => {
                        let scale = BigInt::from(10u32).pow(frac.len() as u32);
                        let frac_part: BigInt = frac.parse().expect("digits parse as BigInt");
                        let numer = int_part * &scale + frac_part;
                        Ok(Expr::rational(BigRational::new(numer, scale)))
                    }
                }
            }
            Some(Token::Ident(name)) => {
                if self.peek() == Some(&Token::LParen) {
                    match name.as_str() {
                        "sqrt" | "abs" => {
                            self.pos += 1;
                            let inner = self.parse_expr()?;
                            self.expect(Token::RParen, "')'")?;
                            if name == "sqrt" {
                                Ok(Expr::sqrt(inner))
                            } else {
                                Ok(Expr::abs(inner))
                            }
                        }
                        other => Err(ParseError::new(at, format!("unknown function '{other}'"))),
                    }
                } else {
                    Ok(Expr::symbol(name))
                }
            }
            Some(Token::LParen) => {
                let inner = self.parse_expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            Some(Token::LBrace) => {
                let inner = self.parse_expr()?;
                self.expect(Token::RBrace, "'}'")?;
                Ok(inner)
            }
            Some(Token::FracTok) => {
                let numer = self.parse_braced()?;
                let denom = self.parse_braced()?;
                Ok(Expr::div(numer, denom))
            }
            Some(Token::SqrtTok) => {
                let inner = if self.peek() == Some(&Token::LParen) {
                    self.pos += 1;
                    let e = self.parse_expr()?;
                    self.expect(Token::RParen, "')'")?;
                    e
                } else {
                    self.parse_braced()?
                };
                Ok(Expr::sqrt(inner))
            }
            Some(_) => Err(ParseError::new(at, "expected a value")),
            None => Err(ParseError::new(at, "unexpected end of expression")),
        }
    }
}

/// Parses `src` into an [`Expr`], or fails with the offending position.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(ParseError::new(0, "empty expression"));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        src_len: src.len(),
    };
    let e = p.parse_expr()?;
    if p.pos != p.toks.len() {
        return Err(ParseError::new(p.here(), "unexpected trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_mul_over_add() {
        let e = parse_expr("2+3*4").unwrap();
        assert_eq!(
            e,
            Expr::Add(vec![
                Expr::int(2),
                Expr::Mul(vec![Expr::int(3), Expr::int(4)])
            ])
        );
    }

    #[test]
    fn mod_binds_loosest() {
        let e = parse_expr("302875106592258 mod 6").unwrap();
        assert_eq!(
            e,
            Expr::modulo(
                Expr::Integer("302875106592258".parse().unwrap()),
                Expr::int(6)
            )
            .unwrap()
        );
        // whole sum on the left of mod
        let e = parse_expr("13^13+5 mod 6").unwrap();
        match e {
            Expr::Mod(lhs, rhs) => {
                assert!(matches!(*lhs, Expr::Add(_)));
                assert_eq!(*rhs, Expr::int(6));
            }
            other => panic!("expected Mod, got {other:?}"),
        }
    }

    #[test]
    fn implicit_multiplication() {
        let e = parse_expr("2x+3x").unwrap();
        assert_eq!(
            e,
            Expr::Add(vec![
                Expr::Mul(vec![Expr::int(2), Expr::symbol("x")]),
                Expr::Mul(vec![Expr::int(3), Expr::symbol("x")]),
            ])
        );
    }

    #[test]
    fn unary_minus_below_power() {
        // -2^2 is -(2^2)
        let e = parse_expr("-2^2").unwrap();
        assert_eq!(e, Expr::neg(Expr::pow(Expr::int(2), Expr::int(2))));
    }

    #[test]
    fn latex_fragments_desugar() {
        assert_eq!(
            parse_expr("\\frac{1}{2}").unwrap(),
            Expr::Rational(BigRational::new(1.into(), 2.into()))
        );
        assert_eq!(parse_expr("\\sqrt{9}").unwrap(), Expr::sqrt(Expr::int(9)));
        assert_eq!(
            parse_expr("2 \\cdot 3").unwrap(),
            Expr::Mul(vec![Expr::int(2), Expr::int(3)])
        );
        assert_eq!(
            parse_expr("$302875106592258 \\mod 6$").unwrap(),
            parse_expr("302875106592258 mod 6").unwrap()
        );
        assert_eq!(
            parse_expr("13^{13}").unwrap(),
            Expr::pow(Expr::int(13), Expr::int(13))
        );
    }

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(
            parse_expr("0.5").unwrap(),
            Expr::Rational(BigRational::new(1.into(), 2.into()))
        );
        assert_eq!(parse_expr("2.0").unwrap(), Expr::int(2));
    }

    #[test]
    fn errors_carry_position() {
        let err = parse_expr("2+*3").unwrap_err();
        assert_eq!(err.pos, 2);
        let err = parse_expr("2)").unwrap_err();
        assert_eq!(err.pos, 1);
        assert!(parse_expr("").is_err());
    }

    #[test]
    fn zero_modulus_is_a_parse_failure() {
        assert!(parse_expr("5 mod 0").is_err());
    }
}
