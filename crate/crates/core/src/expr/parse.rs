//! Infix expression parser.
//!
//! Grammar: `+ - * /` with the usual precedence, `^` (right associative,
//! binds tighter than unary minus), function calls for unary operators and
//! decimal constants. `^` is desugared: a non-negative integer exponent becomes
//! repeated multiplication, a negative integer exponent its inverse, and any
//! other exponent `a ^ b` becomes `exp(b * log(a))`.

use std::str::FromStr;

use super::op::Op;
use super::tree::Expr;
use crate::error::{Error, Result};

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

pub fn parse(input: &str) -> Result<Expr> {
    let mut p = Parser { src: input.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::add(lhs, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::mul(lhs, self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::div(lhs, self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner.as_const() {
                Some(c) => Expr::constant(-c),
                None => Expr::unary(Op::Neg, inner),
            });
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(desugar_power(base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                if self.peek() == Some(b'(') {
                    let op = function(name).ok_or(Error::Parse {
                        offset: start,
                        message: format!("unknown function `{name}`"),
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(b')')?;
                    return Ok(Expr::unary(op, arg));
                }
                Ok(match name {
                    "nan" => Expr::constant(f64::NAN),
                    "inf" => Expr::constant(f64::INFINITY),
                    _ => Expr::var(name),
                })
            }
            Some(c) => Err(self.error(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Expr::constant)
            .map_err(|_| Error::Parse { offset: start, message: format!("invalid number `{text}`") })
    }
}

fn function(name: &str) -> Option<Op> {
    let op = name.parse::<Op>().ok()?;
    op.is_unary().then_some(op)
}

fn desugar_power(base: Expr, exponent: Expr) -> Expr {
    if let Some(p) = exponent.as_const() {
        if p.fract() == 0.0 && p.abs() <= 64.0 {
            let n = p.abs() as u32;
            let positive = match n {
                0 => Expr::constant(1.0),
                _ => (1..n).fold(base.clone(), |acc, _| Expr::mul(acc, base.clone())),
            };
            return if p < 0.0 { Expr::unary(Op::Inv, positive) } else { positive };
        }
    }
    Expr::unary(Op::Exp, Expr::mul(exponent, Expr::unary(Op::Log, base)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_parse_roundtrip() {
        let e = Expr::add(Expr::var("x1"), Expr::var("x2"));
        assert_eq!(e.to_string(), "x1 + x2");
        assert_eq!(parse("x1 + x2").unwrap(), e);
    }

    #[test]
    fn nguyen5_tree() {
        let e = parse("sin(x1^2)*cos(x1) - 1").unwrap();
        let x = Expr::var("x1");
        let expected = Expr::sub(
            Expr::mul(
                Expr::unary(Op::Sin, Expr::mul(x.clone(), x.clone())),
                Expr::unary(Op::Cos, x),
            ),
            Expr::constant(1.0),
        );
        assert_eq!(e, expected);
        assert_eq!(e.complexity(), 5);
    }

    #[test]
    fn malformed_reports_offset() {
        match parse("log(") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse("x1 +").is_err());
        assert!(parse("foo(x)").is_err());
        assert!(parse("(x").is_err());
        assert!(parse("x y").is_err());
    }

    #[test]
    fn precedence() {
        assert_eq!(parse("1 + 2 * x").unwrap().to_string(), "1 + (2 * x)");
        assert_eq!(parse("-x^2").unwrap().to_string(), "neg(x * x)");
        assert_eq!(parse("a - b - c").unwrap().to_string(), "(a - b) - c");
        assert_eq!(parse("x^-2").unwrap().to_string(), "inv(x * x)");
        assert_eq!(parse("x1^x2").unwrap().to_string(), "exp(x2 * log(x1))");
        assert_eq!(parse("2.5e-3").unwrap().as_const(), Some(2.5e-3));
        assert_eq!(parse("x - -1.5").unwrap().to_string(), "x - (-1.5)");
    }
}
