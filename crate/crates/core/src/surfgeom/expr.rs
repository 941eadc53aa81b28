//! Surfaces given by expression strings for `x(s,t)`, `y(s,t)`, `z(s,t)`.
//!
//! Grammar (whitespace ignored, `^` binds tighter than unary minus and is
//! right associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 's' | 't' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | sinh | cosh | exp | ln | sqrt
//! ```
//!
//! Derivatives come from central differences with one Richardson pass. The
//! step grows with the derivative order to balance truncation against
//! round-off: `1e-4`, `1e-3` and `5e-3` times the domain scale for orders 1,
//! 2 and 3.

use std::str::FromStr;

use super::{PointJet, SurfaceMap};
use crate::error::{Error, Result};
use crate::jet::Jet2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    S,
    T,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            Expr::Num(x) => *x,
            Expr::S => s,
            Expr::T => t,
            Expr::Neg(a) => -a.eval(s, t),
            Expr::Add(a, b) => a.eval(s, t) + b.eval(s, t),
            Expr::Sub(a, b) => a.eval(s, t) - b.eval(s, t),
            Expr::Mul(a, b) => a.eval(s, t) * b.eval(s, t),
            Expr::Div(a, b) => a.eval(s, t) / b.eval(s, t),
            Expr::Pow(a, b) => {
                let (x, y) = (a.eval(s, t), b.eval(s, t));
                if y.fract() == 0.0 && y.abs() < 64.0 {
                    x.powi(y as i32)
                } else {
                    x.powf(y)
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(s, t)),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens: &tokens, pos: 0, len: src.len() };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some((col, tok)) => Err(Error::Expression { column: col, message: format!("unexpected {tok:?}") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let col = i + 1;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // Exponent part, only when followed by digits.
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression { column: col, message: format!("bad number `{text}`") })?;
            out.push((col, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((col, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((col, Tok::Op(c)));
            i += 1;
        } else {
            return Err(Error::Expression { column: col, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [(usize, Tok)],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<(usize, &Tok)> {
        self.tokens.get(self.pos).map(|(c, t)| (*c, t))
    }

    fn eat(&mut self, op: char) -> bool {
        if let Some((_, Tok::Op(c))) = self.peek() {
            if *c == op {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn end_col(&self) -> usize {
        self.len + 1
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some((col, tok)) = self.peek() else {
            return Err(Error::Expression { column: self.end_col(), message: "unexpected end of input".into() });
        };
        let tok = tok.clone();
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                if !self.eat(')') {
                    let column = self.peek().map_or(self.end_col(), |(c, _)| c);
                    return Err(Error::Expression { column, message: "expected `)`".into() });
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "s" => return Ok(Expr::S),
                    "t" => return Ok(Expr::T),
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => return Ok(Expr::Num(std::f64::consts::E)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "sinh" => Func::Sinh,
                    "cosh" => Func::Cosh,
                    "exp" => Func::Exp,
                    "ln" => Func::Ln,
                    "sqrt" => Func::Sqrt,
                    _ => return Err(Error::Expression { column: col, message: format!("unknown identifier `{name}`") }),
                };
                if !self.eat('(') {
                    return Err(Error::Expression { column: col, message: format!("`{name}` must be followed by `(`") });
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    let column = self.peek().map_or(self.end_col(), |(c, _)| c);
                    return Err(Error::Expression { column, message: "expected `)`".into() });
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Tok::Op(c) => Err(Error::Expression { column: col, message: format!("unexpected `{c}`") }),
        }
    }
}

/// A surface whose three coordinates are parsed expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprSurface {
    pub coords: [Expr; 3],
    /// Characteristic parameter length used to size the difference steps.
    pub scale: f64,
}

impl ExprSurface {
    pub fn parse(x: &str, y: &str, z: &str, scale: f64) -> Result<Self> {
        let coords = [x.parse()?, y.parse()?, z.parse()?];
        Ok(Self { coords, scale })
    }

    fn partial(&self, e: &Expr, s: f64, t: f64, ns: usize, nt: usize) -> f64 {
        let h = self.scale
            * match ns + nt {
                1 => 1e-4,
                2 => 1e-3,
                _ => 5e-3,
            };
        let d = |h: f64| {
            let ws = stencil(ns);
            let wt = stencil(nt);
            let mut acc = 0.0;
            for &(i, a) in ws {
                for &(j, b) in wt {
                    acc += a * b * e.eval(s + i * h, t + j * h);
                }
            }
            acc / h.powi((ns + nt) as i32)
        };
        (4.0 * d(h) - d(2.0 * h)) / 3.0
    }
}

/// Central difference weights for the `n`-th derivative (unit step).
fn stencil(n: usize) -> &'static [(f64, f64)] {
    match n {
        0 => &[(0.0, 1.0)],
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        _ => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
    }
}

impl SurfaceMap for ExprSurface {
    fn jet(&self, s: f64, t: f64) -> PointJet {
        std::array::from_fn(|k| {
            let e = &self.coords[k];
            let p = |ns, nt| self.partial(e, s, t, ns, nt);
            Jet2 {
                v: e.eval(s, t),
                d1: [p(1, 0), p(0, 1)],
                d2: [p(2, 0), p(1, 1), p(0, 2)],
                d3: [p(3, 0), p(2, 1), p(1, 2), p(0, 3)],
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfgeom::families::Paraboloid;

    fn ev(src: &str) -> f64 {
        src.parse::<Expr>().unwrap().eval(2.0, 3.0)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3"), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2"), 512.0);
        assert_eq!(ev("-2 ^ 2"), -4.0);
        assert_eq!(ev("2 ^ -1"), 0.5);
        assert_eq!(ev("s - t - 1"), -2.0);
        assert_eq!(ev("12 / s / t"), 2.0);
        assert_eq!(ev("(s + t) * 2"), 10.0);
        assert_eq!(ev("1.5e1 + 2E-1"), 15.2);
        assert!((ev("cos(pi) + ln(e) + sqrt(4) + exp(0) + sinh(0) + cosh(0) + sin(0)") - 4.0).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_columns() {
        let col = |src: &str| match src.parse::<Expr>() {
            Err(Error::Expression { column, .. }) => column,
            other => panic!("{src}: {other:?}"),
        };
        assert_eq!(col("s + u"), 5);
        assert_eq!(col("s + "), 5);
        assert_eq!(col("(s + t"), 7);
        assert_eq!(col("s $ t"), 3);
        assert_eq!(col("sin s"), 1);
        assert_eq!(col("s t"), 3);
    }

    #[test]
    fn differences_match_exact_jet() {
        let fd = ExprSurface::parse("s", "t", "(s^2 + t^2) / 2", 1.0).unwrap();
        let ex = Paraboloid { c: 1.0 };
        let wavy = ExprSurface::parse("s", "t", "sin(s) * cosh(t / 2)", 1.0).unwrap();
        for &(s, t) in &[(0.0, 0.0), (0.7, -0.4), (1.3, 2.1)] {
            let a = fd.jet(s, t)[2];
            let b = ex.jet(s, t)[2];
            let diffs = [a.v - b.v, a.d1[0] - b.d1[0], a.d1[1] - b.d1[1]];
            assert!(diffs.iter().all(|d| d.abs() < 1e-10), "{diffs:?}");
            for k in 0..3 {
                assert!((a.d2[k] - b.d2[k]).abs() < 1e-9);
            }
            for k in 0..4 {
                assert!((a.d3[k] - b.d3[k]).abs() < 1e-7);
            }
            let w = wavy.jet(s, t)[2];
            let (x, y) = (Jet2::var_s(s), Jet2::var_t(t));
            let exact = x.sin() * (y * 0.5).cosh();
            for k in 0..3 {
                assert!((w.d2[k] - exact.d2[k]).abs() < 1e-9);
            }
            for k in 0..4 {
                assert!((w.d3[k] - exact.d3[k]).abs() < 1e-7, "{k}: {} {}", w.d3[k], exact.d3[k]);
            }
        }
    }
}
