//! A small expression language for objectives on C^n.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' '-'? int)?
//! primary := number | 'inf' | 'i' | var | ident '(' args ')' | '(' expr ')'
//! var     := 'z1' | 'z2'
//! ident   := 're' | 'im' | 'abs' | 'abs2' | 'log' | 'exp' | 'max' | 'min'
//! ```
//!
//! `z1`, `z2` and `i` are complex; `re`, `im`, `abs`, `abs2` map complex values to
//! reals; `log`, `exp`, `max`, `min` act on extended reals. The top-level value
//! must be real. `log(0) = -inf`, and `inf` is only accepted as the literal `-inf`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::point::Point;

/// Maximum accepted source length.
pub const MAX_SOURCE_BYTES: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Re,
    Im,
    Abs,
    Abs2,
    Log,
    Exp,
    Max,
    Min,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "re" => Func::Re,
            "im" => Func::Im,
            "abs" => Func::Abs,
            "abs2" => Func::Abs2,
            "log" => Func::Log,
            "exp" => Func::Exp,
            "max" => Func::Max,
            "min" => Func::Min,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Re => "re",
            Func::Im => "im",
            Func::Abs => "abs",
            Func::Abs2 => "abs2",
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Max => "max",
            Func::Min => "min",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// Real literal, possibly `-inf`.
    Num(f64),
    /// The imaginary unit.
    Imag,
    /// Complex coordinate `z_{j+1}`.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Vec<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Real,
    Complex,
}

/// A parsed, type-checked real-valued expression.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprFn {
    root: Expr,
    vars: usize,
}

#[derive(Clone, Copy, Debug)]
enum Value {
    R(f64),
    C(Complex64),
}

impl ExprFn {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Syntax {
                column: 1,
                message: "empty expression".into(),
            });
        }
        if text.len() > MAX_SOURCE_BYTES {
            return Err(Error::Syntax {
                column: MAX_SOURCE_BYTES + 1,
                message: "expression exceeds 64 KiB".into(),
            });
        }
        let mut parser = Parser::new(text);
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        if type_of(&root) != Ty::Real {
            return Err(Error::Syntax {
                column: 1,
                message: "expression is complex-valued; wrap it in re, im, abs or abs2".into(),
            });
        }
        let vars = max_var(&root);
        Ok(Self { root, vars })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            root: Expr::Num(c),
            vars: 0,
        }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Smallest dimension n for which every variable `z_j` is defined.
    pub fn required_dim(&self) -> usize {
        self.vars
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Expr::Num(c) => Some(c),
            _ => None,
        }
    }

    /// Extended-real value at `p`.
    pub fn eval(&self, p: &Point) -> Result<f64> {
        if self.vars > p.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.vars,
                found: p.dim(),
            });
        }
        match eval(&self.root, p)? {
            Value::R(x) => Ok(x),
            Value::C(_) => unreachable!("type-checked as real"),
        }
    }
}

impl fmt::Display for ExprFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) if *x == f64::NEG_INFINITY => f.write_str("(-inf)"),
            Expr::Num(x) if x.is_sign_negative() => write!(f, "(-{:?})", -x),
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Imag => f.write_str("i"),
            Expr::Var(j) => write!(f, "z{}", j + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Pow(e, k) => write!(f, "({e}^{k})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (j, a) in args.iter().enumerate() {
                    if j > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for ExprFn {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExprFn::parse(s)
    }
}

fn max_var(e: &Expr) -> usize {
    match e {
        Expr::Var(j) => j + 1,
        Expr::Num(_) | Expr::Imag => 0,
        Expr::Neg(a) | Expr::Pow(a, _) => max_var(a),
        Expr::Bin(_, a, b) => max_var(a).max(max_var(b)),
        Expr::Call(_, args) => args.iter().map(max_var).max().unwrap_or(0),
    }
}

fn type_of(e: &Expr) -> Ty {
    match e {
        Expr::Num(_) => Ty::Real,
        Expr::Imag | Expr::Var(_) => Ty::Complex,
        Expr::Neg(a) | Expr::Pow(a, _) => type_of(a),
        Expr::Bin(_, a, b) => {
            if type_of(a) == Ty::Complex || type_of(b) == Ty::Complex {
                Ty::Complex
            } else {
                Ty::Real
            }
        }
        Expr::Call(..) => Ty::Real,
    }
}

fn indeterminate(what: &str) -> Error {
    Error::Indeterminate(what.to_string())
}

fn real(x: f64, what: &str) -> Result<Value> {
    if x.is_nan() {
        Err(indeterminate(what))
    } else {
        Ok(Value::R(x))
    }
}

fn complex(z: Complex64, what: &str) -> Result<Value> {
    if z.re.is_nan() || z.im.is_nan() {
        Err(indeterminate(what))
    } else {
        Ok(Value::C(z))
    }
}

fn promote(v: Value) -> Result<Complex64> {
    match v {
        Value::C(z) => Ok(z),
        Value::R(x) if x.is_finite() => Ok(Complex64::new(x, 0.0)),
        Value::R(_) => Err(indeterminate("infinite value in complex arithmetic")),
    }
}

fn expect_real(v: Value) -> f64 {
    match v {
        Value::R(x) => x,
        Value::C(_) => unreachable!("type-checked as real"),
    }
}

fn eval(e: &Expr, p: &Point) -> Result<Value> {
    match e {
        Expr::Num(x) => Ok(Value::R(*x)),
        Expr::Imag => Ok(Value::C(Complex64::new(0.0, 1.0))),
        Expr::Var(j) => Ok(Value::C(p.coord(*j))),
        Expr::Neg(a) => Ok(match eval(a, p)? {
            Value::R(x) => Value::R(-x),
            Value::C(z) => Value::C(-z),
        }),
        Expr::Bin(op, a, b) => {
            let (va, vb) = (eval(a, p)?, eval(b, p)?);
            match (va, vb) {
                (Value::R(x), Value::R(y)) => match op {
                    BinOp::Add => real(x + y, "inf - inf"),
                    BinOp::Sub => real(x - y, "inf - inf"),
                    BinOp::Mul => real(x * y, "0 * inf"),
                    BinOp::Div => {
                        if y == 0.0 {
                            Err(Error::DivisionByZero)
                        } else {
                            real(x / y, "inf / inf")
                        }
                    }
                },
                _ => {
                    let (x, y) = (promote(va)?, promote(vb)?);
                    match op {
                        BinOp::Add => complex(x + y, "complex sum"),
                        BinOp::Sub => complex(x - y, "complex difference"),
                        BinOp::Mul => complex(x * y, "complex product"),
                        BinOp::Div => {
                            if y.norm_sqr() == 0.0 {
                                Err(Error::DivisionByZero)
                            } else {
                                complex(x / y, "complex quotient")
                            }
                        }
                    }
                }
            }
        }
        Expr::Pow(a, k) => match eval(a, p)? {
            Value::R(x) => {
                if x == 0.0 && *k < 0 {
                    Err(Error::DivisionByZero)
                } else {
                    real(x.powi(*k), "power")
                }
            }
            Value::C(z) => {
                if z.norm_sqr() == 0.0 && *k < 0 {
                    Err(Error::DivisionByZero)
                } else {
                    complex(z.powi(*k), "complex power")
                }
            }
        },
        Expr::Call(func, args) => {
            let first = eval(&args[0], p)?;
            match func {
                Func::Re => Ok(Value::R(match first {
                    Value::R(x) => x,
                    Value::C(z) => z.re,
                })),
                Func::Im => Ok(Value::R(match first {
                    Value::R(_) => 0.0,
                    Value::C(z) => z.im,
                })),
                Func::Abs => Ok(Value::R(match first {
                    Value::R(x) => x.abs(),
                    Value::C(z) => z.norm(),
                })),
                Func::Abs2 => Ok(Value::R(match first {
                    Value::R(x) => x * x,
                    Value::C(z) => z.norm_sqr(),
                })),
                Func::Log => {
                    let x = expect_real(first);
                    if x < 0.0 {
                        Err(Error::OutOfDomain("log".into()))
                    } else if x == 0.0 {
                        Ok(Value::R(f64::NEG_INFINITY))
                    } else {
                        Ok(Value::R(x.ln()))
                    }
                }
                Func::Exp => Ok(Value::R(expect_real(first).exp())),
                Func::Max | Func::Min => {
                    let mut acc = expect_real(first);
                    for a in &args[1..] {
                        let x = expect_real(eval(a, p)?);
                        acc = if *func == Func::Max { acc.max(x) } else { acc.min(x) };
                    }
                    Ok(Value::R(acc))
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            src: text.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            column: self.pos + 1,
            message: message.to_string(),
        }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            self.skip_ws();
            let start = self.pos;
            if self.ident_here().as_deref() == Some("inf") {
                self.pos = start + 3;
                return Ok(Expr::Num(f64::NEG_INFINITY));
            }
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Num(x) if x.is_finite() => Expr::Num(-x),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let negative = self.eat(b'-');
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("expected an integer exponent"));
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let k: i32 = digits
                .parse()
                .map_err(|_| self.error("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), if negative { -k } else { k }));
        }
        Ok(base)
    }

    fn ident_here(&self) -> Option<String> {
        let mut end = self.pos;
        while end < self.src.len() && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_') {
            end += 1;
        }
        if end > self.pos && self.src[self.pos].is_ascii_alphabetic() {
            Some(String::from_utf8_lossy(&self.src[self.pos..end]).into_owned())
        } else {
            None
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let column = self.pos + 1;
                let name = self.ident_here().unwrap();
                self.pos += name.len();
                match name.as_str() {
                    "i" => return Ok(Expr::Imag),
                    "inf" => {
                        return Err(Error::Syntax {
                            column,
                            message: "+inf is not a permitted value; only -inf".into(),
                        })
                    }
                    _ => {}
                }
                if let Some(j) = name.strip_prefix('z').and_then(|s| s.parse::<usize>().ok()) {
                    if (1..=2).contains(&j) {
                        return Ok(Expr::Var(j - 1));
                    }
                }
                let func = Func::from_name(&name).ok_or(Error::UnknownIdentifier {
                    name: name.clone(),
                    column,
                })?;
                self.expect(b'(')?;
                let mut args = vec![self.expr()?];
                while self.eat(b',') {
                    args.push(self.expr()?);
                }
                self.expect(b')')?;
                let ok = match func {
                    Func::Max | Func::Min => args.len() >= 2,
                    _ => args.len() == 1,
                };
                if !ok {
                    return Err(Error::Arity {
                        name,
                        expected: if matches!(func, Func::Max | Func::Min) { 2 } else { 1 },
                        found: args.len(),
                        column,
                    });
                }
                if matches!(func, Func::Log | Func::Exp | Func::Max | Func::Min)
                    && args.iter().any(|a| type_of(a) == Ty::Complex)
                {
                    return Err(Error::Syntax {
                        column,
                        message: format!("`{name}` takes real arguments"),
                    });
                }
                Ok(Expr::Call(func, args))
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
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            digits(self);
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let x: f64 = text.parse().map_err(|_| Error::Syntax {
            column: start + 1,
            message: format!("malformed number `{text}`"),
        })?;
        Ok(Expr::Num(x))
    }
}
