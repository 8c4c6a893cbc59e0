//! Scalar expressions used in configuration files.
//!
//! Grammar (usual precedence, `^` binds tighter than unary minus and is
//! right associative, so `-2^2 = -4`):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('+' | '-') unary | power
//! power   := primary ('^' unary)?
//! primary := number | name | name '(' expr ')' | '(' expr ')'
//! ```
//!
//! Names are `x`, `y` (when allowed), `pi`, `e` and `lambdaN`, the `N`-th
//! Dirichlet eigenvalue of the rectangle. All arithmetic is `f64`.

use crate::error::{FlatError, Result};
use crate::spectral::analytic_eigenvalues;

/// Largest `N` accepted in `lambdaN`.
pub const MAX_LAMBDA_INDEX: usize = 100;

const MAX_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Atan,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "tan" => Self::Tan,
            "exp" => Self::Exp,
            "ln" => Self::Ln,
            "sqrt" => Self::Sqrt,
            "abs" => Self::Abs,
            "atan" => Self::Atan,
            "tanh" => Self::Tanh,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Self::Sin => v.sin(),
            Self::Cos => v.cos(),
            Self::Tan => v.tan(),
            Self::Exp => v.exp(),
            Self::Ln => v.ln(),
            Self::Sqrt => v.sqrt(),
            Self::Abs => v.abs(),
            Self::Atan => v.atan(),
            Self::Tanh => v.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Neg(a) => -a.eval(x, y),
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Expr::Pow(a, b) => a.eval(x, y).powf(b.eval(x, y)),
            Expr::Call(f, a) => f.apply(a.eval(x, y)),
        }
    }

    pub fn depends_on_position(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::X | Expr::Y => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_position(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on_position() || b.depends_on_position()
            }
        }
    }
}

/// Parses an expression in `x` and `y`.
pub fn parse_field(src: &str) -> Result<Expr> {
    Parser::new(src, true).parse()
}

/// Parses and evaluates an expression without position variables.
pub fn eval_constant(src: &str) -> Result<f64> {
    let e = Parser::new(src, false).parse()?;
    let v = e.eval(0.0, 0.0);
    if !v.is_finite() {
        return Err(FlatError::Expression {
            column: 1,
            message: format!("`{src}` evaluates to {v}"),
        });
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Op(char),
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
    allow_xy: bool,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, allow_xy: bool) -> Self {
        Self {
            src,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
            allow_xy,
            depth: 0,
        }
    }

    fn error<T>(&self, at: usize, message: impl Into<String>) -> Result<T> {
        // columns count characters, not bytes
        let column = self.src[..at.min(self.src.len())].chars().count() + 1;
        Err(FlatError::Expression {
            column,
            message: message.into(),
        })
    }

    fn advance(&mut self) -> Result<()> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            self.tok = Tok::End;
            return Ok(());
        };
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                self.pos += 1;
            }
            // exponent only when digits follow
            if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
                let mut q = self.pos + 1;
                if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                    q += 1;
                }
                if q < bytes.len() && bytes[q].is_ascii_digit() {
                    while q < bytes.len() && bytes[q].is_ascii_digit() {
                        q += 1;
                    }
                    self.pos = q;
                }
            }
            let text = &self.src[start..self.pos];
            match text.parse::<f64>() {
                Ok(v) => self.tok = Tok::Num(v),
                Err(_) => return self.error(start, format!("malformed number `{text}`")),
            }
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                self.pos += 1;
            }
            self.tok = Tok::Name(self.src[start..self.pos].to_string());
        } else if b"+-*/^()".contains(&c) {
            self.pos += 1;
            self.tok = Tok::Op(c as char);
        } else {
            let ch = self.src[self.pos..].chars().next().unwrap_or('?');
            return self.error(self.pos, format!("unexpected character `{ch}`"));
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Expr> {
        self.advance()?;
        if self.tok == Tok::End {
            return self.error(0, "empty expression");
        }
        let e = self.expr()?;
        if self.tok != Tok::End {
            return self.error(self.tok_start, "unexpected trailing input");
        }
        Ok(e)
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.error(self.tok_start, "expression nested too deeply");
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Tok::Op(op @ ('+' | '-')) = self.tok {
            self.advance()?;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Tok::Op(op @ ('*' | '/')) = self.tok {
            self.advance()?;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        self.enter()?;
        let out = match self.tok {
            Tok::Op('-') => {
                self.advance()?;
                Expr::Neg(Box::new(self.unary()?))
            }
            Tok::Op('+') => {
                self.advance()?;
                self.unary()?
            }
            _ => self.power()?,
        };
        self.depth -= 1;
        Ok(out)
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.tok == Tok::Op('^') {
            self.advance()?;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let start = self.tok_start;
        match std::mem::replace(&mut self.tok, Tok::End) {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::Num(v))
            }
            Tok::Op('(') => {
                self.advance()?;
                self.enter()?;
                let e = self.expr()?;
                self.depth -= 1;
                self.expect_close(start)?;
                Ok(e)
            }
            Tok::Name(name) => {
                self.advance()?;
                if let Some(f) = Func::from_name(&name) {
                    if self.tok != Tok::Op('(') {
                        return self.error(self.tok_start, format!("`{name}` must be followed by `(`"));
                    }
                    self.advance()?;
                    self.enter()?;
                    let arg = self.expr()?;
                    self.depth -= 1;
                    self.expect_close(start)?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                self.name(&name, start)
            }
            Tok::End => self.error(start, "unexpected end of expression"),
            Tok::Op(c) => self.error(start, format!("unexpected `{c}`")),
        }
    }

    fn expect_close(&mut self, open: usize) -> Result<()> {
        if self.tok != Tok::Op(')') {
            return self.error(open, "unbalanced `(`");
        }
        self.advance()
    }

    fn name(&self, name: &str, start: usize) -> Result<Expr> {
        match name {
            "x" | "y" if !self.allow_xy => self.error(start, format!("`{name}` is not available here")),
            "x" => Ok(Expr::X),
            "y" => Ok(Expr::Y),
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "e" => Ok(Expr::Num(std::f64::consts::E)),
            _ => {
                if let Some(digits) = name.strip_prefix("lambda") {
                    if let Ok(k) = digits.parse::<usize>() {
                        if (1..=MAX_LAMBDA_INDEX).contains(&k) && !digits.starts_with('0') {
                            return Ok(Expr::Num(analytic_eigenvalues(k)[k - 1]));
                        }
                        return self.error(start, format!("eigenvalue index must be in 1..={MAX_LAMBDA_INDEX}"));
                    }
                }
                self.error(start, format!("unknown name `{name}`"))
            }
        }
    }
}
