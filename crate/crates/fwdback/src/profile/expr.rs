//! A small expression language for user supplied profiles.
//!
//! Grammar (whitespace insensitive, variable `s`):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 's' | 'pi' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func  := sqrt | exp | ln | sin | cos | tanh | atan | abs | min | max
//! ```
//!
//! `min` and `max` allow piecewise profiles, e.g. the glued quadratic
//! `min(s,4)*(min(s,4)-3) + 5*max(s-4,0)`.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("expression error at column {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
    Tanh,
    Atan,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    /// `if a <= b then x else y`
    Select(Box<Expr>, Box<Expr>, Box<Expr>, Box<Expr>),
}

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { chars: src.chars().collect(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval<T: Scalar>(&self, s: T) -> T {
        match self {
            Expr::Num(x) => T::c(*x),
            Expr::Var => s,
            Expr::Neg(a) => -a.eval(s),
            Expr::Add(a, b) => a.eval(s) + b.eval(s),
            Expr::Sub(a, b) => a.eval(s) - b.eval(s),
            Expr::Mul(a, b) => a.eval(s) * b.eval(s),
            Expr::Div(a, b) => a.eval(s) / b.eval(s),
            Expr::Pow(a, b) => {
                let base = a.eval(s);
                match b.as_ref() {
                    Expr::Num(k) if k.fract() == 0.0 && k.abs() < 64.0 => base.powi(*k as i32),
                    _ => base.powf(b.eval(s)),
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(s);
                match f {
                    Func::Sqrt => x.sqrt(),
                    Func::Exp => x.exp(),
                    Func::Ln => x.ln(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tanh => x.tanh(),
                    Func::Atan => x.atan(),
                    Func::Abs => x.abs(),
                }
            }
            Expr::Select(a, b, x, y) => {
                if a.eval(s) <= b.eval(s) {
                    x.eval(s)
                } else {
                    y.eval(s)
                }
            }
        }
    }

    fn is_const(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_const(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_const() && b.is_const()
            }
            Expr::Select(a, b, x, y) => a.is_const() && b.is_const() && x.is_const() && y.is_const(),
        }
    }

    /// Symbolic derivative with respect to `s`.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) => Num(0.0),
            Var => Num(1.0),
            Neg(a) => Neg(bx(a.derivative())),
            Add(a, b) => Add(bx(a.derivative()), bx(b.derivative())),
            Sub(a, b) => Sub(bx(a.derivative()), bx(b.derivative())),
            Mul(a, b) => Add(
                bx(Mul(bx(a.derivative()), b.clone())),
                bx(Mul(a.clone(), bx(b.derivative()))),
            ),
            Div(a, b) => Div(
                bx(Sub(
                    bx(Mul(bx(a.derivative()), b.clone())),
                    bx(Mul(a.clone(), bx(b.derivative()))),
                )),
                bx(Mul(b.clone(), b.clone())),
            ),
            Pow(a, b) => {
                if b.is_const() {
                    // b a^(b-1) a'
                    Mul(
                        bx(Mul(b.clone(), bx(Pow(a.clone(), bx(Sub(b.clone(), bx(Num(1.0)))))))),
                        bx(a.derivative()),
                    )
                } else {
                    // a^b (b' ln a + b a'/a)
                    Mul(
                        bx(self.clone()),
                        bx(Add(
                            bx(Mul(bx(b.derivative()), bx(Call(Func::Ln, a.clone())))),
                            bx(Div(bx(Mul(b.clone(), bx(a.derivative()))), a.clone())),
                        )),
                    )
                }
            }
            Call(f, a) => {
                let da = bx(a.derivative());
                let outer = match f {
                    Func::Sqrt => Div(bx(Num(0.5)), bx(Call(Func::Sqrt, a.clone()))),
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Ln => Div(bx(Num(1.0)), a.clone()),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(bx(Call(Func::Sin, a.clone()))),
                    Func::Tanh => {
                        let t = bx(Call(Func::Tanh, a.clone()));
                        Sub(bx(Num(1.0)), bx(Mul(t.clone(), t)))
                    }
                    Func::Atan => Div(bx(Num(1.0)), bx(Add(bx(Num(1.0)), bx(Mul(a.clone(), a.clone()))))),
                    Func::Abs => Select(a.clone(), bx(Num(0.0)), bx(Num(-1.0)), bx(Num(1.0))),
                };
                Mul(bx(outer), da)
            }
            Select(a, b, x, y) => Select(a.clone(), b.clone(), bx(x.derivative()), bx(y.derivative())),
        }
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn err(&self, msg: &str) -> ParseError {
        ParseError { pos: self.pos + 1, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    lhs = Expr::Add(bx(lhs), bx(self.term()?));
                }
                Some('-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(bx(lhs), bx(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(bx(lhs), bx(self.unary()?));
                }
                Some('/') => {
                    self.pos += 1;
                    lhs = Expr::Div(bx(lhs), bx(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(bx(self.unary()?)));
        }
        if self.peek() == Some('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(bx(base), bx(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_ascii_alphanumeric() || self.chars[self.pos] == '_')
                {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                match name.as_str() {
                    "s" => Ok(Expr::Var),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    _ => self.call(&name, start),
                }
            }
            Some(c) => Err(self.err(&format!("unexpected character '{c}'"))),
        }
    }

    fn call(&mut self, name: &str, start: usize) -> Result<Expr, ParseError> {
        let f = match name {
            "sqrt" => Some(Func::Sqrt),
            "exp" => Some(Func::Exp),
            "ln" | "log" => Some(Func::Ln),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tanh" => Some(Func::Tanh),
            "atan" => Some(Func::Atan),
            "abs" => Some(Func::Abs),
            "min" | "max" => None,
            _ => {
                return Err(ParseError { pos: start + 1, msg: format!("unknown identifier '{name}'") });
            }
        };
        self.expect('(')?;
        let a = self.expr()?;
        let e = match f {
            Some(f) => Expr::Call(f, bx(a)),
            None => {
                self.expect(',')?;
                let b = self.expr()?;
                if name == "min" {
                    Expr::Select(bx(a.clone()), bx(b.clone()), bx(a), bx(b))
                } else {
                    Expr::Select(bx(a.clone()), bx(b.clone()), bx(b), bx(a))
                }
            }
        };
        self.expect(')')?;
        Ok(e)
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let n = self.chars.len();
        while self.pos < n && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < n && (self.chars[self.pos] == 'e' || self.chars[self.pos] == 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < n && (self.chars[self.pos] == '+' || self.chars[self.pos] == '-') {
                self.pos += 1;
            }
            if self.pos < n && self.chars[self.pos].is_ascii_digit() {
                while self.pos < n && self.chars[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ParseError { pos: start + 1, msg: format!("bad number '{text}'") })
    }
}
