//! Analytic expressions over node coordinates.
//!
//! Grammar (whitespace is insignificant, positions are byte offsets):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" unary ] ;            (* right associative *)
//! atom    = number | ident | ident "(" expr { "," expr } ")" | "(" expr ")" ;
//! ident   = letter { letter | digit | "_" } ;
//! ```
//!
//! Identifiers `x`, `y` (and `r` for kernel profiles) are variables; `pi` is a
//! constant. Functions: `min`, `max` (two or more arguments), `abs`, `sqrt`,
//! `exp`, `ln`, `sin`, `cos`, `pow(a, b)`. The barrier datum
//! `d(x) = min(1, |x - x0|)` is written `min(1, abs(x - x0))`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize, String),
    Neg(Box<Node>),
    Bin(usize, Op, Box<Node>, Box<Node>),
    Call(usize, Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Min,
    Max,
    Abs,
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 2,
            Func::Pow => n == 2,
            _ => n == 1,
        }
    }
}

/// A parsed expression; keeps its source text for round-tripping.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Vars {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

impl Vars {
    pub fn at(point: [f64; 2]) -> Self {
        Vars { x: point[0], y: point[1], r: 0.0 }
    }

    pub fn radius(r: f64) -> Self {
        Vars { x: 0.0, y: 0.0, r }
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr> {
        let mut p = Parser { src: source.as_bytes(), pos: 0 };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expr { source: source.to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates the expression; non-finite results are errors.
    pub fn eval(&self, vars: Vars) -> Result<f64> {
        let v = eval(&self.root, vars)?;
        if !v.is_finite() {
            return Err(Error::Eval { pos: 0, msg: format!("non-finite result {v}") });
        }
        Ok(v)
    }

    /// Names of the variables referenced anywhere in the expression.
    pub fn variables(&self) -> Vec<String> {
        fn walk(n: &Node, out: &mut Vec<String>) {
            match n {
                Node::Var(_, name) => {
                    if !out.contains(name) {
                        out.push(name.clone());
                    }
                }
                Node::Neg(a) => walk(a, out),
                Node::Bin(_, _, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Node::Call(_, _, args) => args.iter().for_each(|a| walk(a, out)),
                Node::Num(_) => {}
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

/// Parses and evaluates `expr` at a coordinate point.
pub fn expr_eval(expr: &str, point: [f64; 2]) -> Result<f64> {
    Expr::parse(expr)?.eval(Vars::at(point))
}

fn eval(n: &Node, vars: Vars) -> Result<f64> {
    Ok(match n {
        Node::Num(v) => *v,
        Node::Var(pos, name) => match name.as_str() {
            "x" => vars.x,
            "y" => vars.y,
            "r" => vars.r,
            "pi" => std::f64::consts::PI,
            _ => {
                return Err(Error::Eval { pos: *pos, msg: format!("unknown variable `{name}`") })
            }
        },
        Node::Neg(a) => -eval(a, vars)?,
        Node::Bin(pos, op, a, b) => {
            let (a, b) = (eval(a, vars)?, eval(b, vars)?);
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => {
                    if b == 0.0 {
                        return Err(Error::Eval { pos: *pos, msg: "division by zero".into() });
                    }
                    a / b
                }
                Op::Pow => checked(*pos, a.powf(b))?,
            }
        }
        Node::Call(pos, f, args) => {
            let vals = args.iter().map(|a| eval(a, vars)).collect::<Result<Vec<_>>>()?;
            let v = match f {
                Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Func::Abs => vals[0].abs(),
                Func::Sqrt => vals[0].sqrt(),
                Func::Exp => vals[0].exp(),
                Func::Ln => vals[0].ln(),
                Func::Sin => vals[0].sin(),
                Func::Cos => vals[0].cos(),
                Func::Pow => vals[0].powf(vals[1]),
            };
            checked(*pos, v)?
        }
    })
}

fn checked(pos: usize, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Eval { pos, msg: format!("non-finite intermediate value {v}") })
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
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

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let pos = self.pos;
            let op = match self.peek() {
                Some(b'+') => Op::Add,
                Some(b'-') => Op::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(pos, op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => Op::Mul,
                Some(b'/') => Op::Div,
                _ => return Ok(lhs),
            };
            let pos = self.pos;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(pos, op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            let pos = self.pos;
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(pos, Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
                if self.peek() == Some(b'(') {
                    let func = Func::lookup(&name).ok_or(Error::Parse {
                        pos: start,
                        msg: format!("unknown function `{name}`"),
                    })?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.eat(b',') {
                        args.push(self.expr()?);
                    }
                    if !self.eat(b')') {
                        return Err(self.error("expected `,` or `)`"));
                    }
                    if !func.arity_ok(args.len()) {
                        return Err(Error::Parse {
                            pos: start,
                            msg: format!("wrong number of arguments for `{name}`"),
                        });
                    }
                    Ok(Node::Call(start, func, args))
                } else {
                    Ok(Node::Var(start, name))
                }
            }
            Some(c) => Err(self.error(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node> {
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
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| Error::Parse { pos: start, msg: format!("bad number `{text}`") })
    }
}
