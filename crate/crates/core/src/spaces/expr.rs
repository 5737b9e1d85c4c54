//! Small arithmetic/boolean expression language for constraints and derived
//! parameters.
//!
//! All values are `f64`; booleans are `1.0`/`0.0`. Equality comparisons use a
//! relative tolerance of `1e-9` so products of integer-valued parameters
//! compare as expected.
//!
//! ```text
//! expr   := or
//! or     := and ("||" and)*
//! and    := cmp ("&&" cmp)*
//! cmp    := sum (("==" | "!=" | "<" | "<=" | ">" | ">=") sum)?
//! sum    := term (("+" | "-") term)*
//! term   := unary (("*" | "/" | "%") unary)*
//! unary  := ("-" | "!") unary | power
//! power  := atom ("^" unary)?
//! atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(String),
    Neg(Box<Node>),
    Not(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(String, Vec<Node>),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

const OPS: [&str; 16] = [
    "||", "&&", "==", "!=", "<=", ">=", "<", ">", "+", "-", "*", "/", "%", "^", "!", "=",
];

fn tokenize(src: &str) -> std::result::Result<Vec<Tok>, String> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i] as char;
        if ch.is_ascii_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || (ch == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let save = i;
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                if i < bytes.len() && bytes[i].is_ascii_digit() {
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let text = &src[start..i];
            out.push(Tok::Num(text.parse().map_err(|_| format!("bad number `{text}`"))?));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(src[start..i].to_string()));
        } else if ch == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if ch == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else if ch == ',' {
            out.push(Tok::Comma);
            i += 1;
        } else {
            let op = OPS
                .iter()
                .find(|op| src[i..].starts_with(**op))
                .ok_or_else(|| format!("unexpected character `{ch}` at offset {i}"))?;
            if *op == "=" {
                return Err(format!("`=` at offset {i}; use `==` for equality"));
            }
            out.push(Tok::Op(op));
            i += op.len();
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        if let Some(Tok::Op(op)) = self.peek() {
            if let Some(found) = ops.iter().find(|o| *o == op) {
                self.pos += 1;
                return Some(found);
            }
        }
        None
    }

    fn binary(&mut self, ops: &[&'static str], next: fn(&mut Self) -> std::result::Result<Node, String>, single: bool) -> std::result::Result<Node, String> {
        let mut lhs = next(self)?;
        while let Some(op) = self.eat_op(ops) {
            let rhs = next(self)?;
            let op = match op {
                "||" => BinOp::Or,
                "&&" => BinOp::And,
                "==" => BinOp::Eq,
                "!=" => BinOp::Ne,
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                ">=" => BinOp::Ge,
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                "*" => BinOp::Mul,
                "/" => BinOp::Div,
                "%" => BinOp::Rem,
                _ => unreachable!(),
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
            if single {
                break;
            }
        }
        Ok(lhs)
    }

    fn or(&mut self) -> std::result::Result<Node, String> {
        self.binary(&["||"], Self::and, false)
    }

    fn and(&mut self) -> std::result::Result<Node, String> {
        self.binary(&["&&"], Self::cmp, false)
    }

    fn cmp(&mut self) -> std::result::Result<Node, String> {
        self.binary(&["==", "!=", "<=", ">=", "<", ">"], Self::sum, true)
    }

    fn sum(&mut self) -> std::result::Result<Node, String> {
        self.binary(&["+", "-"], Self::term, false)
    }

    fn term(&mut self) -> std::result::Result<Node, String> {
        self.binary(&["*", "/", "%"], Self::unary, false)
    }

    fn unary(&mut self) -> std::result::Result<Node, String> {
        match self.eat_op(&["-", "!"]) {
            Some("-") => Ok(Node::Neg(Box::new(self.unary()?))),
            Some(_) => Ok(Node::Not(Box::new(self.unary()?))),
            None => self.power(),
        }
    }

    fn power(&mut self) -> std::result::Result<Node, String> {
        let base = self.atom()?;
        if self.eat_op(&["^"]).is_some() {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> std::result::Result<Node, String> {
        let tok = self.peek().cloned().ok_or("unexpected end of expression")?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Ident(name) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = vec![self.or()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.or()?);
                    }
                    if self.peek() != Some(&Tok::RParen) {
                        return Err(format!("expected `)` after arguments of `{name}`"));
                    }
                    self.pos += 1;
                    check_call(&name, args.len())?;
                    Ok(Node::Call(name, args))
                } else {
                    Ok(Node::Var(name))
                }
            }
            Tok::LParen => {
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err("expected `)`".into());
                }
                self.pos += 1;
                Ok(inner)
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}

fn check_call(name: &str, arity: usize) -> std::result::Result<(), String> {
    let expected = match name {
        "abs" | "floor" | "ceil" | "round" | "sqrt" | "log" | "log2" | "exp" => 1,
        "pow" => 2,
        "min" | "max" => return if arity >= 1 { Ok(()) } else { Err(format!("`{name}` needs arguments")) },
        _ => return Err(format!("unknown function `{name}`")),
    };
    if arity == expected {
        Ok(())
    } else {
        Err(format!("`{name}` takes {expected} argument(s), got {arity}"))
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn truth(v: bool) -> f64 {
    if v {
        1.0
    } else {
        0.0
    }
}

/// A parsed expression that remembers its source text.
#[derive(Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let err = |message: String| Error::Expression {
            expr: source.to_string(),
            message,
        };
        let toks = tokenize(source).map_err(err)?;
        if toks.is_empty() {
            return Err(err("empty expression".into()));
        }
        let mut p = Parser { toks, pos: 0 };
        let root = p.or().map_err(err)?;
        if p.pos != p.toks.len() {
            return Err(err(format!("trailing input after token {}", p.pos)));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Variable names referenced, in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        fn walk(n: &Node, out: &mut Vec<String>) {
            match n {
                Node::Num(_) => {}
                Node::Var(v) => {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
                Node::Neg(a) | Node::Not(a) => walk(a, out),
                Node::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Node::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        fn go(n: &Node, lookup: &dyn Fn(&str) -> Option<f64>) -> std::result::Result<f64, String> {
            Ok(match n {
                Node::Num(v) => *v,
                Node::Var(name) => lookup(name).ok_or_else(|| format!("unbound variable `{name}`"))?,
                Node::Neg(a) => -go(a, lookup)?,
                Node::Not(a) => truth(go(a, lookup)? == 0.0),
                Node::Bin(op, a, b) => {
                    let x = go(a, lookup)?;
                    // short-circuit boolean operators
                    match op {
                        BinOp::And if x == 0.0 => return Ok(0.0),
                        BinOp::Or if x != 0.0 => return Ok(1.0),
                        _ => {}
                    }
                    let y = go(b, lookup)?;
                    match op {
                        BinOp::Or | BinOp::And => truth(y != 0.0),
                        BinOp::Eq => truth(approx_eq(x, y)),
                        BinOp::Ne => truth(!approx_eq(x, y)),
                        BinOp::Lt => truth(x < y),
                        BinOp::Le => truth(x <= y || approx_eq(x, y)),
                        BinOp::Gt => truth(x > y),
                        BinOp::Ge => truth(x >= y || approx_eq(x, y)),
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => {
                            if y == 0.0 {
                                return Err("division by zero".into());
                            }
                            x / y
                        }
                        BinOp::Rem => {
                            if y == 0.0 {
                                return Err("remainder by zero".into());
                            }
                            x % y
                        }
                        BinOp::Pow => x.powf(y),
                    }
                }
                Node::Call(name, args) => {
                    let vals = args.iter().map(|a| go(a, lookup)).collect::<std::result::Result<Vec<_>, _>>()?;
                    match name.as_str() {
                        "abs" => vals[0].abs(),
                        "floor" => vals[0].floor(),
                        "ceil" => vals[0].ceil(),
                        "round" => vals[0].round(),
                        "sqrt" => vals[0].sqrt(),
                        "log" => vals[0].ln(),
                        "log2" => vals[0].log2(),
                        "exp" => vals[0].exp(),
                        "pow" => vals[0].powf(vals[1]),
                        "min" => vals.iter().copied().fold(f64::INFINITY, f64::min),
                        "max" => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        _ => unreachable!("validated at parse time"),
                    }
                }
            })
        }
        go(&self.root, lookup).map_err(|message| Error::Expression {
            expr: self.source.clone(),
            message,
        })
    }

    pub fn eval_bool(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<bool> {
        Ok(self.eval(lookup)? != 0.0)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}
