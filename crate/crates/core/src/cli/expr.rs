//! Arithmetic expressions over `x1..xn`.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x'digits | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | sqrt
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-2^2 = -4`
//! and `2^3^2 = 512`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Num(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Syntax tree node with the byte span it was parsed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub node: Node,
    pub start: usize,
    pub end: usize,
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    source: String,
    root: Expr,
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn err<T>(start: usize, end: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Expression { start, end, msg: msg.into() })
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let s = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
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
            match src[s..i].parse::<f64>() {
                Ok(v) => out.push((Tok::Num(v), s, i)),
                Err(_) => return err(s, i, format!("malformed number `{}`", &src[s..i])),
            }
        } else if c.is_ascii_alphabetic() {
            let s = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[s..i].to_string()), s, i));
        } else {
            let t = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = src[i..].chars().next().unwrap_or('?');
                    return err(i, i + ch.len_utf8(), format!("unexpected character `{ch}`"));
                }
            };
            out.push((t, i, i + 1));
            i += 1;
        }
    }
    out.push((Tok::End, src.len(), src.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, usize, usize) {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> (Tok, usize, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let (Tok::Op(c @ ('+' | '-')), _, _) = self.peek().clone() {
            self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr { start: lhs.start, end: rhs.end, node: Node::Bin(op, Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let (Tok::Op(c @ ('*' | '/')), _, _) = self.peek().clone() {
            self.bump();
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr { start: lhs.start, end: rhs.end, node: Node::Bin(op, Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let (Tok::Op('-'), s, _) = self.peek().clone() {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr { start: s, end: inner.end, node: Node::Neg(Box::new(inner)) });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if let (Tok::Op('^'), _, _) = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr { start: base.start, end: exp.end, node: Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)) });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let (tok, s, e) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr { node: Node::Num(v), start: s, end: e }),
            Tok::Ident(name) => {
                if name == "pi" {
                    return Ok(Expr { node: Node::Num(std::f64::consts::PI), start: s, end: e });
                }
                if let Some(f) = Func::from_name(&name) {
                    match self.bump() {
                        (Tok::LParen, _, _) => {}
                        (_, ps, pe) => return err(ps, pe, format!("expected `(` after `{name}`")),
                    }
                    let arg = self.expr()?;
                    return match self.bump() {
                        (Tok::RParen, _, close) => Ok(Expr { node: Node::Call(f, Box::new(arg)), start: s, end: close }),
                        (_, ps, pe) => err(ps, pe, "expected `)`"),
                    };
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()).filter(|&i| i >= 1 && !name[1..].starts_with('0')) {
                    return Ok(Expr { node: Node::Var(idx - 1), start: s, end: e });
                }
                err(s, e, format!("unknown identifier `{name}`"))
            }
            Tok::LParen => {
                let inner = self.expr()?;
                match self.bump() {
                    (Tok::RParen, _, close) => Ok(Expr { start: s, end: close, ..inner }),
                    (_, ps, pe) => err(ps, pe, "expected `)`"),
                }
            }
            Tok::End => err(s, e, "expected an operand, found end of input"),
            Tok::RParen => err(s, e, "expected an operand, found `)`"),
            Tok::Op(c) => err(s, e, format!("expected an operand, found `{c}`")),
        }
    }
}

/// Parse with byte-span diagnostics.
pub fn parse_expression(text: &str) -> Result<Expression> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let root = p.expr()?;
    match p.peek() {
        (Tok::End, _, _) => Ok(Expression { source: text.to_string(), root }),
        (_, s, e) => err(*s, *e, format!("unexpected `{}`", &text[*s..*e])),
    }
}

impl Expression {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Number of coordinates referenced (largest `i` in `xi`).
    pub fn arity(&self) -> usize {
        fn walk(e: &Expr) -> usize {
            match &e.node {
                Node::Num(_) => 0,
                Node::Var(i) => i + 1,
                Node::Neg(a) | Node::Call(_, a) => walk(a),
                Node::Bin(_, a, b) => walk(a).max(walk(b)),
            }
        }
        walk(&self.root)
    }

    pub fn is_constant(&self) -> bool {
        self.arity() == 0
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        eval_node(&self.root, x)
    }

    /// Evaluation that maps errors to NaN, for use inside numerical kernels.
    pub fn eval_or_nan(&self, x: &[f64]) -> f64 {
        self.eval(x).unwrap_or(f64::NAN)
    }
}

fn eval_node(e: &Expr, x: &[f64]) -> Result<f64> {
    Ok(match &e.node {
        Node::Num(v) => *v,
        Node::Var(i) => match x.get(*i) {
            Some(v) => *v,
            None => return err(e.start, e.end, format!("x{} is not defined in dimension {}", i + 1, x.len())),
        },
        Node::Neg(a) => -eval_node(a, x)?,
        Node::Call(f, a) => {
            let v = eval_node(a, x)?;
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Sqrt => {
                    if v < 0.0 {
                        return err(e.start, e.end, format!("sqrt of negative value {v}"));
                    }
                    v.sqrt()
                }
            }
        }
        Node::Bin(op, a, b) => {
            let (l, r) = (eval_node(a, x)?, eval_node(b, x)?);
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r == 0.0 {
                        return err(e.start, e.end, "division by zero");
                    }
                    l / r
                }
                BinOp::Pow => l.powf(r),
            }
        }
    })
}

/// Evaluate a variable-free expression.
pub fn eval_constant(text: &str) -> Result<f64> {
    let e = parse_expression(text)?;
    if !e.is_constant() {
        return err(0, text.len(), "expected a constant expression");
    }
    e.eval(&[])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64]) -> f64 {
        parse_expression(s).unwrap().eval(x).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2^3^2", &[]), 512.0);
        assert_eq!(ev("-2^2", &[]), -4.0);
        assert_eq!(ev("2^-1", &[]), 0.5);
        assert_eq!(ev("1 - 2 - 3", &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[]), 1.0);
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", &[]), 9.0);
        assert_eq!(ev("--3", &[]), 3.0);
        assert_eq!(ev("1.5e2 + .5", &[]), 150.5);
    }

    #[test]
    fn variables_and_calls() {
        let v = ev("sin(x1)*cos(x2)", &[std::f64::consts::FRAC_PI_2, 0.0]);
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(ev("sqrt(x3)", &[0.0, 0.0, 9.0]), 3.0);
        assert!((ev("exp(1) - pi", &[]) - (1f64.exp() - std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(parse_expression("x1 * x10").unwrap().arity(), 10);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_expression("x1 +") {
            Err(Error::Expression { start, .. }) => assert_eq!(start, 4),
            other => panic!("{other:?}"),
        }
        match parse_expression("1 + $") {
            Err(Error::Expression { start, end, .. }) => assert_eq!((start, end), (4, 5)),
            other => panic!("{other:?}"),
        }
        match parse_expression("sin(1") {
            Err(Error::Expression { start, .. }) => assert_eq!(start, 5),
            other => panic!("{other:?}"),
        }
        for bad in ["", "()", "1 2", "y1", "x0", "tan(1)", "1 +* 2", "sin 1"] {
            assert!(matches!(parse_expression(bad), Err(Error::Expression { .. })), "{bad}");
        }
    }

    #[test]
    fn evaluation_errors_point_at_the_operation() {
        let e = parse_expression("1 + 1/(x1 - 1)").unwrap();
        match e.eval(&[1.0]) {
            Err(Error::Expression { start, end, msg }) => {
                assert_eq!((start, end), (4, 14));
                assert!(msg.contains("division"));
            }
            other => panic!("{other:?}"),
        }
        match parse_expression("2 * sqrt(x1)").unwrap().eval(&[-1.0]) {
            Err(Error::Expression { start, end, .. }) => assert_eq!((start, end), (4, 12)),
            other => panic!("{other:?}"),
        }
        assert!(parse_expression("x2").unwrap().eval(&[1.0]).is_err());
    }
}
