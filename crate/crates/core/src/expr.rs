//! Scalar field expressions.
//!
//! A small infix language over the coordinates of a model domain, evaluated
//! either as plain `f64` or as a forward-mode dual number carrying the exact
//! gradient. Both paths share one generic evaluator, so values agree bit for
//! bit between them.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::geometry::DomainKind;

/// Maximum number of independent variables an expression can reference.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown variable `{name}` at offset {offset} (allowed: {allowed})")]
    UnknownVariable {
        name: String,
        offset: usize,
        allowed: String,
    },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point has {got} coordinates, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

/// The set of coordinate names an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarSet {
    Xy,
    Xyz,
    /// The radial coordinate of a collar profile.
    R,
}

impl VarSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            VarSet::Xy => &["x", "y"],
            VarSet::Xyz => &["x", "y", "z"],
            VarSet::R => &["r"],
        }
    }

    pub fn dim(self) -> usize {
        self.names().len()
    }

    fn lookup(self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| *n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Pi,
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn is_constant(&self) -> bool {
        match self {
            Node::Num(_) | Node::Pi => true,
            Node::Var(_) => false,
            Node::Neg(a) | Node::Call(_, a) => a.is_constant(),
            Node::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

/// Value and exact gradient of an expression at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueGrad {
    pub value: f64,
    grad: [f64; MAX_DIM],
    dim: usize,
}

impl ValueGrad {
    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    /// Gradient padded with zeros to three components.
    pub fn grad3(&self) -> [f64; MAX_DIM] {
        self.grad
    }
}

/// A parsed, validated scalar expression. Immutable after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    vars: VarSet,
}

impl Expression {
    /// Parses `text` over the ambient coordinates of `kind`.
    pub fn parse(text: &str, kind: DomainKind) -> Result<Expression, ExprError> {
        Self::parse_with(text, kind.variables())
    }

    pub fn parse_with(text: &str, vars: VarSet) -> Result<Expression, ExprError> {
        let mut p = Parser {
            tokens: tokenize(text)?,
            pos: 0,
            vars,
            end: text.len(),
        };
        if p.tokens.is_empty() {
            return Err(ExprError::Syntax {
                offset: 0,
                expected: "an expression".into(),
            });
        }
        let root = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(ExprError::Syntax {
                offset: t.offset,
                expected: "an operator or end of input".into(),
            });
        }
        Ok(Expression { root, vars })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> VarSet {
        self.vars
    }

    /// Builds `factor * self` without reparsing.
    pub fn scaled(&self, factor: f64) -> Expression {
        Expression {
            root: Node::Bin(
                BinOp::Mul,
                Box::new(Node::Num(factor)),
                Box::new(self.root.clone()),
            ),
            vars: self.vars,
        }
    }

    fn check_dim(&self, p: &[f64]) -> Result<(), ExprError> {
        if p.len() != self.vars.dim() {
            return Err(ExprError::Dimension {
                got: p.len(),
                expected: self.vars.dim(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64, ExprError> {
        self.check_dim(p)?;
        eval_node(&self.root, p)
    }

    /// Value and exact first derivatives by forward-mode differentiation.
    pub fn eval_with_gradient(&self, p: &[f64]) -> Result<ValueGrad, ExprError> {
        self.check_dim(p)?;
        let mut vars = [Dual::constant(0.0); MAX_DIM];
        for (i, &x) in p.iter().enumerate() {
            vars[i] = Dual::variable(x, i);
        }
        let d = eval_node(&self.root, &vars[..p.len()])?;
        Ok(ValueGrad {
            value: d.re,
            grad: d.eps,
            dim: p.len(),
        })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, self.vars, f)
    }
}

fn write_node(n: &Node, vars: VarSet, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match n {
        Node::Num(x) if x.is_sign_negative() => write!(f, "(-{})", -x),
        Node::Num(x) => write!(f, "{x}"),
        Node::Pi => f.write_str("pi"),
        Node::Var(i) => f.write_str(vars.names()[*i]),
        Node::Neg(a) => {
            f.write_str("(-")?;
            write_node(a, vars, f)?;
            f.write_str(")")
        }
        Node::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => " + ",
                BinOp::Sub => " - ",
                BinOp::Mul => " * ",
                BinOp::Div => " / ",
                BinOp::Pow => "^",
            };
            f.write_str("(")?;
            write_node(a, vars, f)?;
            f.write_str(sym)?;
            write_node(b, vars, f)?;
            f.write_str(")")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, vars, f)?;
            f.write_str(")")
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Dual number with up to three infinitesimal directions.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual {
    re: f64,
    eps: [f64; MAX_DIM],
}

impl Dual {
    fn constant(re: f64) -> Dual {
        Dual {
            re,
            eps: [0.0; MAX_DIM],
        }
    }

    fn variable(re: f64, i: usize) -> Dual {
        let mut eps = [0.0; MAX_DIM];
        eps[i] = 1.0;
        Dual { re, eps }
    }

    /// Chain rule: value `re`, derivative factor `d`.
    fn chain(self, re: f64, d: f64) -> Dual {
        Dual {
            re,
            eps: self.eps.map(|e| e * d),
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            re: self.re + o.re,
            eps: std::array::from_fn(|i| self.eps[i] + o.eps[i]),
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            re: self.re - o.re,
            eps: std::array::from_fn(|i| self.eps[i] - o.eps[i]),
        }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            re: self.re * o.re,
            eps: std::array::from_fn(|i| self.eps[i] * o.re + self.re * o.eps[i]),
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.re;
        Dual {
            re: self.re * inv,
            eps: std::array::from_fn(|i| (self.eps[i] * o.re - self.re * o.eps[i]) * inv * inv),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            re: -self.re,
            eps: self.eps.map(|e| -e),
        }
    }
}

trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn lift(x: f64) -> Self;
    fn re(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, c: f64) -> Self;
}

impl Scalar for f64 {
    fn lift(x: f64) -> f64 {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    fn tan(self) -> f64 {
        f64::tan(self)
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> f64 {
        f64::powi(self, n)
    }
    fn powf(self, c: f64) -> f64 {
        f64::powf(self, c)
    }
}

impl Scalar for Dual {
    fn lift(x: f64) -> Dual {
        Dual::constant(x)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn sin(self) -> Dual {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Dual {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tan(self) -> Dual {
        let t = self.re.tan();
        self.chain(t, 1.0 + t * t)
    }
    fn exp(self) -> Dual {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Dual {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn sqrt(self) -> Dual {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn powi(self, n: i32) -> Dual {
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.re.powi(n - 1)
        };
        self.chain(self.re.powi(n), d)
    }
    fn powf(self, c: f64) -> Dual {
        self.chain(self.re.powf(c), c * self.re.powf(c - 1.0))
    }
}

fn eval_node<T: Scalar>(n: &Node, vars: &[T]) -> Result<T, ExprError> {
    Ok(match n {
        Node::Num(x) => T::lift(*x),
        Node::Pi => T::lift(std::f64::consts::PI),
        Node::Var(i) => vars[*i],
        Node::Neg(a) => -eval_node(a, vars)?,
        Node::Bin(op, a, b) => {
            let u = eval_node(a, vars)?;
            match op {
                BinOp::Add => u + eval_node(b, vars)?,
                BinOp::Sub => u - eval_node(b, vars)?,
                BinOp::Mul => u * eval_node(b, vars)?,
                BinOp::Div => {
                    let v = eval_node(b, vars)?;
                    if v.re() == 0.0 {
                        return Err(ExprError::Domain("division by zero".into()));
                    }
                    u / v
                }
                BinOp::Pow => pow(u, b, vars)?,
            }
        }
        Node::Call(func, a) => {
            let u = eval_node(a, vars)?;
            match func {
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Tan => u.tan(),
                Func::Exp => u.exp(),
                Func::Log => {
                    if u.re() <= 0.0 {
                        return Err(ExprError::Domain(format!(
                            "log of non-positive argument {}",
                            u.re()
                        )));
                    }
                    u.ln()
                }
                Func::Sqrt => {
                    if u.re() <= 0.0 {
                        return Err(ExprError::Domain(format!(
                            "sqrt of non-positive argument {}",
                            u.re()
                        )));
                    }
                    u.sqrt()
                }
            }
        }
    })
}

fn pow<T: Scalar>(base: T, exponent: &Node, vars: &[T]) -> Result<T, ExprError> {
    if exponent.is_constant() {
        let c: f64 = eval_node(exponent, &[] as &[f64])?;
        if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 {
            if c < 0.0 && base.re() == 0.0 {
                return Err(ExprError::Domain("zero raised to a negative power".into()));
            }
            return Ok(base.powi(c as i32));
        }
        if base.re() <= 0.0 {
            return Err(ExprError::Domain(format!(
                "non-positive base {} raised to non-integer power",
                base.re()
            )));
        }
        return Ok(base.powf(c));
    }
    if base.re() <= 0.0 {
        return Err(ExprError::Domain(format!(
            "non-positive base {} raised to a variable power",
            base.re()
        )));
    }
    Ok((eval_node(exponent, vars)? * base.ln()).exp())
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit = &text[start..i];
            let value: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                expected: "a numeric literal".into(),
            })?;
            if !value.is_finite() {
                return Err(ExprError::Syntax {
                    offset: start,
                    expected: "a finite numeric literal".into(),
                });
            }
            out.push(Token {
                tok: Tok::Num(value),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                offset: start,
            });
        } else if "+-*/^()".contains(c) {
            out.push(Token {
                tok: Tok::Op(c),
                offset: i,
            });
            i += 1;
        } else {
            return Err(ExprError::Syntax {
                offset: i,
                expected: format!("a token, found `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    vars: VarSet,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat_op(&mut self, ops: &str) -> Option<char> {
        match self.peek() {
            Some(Token {
                tok: Tok::Op(c), ..
            }) if ops.contains(*c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect_op(&mut self, op: char) -> Result<(), ExprError> {
        self.eat_op(&op.to_string())
            .map(|_| ())
            .ok_or_else(|| ExprError::Syntax {
                offset: self.offset(),
                expected: format!("`{op}`"),
            })
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op("+-") {
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op("*/") {
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // unary := ('-' | '+') unary | power
    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.eat_op("+-") {
            Some('-') => Ok(Node::Neg(Box::new(self.unary()?))),
            Some(_) => self.unary(),
            None => self.power(),
        }
    }

    // power := primary ('^' unary)?    (right associative through unary)
    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.eat_op("^").is_some() {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let offset = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return Err(ExprError::Syntax {
                offset,
                expected: "an operand".into(),
            });
        };
        match tok.tok {
            Tok::Num(x) => {
                self.pos += 1;
                Ok(Node::Num(x))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_op(')')?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.eat_op("(").is_some() {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        name: name.clone(),
                        offset,
                    })?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Node::Pi);
                }
                match self.vars.lookup(&name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(ExprError::UnknownVariable {
                        name,
                        offset,
                        allowed: self.vars.names().join(", "),
                    }),
                }
            }
            Tok::Op(c) => Err(ExprError::Syntax {
                offset,
                expected: format!("an operand, found `{c}`"),
            }),
        }
    }
}
