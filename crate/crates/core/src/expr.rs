//! A small straight-line arithmetic language for problem data.
//!
//! Expressions describe the semilinearity `f(x, s, ξ)`, the data `h(x)`,
//! `h₀(x)`, the growth majorant `γ(s)`, Robin weights `β(x)` and domain
//! indicators. The grammar is ordinary infix arithmetic:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          (right associative)
//! primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables are `x1..xd`, `s`, `xi1..xid` and `gnorm` (the Euclidean norm of
//! the gradient slot). The reserved parameter names `lambda1`, `eps` and `Lmax`
//! are substituted by [`Expr::bind`] once the eigenvalue is known; `pi` is a
//! constant.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::scalar::Real;

/// Reserved parameter names resolved after the eigenvalue solve.
pub const PARAMS: [&str; 3] = ["lambda1", "eps", "Lmax"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Var {
    /// Spatial coordinate, zero based (`x1` is `X(0)`).
    X(usize),
    S,
    /// Gradient component, zero based.
    Xi(usize),
    GNorm,
    Param(String),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::S => f.write_str("s"),
            Var::Xi(i) => write!(f, "xi{}", i + 1),
            Var::GNorm => f.write_str("gnorm"),
            Var::Param(p) => f.write_str(p),
        }
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

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sign,
    Min,
    Max,
    Exp,
    Sin,
    Cos,
    Sqrt,
    PosPart,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "min" => Func::Min,
            "max" => Func::Max,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "pospart" => Func::PosPart,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::PosPart => "pospart",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression for a fixed spatial dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    dim: usize,
    root: Node,
}

/// Evaluation point: spatial position, state value and gradient slot.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a, T> {
    pub x: &'a [T],
    pub s: T,
    pub xi: &'a [T],
    gnorm: T,
}

impl<'a, T: Real> Point<'a, T> {
    pub fn new(x: &'a [T], s: T, xi: &'a [T]) -> Self {
        let gnorm = xi.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        Point { x, s, xi, gnorm }
    }

    /// A point without gradient information (`xi` empty, `gnorm = 0`).
    pub fn at(x: &'a [T], s: T) -> Self {
        Point {
            x,
            s,
            xi: &[],
            gnorm: T::zero(),
        }
    }
}

/// Parse `text` as an expression over `dim` spatial dimensions.
pub fn parse_expr(text: &str, dim: usize) -> Result<Expr, ExprError> {
    if dim == 0 {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "dimension must be at least 1".into(),
        });
    }
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        dim,
        len: text.len(),
    };
    let root = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(ExprError::Syntax {
            pos: tok.pos,
            msg: format!("unexpected trailing `{}`", tok.kind),
        });
    }
    Ok(Expr { dim, root })
}

impl Expr {
    pub fn constant(value: f64, dim: usize) -> Self {
        Expr {
            dim,
            root: Node::Const(value),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Names of all free variables and unbound parameters.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        collect_vars(&self.root, &mut |v| {
            out.insert(v.to_string());
        });
        out
    }

    /// True if every variable satisfies `allowed`.
    pub fn uses_only(&self, allowed: impl Fn(&Var) -> bool) -> bool {
        let mut ok = true;
        collect_vars(&self.root, &mut |v| ok &= allowed(v));
        ok
    }

    /// Substitute named parameters by constants. Unknown names are left alone.
    pub fn bind(&self, params: &HashMap<String, f64>) -> Expr {
        Expr {
            dim: self.dim,
            root: bind_node(&self.root, params),
        }
    }

    /// Evaluate at a point.
    pub fn eval<T: Real>(&self, p: &Point<'_, T>) -> Result<T, ExprError> {
        let v = eval_node(&self.root, p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain(format!("non-finite result {v}")))
        }
    }

    /// Evaluate against a name → value map (`x1`, `s`, `xi1`, `gnorm`, params).
    pub fn eval_map(&self, env: &HashMap<String, f64>) -> Result<f64, ExprError> {
        let bound = self.bind(env);
        let mut missing = None;
        collect_vars(&bound.root, &mut |v| {
            let name = v.to_string();
            let present = match v {
                Var::GNorm => {
                    env.contains_key("gnorm") || (0..self.dim).all(|i| env.contains_key(&format!("xi{}", i + 1)))
                }
                _ => env.contains_key(&name),
            };
            if !present && missing.is_none() {
                missing = Some(name);
            }
        });
        if let Some(name) = missing {
            return Err(ExprError::Unbound(name));
        }
        let get = |k: String| env.get(&k).copied().unwrap_or(0.0);
        let x: Vec<f64> = (0..self.dim).map(|i| get(format!("x{}", i + 1))).collect();
        let xi: Vec<f64> = (0..self.dim).map(|i| get(format!("xi{}", i + 1))).collect();
        let mut p = Point::new(&x, get("s".into()), &xi);
        if let Some(&g) = env.get("gnorm") {
            p.gnorm = g;
        }
        bound.eval(&p)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Const(c) => {
            if c.is_sign_negative() {
                write!(f, "(-{:?})", -c)
            } else {
                write!(f, "{c:?}")
            }
        }
        Node::Var(v) => write!(f, "{v}"),
        Node::Neg(a) => {
            f.write_str("(-")?;
            write_node(a, f)?;
            f.write_str(")")
        }
        Node::Bin(op, a, b) => {
            f.write_str("(")?;
            write_node(a, f)?;
            write!(f, " {} ", op.symbol())?;
            write_node(b, f)?;
            f.write_str(")")
        }
        Node::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_node(a, f)?;
            }
            f.write_str(")")
        }
    }
}

fn collect_vars(node: &Node, visit: &mut impl FnMut(&Var)) {
    match node {
        Node::Const(_) => {}
        Node::Var(v) => visit(v),
        Node::Neg(a) => collect_vars(a, visit),
        Node::Bin(_, a, b) => {
            collect_vars(a, visit);
            collect_vars(b, visit);
        }
        Node::Call(_, args) => args.iter().for_each(|a| collect_vars(a, visit)),
    }
}

fn bind_node(node: &Node, params: &HashMap<String, f64>) -> Node {
    match node {
        Node::Var(Var::Param(name)) => match params.get(name) {
            Some(&v) => Node::Const(v),
            None => node.clone(),
        },
        Node::Const(_) | Node::Var(_) => node.clone(),
        Node::Neg(a) => match bind_node(a, params) {
            Node::Const(c) => Node::Const(-c),
            other => Node::Neg(Box::new(other)),
        },
        Node::Bin(op, a, b) => Node::Bin(
            *op,
            Box::new(bind_node(a, params)),
            Box::new(bind_node(b, params)),
        ),
        Node::Call(func, args) => Node::Call(*func, args.iter().map(|a| bind_node(a, params)).collect()),
    }
}

fn eval_node<T: Real>(node: &Node, p: &Point<'_, T>) -> Result<T, ExprError> {
    Ok(match node {
        Node::Const(c) => T::lit(*c),
        Node::Var(v) => match v {
            Var::X(i) => *p.x.get(*i).ok_or_else(|| ExprError::Unbound(v.to_string()))?,
            Var::S => p.s,
            Var::Xi(i) => p.xi.get(*i).copied().unwrap_or_else(T::zero),
            Var::GNorm => p.gnorm,
            Var::Param(name) => return Err(ExprError::Unbound(name.clone())),
        },
        Node::Neg(a) => -eval_node(a, p)?,
        Node::Bin(op, a, b) => {
            let a = eval_node(a, p)?;
            let b = eval_node(b, p)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == T::zero() {
                        return Err(ExprError::Domain(format!("division by zero ({a} / 0)")));
                    }
                    a / b
                }
                BinOp::Pow => pow(a, b)?,
            }
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], p)?;
            match func {
                Func::Abs => a.abs(),
                Func::Sign => {
                    if a > T::zero() {
                        T::one()
                    } else if a < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                }
                Func::Min => a.min(eval_node(&args[1], p)?),
                Func::Max => a.max(eval_node(&args[1], p)?),
                Func::Exp => a.exp(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Sqrt => {
                    if a < T::zero() {
                        return Err(ExprError::Domain(format!("sqrt of negative value {a}")));
                    }
                    a.sqrt()
                }
                Func::PosPart => a.max(T::zero()),
            }
        }
    })
}

fn pow<T: Real>(base: T, exp: T) -> Result<T, ExprError> {
    if exp.fract() == T::zero() && exp.abs() <= T::lit(i32::MAX as f64) {
        let n = exp.to_i32().expect("integral exponent");
        if base == T::zero() && n < 0 {
            return Err(ExprError::Domain("zero raised to a negative power".into()));
        }
        Ok(base.powi(n))
    } else if base >= T::zero() {
        Ok(base.powf(exp))
    } else {
        Err(ExprError::Domain(format!(
            "negative base {base} with non-integer exponent {exp}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Num(n) => write!(f, "{n}"),
            TokKind::Ident(s) => f.write_str(s),
            TokKind::Op(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
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
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
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
            let value = lit.parse::<f64>().map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{lit}`"),
            })?;
            out.push(Token {
                kind: TokKind::Num(value),
                pos: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokKind::Ident(text[start..i].to_string()),
                pos: start,
            });
        } else if "+-*/^(),".contains(c) {
            out.push(Token {
                kind: TokKind::Op(c),
                pos: i,
            });
            i += 1;
        } else {
            return Err(ExprError::Syntax {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    cursor: usize,
    dim: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokKind::Op(c), ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn expect_op(&mut self, want: char) -> Result<(), ExprError> {
        match self.peek_op() {
            Some(c) if c == want => {
                self.cursor += 1;
                Ok(())
            }
            _ => Err(self.error(format!("expected `{want}`"))),
        }
    }

    fn error(&self, msg: String) -> ExprError {
        let pos = self.peek().map_or(self.len, |t| t.pos);
        ExprError::Syntax { pos, msg }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.cursor += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.cursor += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek_op() {
            Some('-') => {
                self.cursor += 1;
                Ok(match self.unary()? {
                    Node::Const(c) => Node::Const(-c),
                    other => Node::Neg(Box::new(other)),
                })
            }
            Some('+') => {
                self.cursor += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.peek_op() == Some('^') {
            self.cursor += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| self.error("unexpected end of input".into()))?;
        self.cursor += 1;
        match tok.kind {
            TokKind::Num(v) => Ok(Node::Const(v)),
            TokKind::Op('(') => {
                let inner = self.expr()?;
                self.expect_op(')')?;
                Ok(inner)
            }
            TokKind::Op(c) => {
                self.cursor -= 1;
                Err(self.error(format!("unexpected `{c}`")))
            }
            TokKind::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownIdentifier {
                        name: name.clone(),
                        pos: tok.pos,
                    })?;
                    self.cursor += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek_op() == Some(',') {
                        self.cursor += 1;
                        args.push(self.expr()?);
                    }
                    self.expect_op(')')?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Syntax {
                            pos: tok.pos,
                            msg: format!(
                                "`{}` takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                self.variable(&name, tok.pos)
            }
        }
    }

    fn variable(&self, name: &str, pos: usize) -> Result<Node, ExprError> {
        let unknown = || ExprError::UnknownIdentifier {
            name: name.to_string(),
            pos,
        };
        let indexed = |prefix: &str| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() || rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            rest.parse::<usize>().ok()
        };
        match name {
            "s" => return Ok(Node::Var(Var::S)),
            "gnorm" => return Ok(Node::Var(Var::GNorm)),
            "pi" => return Ok(Node::Const(std::f64::consts::PI)),
            _ if PARAMS.contains(&name) => return Ok(Node::Var(Var::Param(name.to_string()))),
            _ => {}
        }
        if let Some(i) = indexed("xi") {
            return if (1..=self.dim).contains(&i) {
                Ok(Node::Var(Var::Xi(i - 1)))
            } else {
                Err(unknown())
            };
        }
        if let Some(i) = indexed("x") {
            return if (1..=self.dim).contains(&i) {
                Ok(Node::Var(Var::X(i - 1)))
            } else {
                Err(unknown())
            };
        }
        Err(unknown())
    }
}
