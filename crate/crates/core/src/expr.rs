//! Scalar expressions in `t`, `x`, `y`.
//!
//! Coefficients, exact solutions and manufactured forcings are all carried as
//! [`Expr`] trees so that a run is fully described by its configuration text.
//!
//! Grammar (precedence from tightest to loosest: `^`, unary `-`, `* /`, `+ -`):
//!
//! ```text
//! expr  := term (('+'|'-') term)*
//! term  := unary (('*'|'/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' exponent)?
//! exponent := '-'? integer ('^' exponent)?
//! atom  := number | 'pi' | 't' | 'x' | 'y' | func '(' expr ')' | '(' expr ')'
//! func  := 'sin' | 'cos' | 'exp'
//! ```
//!
//! Exponents are integer literals only. A chain such as `2^3^2` associates to
//! the right and the exponent tower is folded at parse time (`2^9`).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("division by zero while evaluating expression")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    Y,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
        }
    }
}

/// Abstract syntax tree of a scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// Evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }

    fn get(&self, v: Var) -> f64 {
        match v {
            Var::T => self.t,
            Var::X => self.x,
            Var::Y => self.y,
        }
    }
}

/// Parses `source` into an expression tree.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    let tokens = lex(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: source.len(),
    };
    if parser.tokens.is_empty() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let e = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(ExprError::Syntax {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    /// Evaluates at `(t, x, y)`.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64, ExprError> {
        self.eval_at(&Point::new(t, x, y))
    }

    pub fn eval_at(&self, p: &Point) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Pi => PI,
            Expr::Var(v) => p.get(*v),
            Expr::Neg(a) => -a.eval_at(p)?,
            Expr::Add(a, b) => a.eval_at(p)? + b.eval_at(p)?,
            Expr::Sub(a, b) => a.eval_at(p)? - b.eval_at(p)?,
            Expr::Mul(a, b) => a.eval_at(p)? * b.eval_at(p)?,
            Expr::Div(a, b) => {
                let num = a.eval_at(p)?;
                let den = b.eval_at(p)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, n) => {
                let base = a.eval_at(p)?;
                if base == 0.0 && *n < 0 {
                    return Err(ExprError::DivisionByZero);
                }
                base.powi(*n)
            }
            Expr::Call(f, a) => f.apply(a.eval_at(p)?),
        })
    }

    /// Whether the expression mentions `v` anywhere.
    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on(v),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    /// Returns the value if the tree contains no variables.
    pub fn as_constant(&self) -> Option<f64> {
        if self.depends_on(Var::T) || self.depends_on(Var::X) || self.depends_on(Var::Y) {
            return None;
        }
        self.eval(0.0, 0.0, 0.0).ok()
    }

    /// Exact symbolic derivative with respect to `v`.
    ///
    /// The result is lightly folded (`0·e`, `1·e`, `e+0`) but otherwise
    /// unsimplified.
    pub fn differentiate(&self, v: Var) -> Expr {
        match self {
            Expr::Num(_) | Expr::Pi => Expr::Num(0.0),
            Expr::Var(w) => Expr::Num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(v)),
            Expr::Add(a, b) => add(a.differentiate(v), b.differentiate(v)),
            Expr::Sub(a, b) => sub(a.differentiate(v), b.differentiate(v)),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(v), (**b).clone()),
                mul((**a).clone(), b.differentiate(v)),
            ),
            Expr::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = sub(
                    mul(a.differentiate(v), (**b).clone()),
                    mul((**a).clone(), b.differentiate(v)),
                );
                div(num, pow((**b).clone(), 2))
            }
            Expr::Pow(a, n) => {
                if *n == 0 {
                    return Expr::Num(0.0);
                }
                let outer = mul(Expr::Num(*n as f64), pow((**a).clone(), n - 1));
                mul(outer, a.differentiate(v))
            }
            Expr::Call(f, a) => {
                let inner = a.differentiate(v);
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Expr::Call(Func::Sin, a.clone())),
                    Func::Exp => Expr::Call(Func::Exp, a.clone()),
                };
                mul(outer, inner)
            }
        }
    }

    /// Laplacian in `(x, y)`.
    pub fn laplacian(&self) -> Expr {
        add(
            self.differentiate(Var::X).differentiate(Var::X),
            self.differentiate(Var::Y).differentiate(Var::Y),
        )
    }
}

// Folding constructors used by differentiation and by callers composing
// expressions programmatically.

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        (Expr::Num(z), _) if *z == 0.0 => b,
        (_, Expr::Num(z)) if *z == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        (_, Expr::Num(z)) if *z == 0.0 => a,
        (Expr::Num(z), _) if *z == 0.0 => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        (Expr::Num(z), _) | (_, Expr::Num(z)) if *z == 0.0 => Expr::Num(0.0),
        (Expr::Num(o), _) if *o == 1.0 => b,
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(z), _) if *z == 0.0 => Expr::Num(0.0),
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn pow(a: Expr, n: i32) -> Expr {
    match (&a, n) {
        (_, 0) => Expr::Num(1.0),
        (_, 1) => a,
        (Expr::Num(v), _) => Expr::Num(v.powi(n)),
        _ => Expr::Pow(Box::new(a), n),
    }
}

/// Canonical fully parenthesised form. Re-parsing the output yields a tree
/// that evaluates identically.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "(-{})", fmt_literal(-*v))
                } else {
                    write!(f, "{}", fmt_literal(*v))
                }
            }
            Expr::Pi => write!(f, "pi"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a}+{b})"),
            Expr::Sub(a, b) => write!(f, "({a}-{b})"),
            Expr::Mul(a, b) => write!(f, "({a}*{b})"),
            Expr::Div(a, b) => write!(f, "({a}/{b})"),
            Expr::Pow(a, n) => write!(f, "({a}^{n})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

fn fmt_literal(v: f64) -> String {
    // `{:e}` prints the shortest digits that round-trip.
    if v == 0.0 || (1e-4..1e15).contains(&v) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// An expression shared between threads and between the configuration and
/// the solver.
pub type SharedExpr = Arc<Expr>;

// ---------------------------------------------------------------------------
// Lexer and recursive-descent parser

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier '{s}'"),
            TokenKind::Plus => "'+'".into(),
            TokenKind::Minus => "'-'".into(),
            TokenKind::Star => "'*'".into(),
            TokenKind::Slash => "'/'".into(),
            TokenKind::Caret => "'^'".into(),
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
    /// Raw text, kept for integer exponents.
    text: String,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = match c {
            b'+' => Some(TokenKind::Plus),
            b'-' => Some(TokenKind::Minus),
            b'*' => Some(TokenKind::Star),
            b'/' => Some(TokenKind::Slash),
            b'^' => Some(TokenKind::Caret),
            b'(' => Some(TokenKind::LParen),
            b')' => Some(TokenKind::RParen),
            _ => None,
        };
        if let Some(kind) = single {
            i += 1;
            out.push(Token {
                kind,
                offset: start,
                text: src[start..i].to_string(),
            });
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
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
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number '{text}'"),
            })?;
            out.push(Token {
                kind: TokenKind::Num(v),
                offset: start,
                text: text.to_string(),
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let text = &src[start..i];
            out.push(Token {
                kind: TokenKind::Ident(text.to_string()),
                offset: start,
                text: text.to_string(),
            });
            continue;
        }
        let ch = src[start..].chars().next().unwrap_or('?');
        return Err(ExprError::Syntax {
            offset: start,
            message: format!("unexpected character '{ch}'"),
        });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ExprError> {
        match self.peek_kind() {
            Some(k) if *k == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(k) => {
                let found = k.describe();
                self.error(format!("expected {}, found {found}", kind.describe()))
            }
            None => self.error(format!("expected {}, found end of input", kind.describe())),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek_kind() {
                Some(TokenKind::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(TokenKind::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek_kind() {
                Some(TokenKind::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(TokenKind::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(TokenKind::Minus) = self.peek_kind() {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(TokenKind::Caret) = self.peek_kind() {
            self.pos += 1;
            let n = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ExprError> {
        let negative = if let Some(TokenKind::Minus) = self.peek_kind() {
            self.pos += 1;
            true
        } else {
            false
        };
        let offset = self.offset();
        let tok = match self.bump() {
            Some(t) => t,
            None => return self.error("expected integer exponent, found end of input"),
        };
        let is_integer = matches!(tok.kind, TokenKind::Num(_)) && tok.text.bytes().all(|b| b.is_ascii_digit());
        if !is_integer {
            return Err(ExprError::Syntax {
                offset,
                message: format!("exponent must be an integer literal, found {}", tok.kind.describe()),
            });
        }
        let overflow = || ExprError::Syntax {
            offset,
            message: "exponent too large".into(),
        };
        let mut n: i64 = tok.text.parse().map_err(|_| overflow())?;
        if let Some(TokenKind::Caret) = self.peek_kind() {
            self.pos += 1;
            let rhs = self.exponent()?;
            if rhs < 0 {
                return Err(ExprError::Syntax {
                    offset,
                    message: "negative exponent inside an exponent tower".into(),
                });
            }
            n = n.checked_pow(rhs as u32).ok_or_else(overflow)?;
        }
        if negative {
            n = -n;
        }
        i32::try_from(n).map_err(|_| overflow())
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        let tok = match self.bump() {
            Some(t) => t,
            None => return self.error("unexpected end of input"),
        };
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => match name.as_str() {
                "pi" => Ok(Expr::Pi),
                "t" => Ok(Expr::Var(Var::T)),
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                "sin" | "cos" | "exp" => {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        _ => Func::Exp,
                    };
                    self.expect(TokenKind::LParen)?;
                    let arg = self.expr()?;
                    self.expect(TokenKind::RParen)?;
                    Ok(Expr::Call(func, Box::new(arg)))
                }
                _ => Err(ExprError::Syntax {
                    offset,
                    message: format!("unknown identifier '{name}'"),
                }),
            },
            other => Err(ExprError::Syntax {
                offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str) -> f64 {
        parse(s).unwrap().eval(0.3, 0.7, -0.2).unwrap()
    }

    #[test]
    fn literal_zero() {
        assert_eq!(parse("0").unwrap(), Expr::Num(0.0));
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("2+3"), 5.0);
        assert_eq!(ev("2+3*4"), 14.0);
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("-2^2"), -4.0);
        assert_eq!(ev("8/4/2"), 1.0);
        assert_eq!(ev("8-4-2"), 2.0);
        assert!((ev("sin(pi/2)") - 1.0).abs() < 1e-15);
    }

    #[test]
    fn growth_rate_tree_shape() {
        let e = parse("(1.5+sin(x)*sin(y))*(1.2+sin(t))").unwrap();
        let sx = Expr::Call(Func::Sin, Box::new(Expr::Var(Var::X)));
        let sy = Expr::Call(Func::Sin, Box::new(Expr::Var(Var::Y)));
        let st = Expr::Call(Func::Sin, Box::new(Expr::Var(Var::T)));
        let expected = Expr::Mul(
            Box::new(Expr::Add(
                Box::new(Expr::Num(1.5)),
                Box::new(Expr::Mul(Box::new(sx), Box::new(sy))),
            )),
            Box::new(Expr::Add(Box::new(Expr::Num(1.2)), Box::new(st))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn carrying_capacity_at_origin() {
        let k = parse("(2.1+cos(x)*cos(y))*(1.1+cos(t))").unwrap();
        assert!((k.eval(0.0, 0.0, 0.0).unwrap() - 6.51).abs() < 1e-13);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("sin(x") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        match parse("") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
        match parse("1 + foo") {
            Err(ExprError::Syntax { offset, message }) => {
                assert_eq!(offset, 4);
                assert!(message.contains("foo"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse("(1+2))").is_err());
        assert!(parse("x^y").is_err());
        assert!(parse("x^1.5").is_err());
        assert!(parse("1 $ 2").is_err());
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = parse("1/(x-x)").unwrap();
        assert_eq!(e.eval(0.0, 1.0, 0.0), Err(ExprError::DivisionByZero));
        let e = parse("x^-2").unwrap();
        assert_eq!(e.eval(0.0, 0.0, 0.0), Err(ExprError::DivisionByZero));
        assert_eq!(parse("x^-2").unwrap().eval(0.0, 2.0, 0.0).unwrap(), 0.25);
    }

    #[test]
    fn exponent_literals_and_scientific_numbers() {
        assert_eq!(ev("1e-3*1000"), 1.0);
        assert_eq!(ev("2.5E2"), 250.0);
        assert_eq!(ev("(x+1)^0"), 1.0);
    }

    #[test]
    fn derivatives_pointwise() {
        let d = parse("1.1+sin(t)").unwrap().differentiate(Var::T);
        for &t in &[0.0, 0.4, 2.0] {
            assert!((d.eval(t, 0.0, 0.0).unwrap() - t.cos()).abs() < 1e-15);
        }
        let d2 = parse("2.0+sin(y)").unwrap().differentiate(Var::Y).differentiate(Var::Y);
        for &y in &[0.0, 0.4, 2.0] {
            assert!((d2.eval(0.0, 0.0, y).unwrap() + y.sin()).abs() < 1e-15);
        }
        let dp = parse("(x^3)/(1+x^2)").unwrap().differentiate(Var::X);
        let x: f64 = 0.7;
        let exact = (3.0 * x * x * (1.0 + x * x) - x.powi(3) * 2.0 * x) / (1.0 + x * x).powi(2);
        assert!((dp.eval(0.0, x, 0.0).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn constants_are_detected() {
        assert_eq!(parse("2*pi").unwrap().as_constant(), Some(2.0 * PI));
        assert_eq!(parse("2*x").unwrap().as_constant(), None);
        assert!(parse("exp(t)").unwrap().depends_on(Var::T));
    }

    #[test]
    fn printer_round_trip_simple() {
        for s in ["-2^2", "2^3^2", "1e-7*x", "(1.5+sin(x)*sin(y))*(1.2+sin(t))", "x^-3+pi"] {
            let e = parse(s).unwrap();
            let back = parse(&e.to_string()).unwrap();
            assert_eq!(back.eval(0.3, 0.9, 0.4), e.eval(0.3, 0.9, 0.4), "{s}");
        }
    }
}
