//! Closed-form expression DSL for drift and noise coefficients.
//!
//! Scenarios carry their dynamics as text expressions over the time variable
//! `t`, state coordinates `x<i>_<j>` (coordinate `j` of subsystem `i`, both
//! 1-based) and control coordinates `u<i>_<j>`. The grammar supports
//! `+ - * / ^`, unary minus and the functions `sin cos exp tanh sqrt abs`
//! (unary) and `min max` (binary).
//!
//! Precedence: `^` binds tightest, then unary minus, then `* /`, then `+ -`.
//! Binary operators are left-associative except `^`, which is
//! right-associative. `print` emits minimal parentheses and round-trips:
//! `parse(print(e))` is structurally equal to `e`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{EvalError, EvalErrorKind, ParseError};

/// A variable reference. Indices are zero-based internally; the surface
/// syntax (`x1_1`) is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarRef {
    Time,
    State { sub: usize, coord: usize },
    Control { sub: usize, coord: usize },
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRef::Time => write!(f, "t"),
            VarRef::State { sub, coord } => write!(f, "x{}_{}", sub + 1, coord + 1),
            VarRef::Control { sub, coord } => write!(f, "u{}_{}", sub + 1, coord + 1),
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func1 {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func2 {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    Var(VarRef),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call1(Func1, Box<Expr>),
    Call2(Func2, Box<Expr>, Box<Expr>),
}

/// Value source for evaluation. Returning `None` means the variable is
/// unbound in this environment.
pub trait VarSource {
    fn lookup(&self, var: VarRef) -> Option<f64>;
}

/// Flat state/control layout used by the integrator hot loop.
pub struct Env<'a> {
    pub t: f64,
    pub states: &'a [f64],
    pub state_offsets: &'a [usize],
    pub controls: &'a [f64],
    pub control_offsets: &'a [usize],
}

impl VarSource for Env<'_> {
    #[inline]
    fn lookup(&self, var: VarRef) -> Option<f64> {
        match var {
            VarRef::Time => Some(self.t),
            VarRef::State { sub, coord } => {
                let lo = *self.state_offsets.get(sub)?;
                let hi = *self.state_offsets.get(sub + 1)?;
                let idx = lo + coord;
                if idx < hi {
                    Some(self.states[idx])
                } else {
                    None
                }
            }
            VarRef::Control { sub, coord } => {
                let lo = *self.control_offsets.get(sub)?;
                let hi = *self.control_offsets.get(sub + 1)?;
                let idx = lo + coord;
                if idx < hi {
                    Some(self.controls[idx])
                } else {
                    None
                }
            }
        }
    }
}

impl VarSource for BTreeMap<String, f64> {
    fn lookup(&self, var: VarRef) -> Option<f64> {
        self.get(&var.to_string()).copied()
    }
}

impl Expr {
    pub fn lit(v: f64) -> Self {
        Expr::Lit(v)
    }

    pub fn var(v: VarRef) -> Self {
        Expr::Var(v)
    }

    /// Evaluate against a variable source. NaN or infinite intermediate
    /// results are reported as errors rather than propagated.
    pub fn eval<S: VarSource>(&self, src: &S) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Lit(v) => *v,
            Expr::Var(var) => src
                .lookup(*var)
                .ok_or_else(|| self.err(EvalErrorKind::UnboundVariable))?,
            Expr::Neg(e) => -e.eval(src)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval(src)?;
                let y = b.eval(src)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(self.err(EvalErrorKind::DivisionByZero));
                        }
                        x / y
                    }
                    BinOp::Pow => x.powf(y),
                }
            }
            Expr::Call1(f, e) => {
                let x = e.eval(src)?;
                match f {
                    Func1::Sin => x.sin(),
                    Func1::Cos => x.cos(),
                    Func1::Exp => x.exp(),
                    Func1::Tanh => x.tanh(),
                    Func1::Sqrt => {
                        if x < 0.0 {
                            return Err(self.err(EvalErrorKind::Domain));
                        }
                        x.sqrt()
                    }
                    Func1::Abs => x.abs(),
                }
            }
            Expr::Call2(f, a, b) => {
                let x = a.eval(src)?;
                let y = b.eval(src)?;
                match f {
                    Func2::Min => x.min(y),
                    Func2::Max => x.max(y),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(EvalErrorKind::NonFinite))
        }
    }

    fn err(&self, kind: EvalErrorKind) -> EvalError {
        EvalError {
            kind,
            subexpr: self.to_string(),
        }
    }

    /// Visit every variable referenced by the expression.
    pub fn visit_vars<F: FnMut(VarRef)>(&self, f: &mut F) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(e) | Expr::Call1(_, e) => e.visit_vars(f),
            Expr::Bin(_, a, b) | Expr::Call2(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    /// Sorted, deduplicated set of referenced variables.
    pub fn variables(&self) -> Vec<VarRef> {
        let mut vars = Vec::new();
        self.visit_vars(&mut |v| vars.push(v));
        vars.sort();
        vars.dedup();
        vars
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 10,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 20,
            Expr::Neg(_) => 30,
            Expr::Bin(BinOp::Pow, ..) => 40,
            _ => 100,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "(")?;
                write!(f, "{e}")?;
                write!(f, ")")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                child(f, e, e.precedence() < 30)
            }
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    // right-associative: parenthesize left on ties
                    child(f, a, a.precedence() <= p)?;
                    write!(f, "{sym}")?;
                    child(f, b, b.precedence() < p)
                } else {
                    // left-associative: parenthesize right on ties
                    child(f, a, a.precedence() < p)?;
                    write!(f, "{sym}")?;
                    child(f, b, b.precedence() <= p)
                }
            }
            Expr::Call1(func, e) => {
                let name = match func {
                    Func1::Sin => "sin",
                    Func1::Cos => "cos",
                    Func1::Exp => "exp",
                    Func1::Tanh => "tanh",
                    Func1::Sqrt => "sqrt",
                    Func1::Abs => "abs",
                };
                write!(f, "{name}({e})")
            }
            Expr::Call2(func, a, b) => {
                let name = match func {
                    Func2::Min => "min",
                    Func2::Max => "max",
                };
                write!(f, "{name}({a}, {b})")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next_token(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'0'..=b'9' => {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if self.pos < self.src.len() && self.src[self.pos] == b'.' {
                    self.pos += 1;
                    while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
                if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
                    let mark = self.pos;
                    self.pos += 1;
                    if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                        self.pos += 1;
                    }
                    if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    } else {
                        // not an exponent after all (e.g. `2e` would be `2 * e`?
                        // no such symbol; treat as malformed number)
                        self.pos = mark;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = text.parse().map_err(|_| ParseError {
                    position: start,
                    message: format!("malformed number `{text}`"),
                })?;
                Tok::Num(v)
            }
            c if c.is_ascii_alphabetic() => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Tok::Ident(text.to_string())
            }
            other => {
                return Err(ParseError {
                    position: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((start, tok)))
    }
}

// ---------------------------------------------------------------------------
// Parser (Pratt, hand-rolled)
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

/// Parse an expression from text.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let mut lexer = Lexer::new(text);
    let mut toks = Vec::new();
    while let Some(t) = lexer.next_token()? {
        toks.push(t);
    }
    let mut p = Parser {
        toks,
        idx: 0,
        end: text.len(),
    };
    let e = p.parse_bp(0)?;
    if let Some((pos, _)) = p.peek() {
        return Err(ParseError {
            position: pos,
            message: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

impl Parser {
    fn peek(&self) -> Option<(usize, Tok)> {
        self.toks.get(self.idx).cloned()
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ParseError> {
        match self.bump() {
            Some((_, ref t)) if t == want => Ok(()),
            Some((pos, _)) => Err(ParseError {
                position: pos,
                message: format!("expected {what}"),
            }),
            None => Err(ParseError {
                position: self.end,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn parse_bp(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let (op, lbp, rbp) = match self.peek() {
                Some((_, Tok::Plus)) => (BinOp::Add, 10, 11),
                Some((_, Tok::Minus)) => (BinOp::Sub, 10, 11),
                Some((_, Tok::Star)) => (BinOp::Mul, 20, 21),
                Some((_, Tok::Slash)) => (BinOp::Div, 20, 21),
                Some((_, Tok::Caret)) => (BinOp::Pow, 41, 40),
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.parse_bp(rbp)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Expr, ParseError> {
        match self.bump() {
            Some((_, Tok::Num(v))) => Ok(Expr::Lit(v)),
            Some((_, Tok::Minus)) => {
                // unary minus binds tighter than `* /`, looser than `^`
                let operand = self.parse_bp(30)?;
                Ok(Expr::Neg(Box::new(operand)))
            }
            Some((_, Tok::LParen)) => {
                let e = self.parse_bp(0)?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some((pos, Tok::Ident(name))) => self.parse_ident(pos, name),
            Some((pos, _)) => Err(ParseError {
                position: pos,
                message: "expected literal, variable, function or `(`".into(),
            }),
            None => Err(ParseError {
                position: self.end,
                message: "unexpected end of input".into(),
            }),
        }
    }

    fn parse_ident(&mut self, pos: usize, name: String) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some((_, Tok::LParen))) {
            let func1 = match name.as_str() {
                "sin" => Some(Func1::Sin),
                "cos" => Some(Func1::Cos),
                "exp" => Some(Func1::Exp),
                "tanh" => Some(Func1::Tanh),
                "sqrt" => Some(Func1::Sqrt),
                "abs" => Some(Func1::Abs),
                _ => None,
            };
            let func2 = match name.as_str() {
                "min" => Some(Func2::Min),
                "max" => Some(Func2::Max),
                _ => None,
            };
            if func1.is_none() && func2.is_none() {
                return Err(ParseError {
                    position: pos,
                    message: format!("unknown function `{name}`"),
                });
            }
            self.bump(); // '('
            let a = self.parse_bp(0)?;
            if let Some(f) = func1 {
                self.expect(&Tok::RParen, "`)`")?;
                return Ok(Expr::Call1(f, Box::new(a)));
            }
            self.expect(&Tok::Comma, "`,`")?;
            let b = self.parse_bp(0)?;
            self.expect(&Tok::RParen, "`)`")?;
            Ok(Expr::Call2(func2.unwrap(), Box::new(a), Box::new(b)))
        } else {
            parse_var(&name)
                .map(Expr::Var)
                .ok_or_else(|| ParseError {
                    position: pos,
                    message: format!(
                        "unknown variable pattern `{name}` (expected `t`, `x<i>_<j>` or `u<i>_<j>`)"
                    ),
                })
        }
    }
}

/// Recognize `t`, `x<i>_<j>` and `u<i>_<j>` (1-based indices).
fn parse_var(name: &str) -> Option<VarRef> {
    if name == "t" {
        return Some(VarRef::Time);
    }
    let (kind, rest) = name.split_at(1);
    let (sub, coord) = rest.split_once('_')?;
    let sub: usize = sub.parse().ok()?;
    let coord: usize = coord.parse().ok()?;
    if sub == 0 || coord == 0 {
        return None;
    }
    match kind {
        "x" => Some(VarRef::State {
            sub: sub - 1,
            coord: coord - 1,
        }),
        "u" => Some(VarRef::Control {
            sub: sub - 1,
            coord: coord - 1,
        }),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Affine analysis (used by the hypoellipticity rank diagnostic)
// ---------------------------------------------------------------------------

/// `constant + Σ coeff · var` decomposition of an expression, when it is
/// affine with constant coefficients. Time may appear only additively.
#[derive(Debug, Clone, Default)]
pub struct AffineForm {
    pub constant: f64,
    pub coeffs: BTreeMap<VarRef, f64>,
}

impl AffineForm {
    fn constant_only(&self) -> Option<f64> {
        if self.coeffs.is_empty() {
            Some(self.constant)
        } else {
            None
        }
    }

    fn scale(mut self, s: f64) -> Self {
        self.constant *= s;
        for v in self.coeffs.values_mut() {
            *v *= s;
        }
        self
    }

    fn add(mut self, other: AffineForm, sign: f64) -> Self {
        self.constant += sign * other.constant;
        for (k, v) in other.coeffs {
            *self.coeffs.entry(k).or_insert(0.0) += sign * v;
        }
        self
    }
}

/// Decompose into an affine form, or `None` if the expression is not affine
/// in its variables with constant coefficients.
pub fn affine_form(e: &Expr) -> Option<AffineForm> {
    let form = affine_rec(e)?;
    if form.constant.is_finite() && form.coeffs.values().all(|c| c.is_finite()) {
        Some(form)
    } else {
        None
    }
}

fn affine_rec(e: &Expr) -> Option<AffineForm> {
    match e {
        Expr::Lit(v) => Some(AffineForm {
            constant: *v,
            coeffs: BTreeMap::new(),
        }),
        Expr::Var(v) => {
            let mut coeffs = BTreeMap::new();
            coeffs.insert(*v, 1.0);
            Some(AffineForm {
                constant: 0.0,
                coeffs,
            })
        }
        Expr::Neg(inner) => Some(affine_rec(inner)?.scale(-1.0)),
        Expr::Bin(BinOp::Add, a, b) => Some(affine_rec(a)?.add(affine_rec(b)?, 1.0)),
        Expr::Bin(BinOp::Sub, a, b) => Some(affine_rec(a)?.add(affine_rec(b)?, -1.0)),
        Expr::Bin(BinOp::Mul, a, b) => {
            let fa = affine_rec(a)?;
            let fb = affine_rec(b)?;
            if let Some(c) = fa.constant_only() {
                Some(fb.scale(c))
            } else {
                fb.constant_only().map(|c| fa.scale(c))
            }
        }
        Expr::Bin(BinOp::Div, a, b) => {
            let fb = affine_rec(b)?;
            let den = fb.constant_only()?;
            if den == 0.0 {
                return None;
            }
            Some(affine_rec(a)?.scale(1.0 / den))
        }
        Expr::Bin(BinOp::Pow, a, b) => {
            let fb = affine_rec(b)?;
            let exp = fb.constant_only()?;
            let fa = affine_rec(a)?;
            if let Some(base) = fa.constant_only() {
                return Some(AffineForm {
                    constant: base.powf(exp),
                    coeffs: BTreeMap::new(),
                });
            }
            if exp == 1.0 {
                Some(fa)
            } else {
                None
            }
        }
        Expr::Call1(..) | Expr::Call2(..) => {
            // constant-fold if variable-free
            if e.variables().is_empty() {
                let v = e.eval(&BTreeMap::new()).ok()?;
                Some(AffineForm {
                    constant: v,
                    coeffs: BTreeMap::new(),
                })
            } else {
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(sub: usize, coord: usize) -> Expr {
        Expr::Var(VarRef::State { sub, coord })
    }

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn single_token_negation() {
        let e = parse_expr("-x1_1").unwrap();
        assert_eq!(e, Expr::Neg(Box::new(x(0, 0))));
    }

    #[test]
    fn precedence_mul_over_add() {
        let e = parse_expr("x1_1 + 2*u2_1").unwrap();
        assert_eq!(
            e,
            Expr::Bin(
                BinOp::Add,
                Box::new(x(0, 0)),
                Box::new(Expr::Bin(
                    BinOp::Mul,
                    Box::new(Expr::Lit(2.0)),
                    Box::new(Expr::Var(VarRef::Control { sub: 1, coord: 0 })),
                )),
            )
        );
    }

    #[test]
    fn trig_identity() {
        let e = parse_expr("sin(t)^2 + cos(t)^2").unwrap();
        let v = e.eval(&map(&[("t", 0.7)])).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pow_binds_tighter_than_unary_minus() {
        // -2^2 = -(2^2) = -4
        let e = parse_expr("-2^2").unwrap();
        assert_eq!(e.eval(&map(&[])).unwrap(), -4.0);
        // 2^-3 parses with unary minus in the exponent
        let e = parse_expr("2^-3").unwrap();
        assert_eq!(e.eval(&map(&[])).unwrap(), 0.125);
    }

    #[test]
    fn pow_right_associative() {
        let e = parse_expr("2^3^2").unwrap();
        assert_eq!(e.eval(&map(&[])).unwrap(), 512.0);
    }

    #[test]
    fn left_associative_sub() {
        let e = parse_expr("1 - 2 - 3").unwrap();
        assert_eq!(e.eval(&map(&[])).unwrap(), -4.0);
    }

    #[test]
    fn eval_examples() {
        let e = parse_expr("x1_1 * u1_1").unwrap();
        let v = e.eval(&map(&[("x1_1", 3.0), ("u1_1", -2.0)])).unwrap();
        assert_eq!(v, -6.0);
        assert_eq!(parse_expr("exp(0)").unwrap().eval(&map(&[])).unwrap(), 1.0);
    }

    #[test]
    fn division_by_zero_reports_subexpr() {
        let e = parse_expr("1/x1_1").unwrap();
        let err = e.eval(&map(&[("x1_1", 0.0)])).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::DivisionByZero);
        assert_eq!(err.subexpr, "1/x1_1");
    }

    #[test]
    fn sqrt_negative_is_domain_error() {
        let e = parse_expr("sqrt(x1_1)").unwrap();
        let err = e.eval(&map(&[("x1_1", -1.0)])).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::Domain);
    }

    #[test]
    fn unbound_variable() {
        let e = parse_expr("x2_1").unwrap();
        let err = e.eval(&map(&[("x1_1", 0.0)])).unwrap_err();
        assert_eq!(err.kind, EvalErrorKind::UnboundVariable);
    }

    #[test]
    fn unknown_function_and_variable() {
        let err = parse_expr("log(t)").unwrap_err();
        assert!(err.message.contains("unknown function"));
        let err = parse_expr("x1 + 1").unwrap_err();
        assert!(err.message.contains("unknown variable pattern"));
        let err = parse_expr("x0_1").unwrap_err();
        assert!(err.message.contains("unknown variable pattern"));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_expr("1 + ").unwrap_err();
        assert_eq!(err.position, 4);
        let err = parse_expr("(1 + 2").unwrap_err();
        assert!(err.message.contains("expected"));
    }

    #[test]
    fn print_round_trip_structural() {
        for s in [
            "-x1_1",
            "x1_1 + 2*u2_1",
            "sin(t)^2 + cos(t)^2",
            "1 - (2 - 3)",
            "2^3^2",
            "-(x1_1 + 1)*t",
            "min(x1_1, max(t, 1))",
            "1/(x1_1/2)",
            "(x1_1 + 1)^(t + 2)",
            "--x1_1",
        ] {
            let a = parse_expr(s).unwrap();
            let b = parse_expr(&a.to_string()).unwrap();
            assert_eq!(a, b, "round trip failed for `{s}` printed as `{a}`");
        }
    }

    #[test]
    fn affine_decomposition() {
        let e = parse_expr("2*x1_1 - x2_1/4 + 3 + u1_1").unwrap();
        let f = affine_form(&e).unwrap();
        assert_eq!(f.constant, 3.0);
        assert_eq!(f.coeffs[&VarRef::State { sub: 0, coord: 0 }], 2.0);
        assert_eq!(f.coeffs[&VarRef::State { sub: 1, coord: 0 }], -0.25);
        assert_eq!(f.coeffs[&VarRef::Control { sub: 0, coord: 0 }], 1.0);
        assert!(affine_form(&parse_expr("x1_1*x1_1").unwrap()).is_none());
        assert!(affine_form(&parse_expr("sin(x1_1)").unwrap()).is_none());
        // constant folding keeps affine status
        assert!(affine_form(&parse_expr("sin(1) + 2*x1_1").unwrap()).is_some());
    }
}
