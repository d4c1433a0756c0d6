//! One-variable real expressions used for the drift and diffusion functions.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;          (* exponent: constant integer in [0, 6] *)
//! primary = number | "x" | func "(" expr ")" | "(" expr ")" ;
//! func    = "sin" | "cos" | "exp" | "abs" | "sqrt" | "tanh" ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ```
//!
//! Parsed expressions are compiled to a small postfix program; [`Expression::eval`]
//! runs that program. The tree is kept for printing and inspection.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest exponent accepted by `^`.
pub const MAX_EXPONENT: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("invalid exponent at byte {offset}: {reason}")]
    Exponent { offset: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative argument {0}")]
    NegativeSqrt(f64),
    #[error("non-finite result evaluating `{op}`")]
    NonFinite { op: &'static str },
    #[error("non-finite argument x = {0}")]
    NonFiniteInput(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    /// Applies the function, reporting domain errors instead of producing NaN.
    pub fn apply(self, v: f64) -> Result<f64, EvalError> {
        let out = match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Abs => v.abs(),
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(EvalError::NegativeSqrt(v));
                }
                v.sqrt()
            }
            Func::Tanh => v.tanh(),
        };
        finite(out, self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    /// Applies the operator with the same error rules as the evaluator.
    pub fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        let out = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a / b
            }
        };
        finite(out, "binary operator")
    }
}

/// Checked `base^exp` for the restricted integer exponents.
pub fn checked_pow(base: f64, exp: u8) -> Result<f64, EvalError> {
    finite(base.powi(i32::from(exp)), "^")
}

fn finite(v: f64, op: &'static str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite { op })
    }
}

/// Syntax tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, u8),
    Call(Func, Box<Node>),
}

impl Node {
    fn precedence(&self) -> u8 {
        match self {
            Node::Binary(op, _, _) => op.precedence(),
            Node::Neg(_) => 3,
            Node::Pow(_, _) => 4,
            Node::Num(_) | Node::Var | Node::Call(_, _) => 5,
        }
    }

    fn contains_var(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var => true,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.contains_var(),
            Node::Binary(_, a, b) => a.contains_var() || b.contains_var(),
        }
    }

    fn fold_constant(&self) -> Result<f64, EvalError> {
        match self {
            Node::Num(v) => Ok(*v),
            Node::Var => unreachable!("constant folding reached the variable"),
            Node::Neg(a) => Ok(-a.fold_constant()?),
            Node::Binary(op, a, b) => op.apply(a.fold_constant()?, b.fold_constant()?),
            Node::Pow(a, k) => checked_pow(a.fold_constant()?, *k),
            Node::Call(f, a) => f.apply(a.fold_constant()?),
        }
    }

    fn compile(&self, out: &mut Vec<Instr>) {
        match self {
            Node::Num(v) => out.push(Instr::Push(*v)),
            Node::Var => out.push(Instr::Load),
            Node::Neg(a) => {
                a.compile(out);
                out.push(Instr::Neg);
            }
            Node::Binary(op, a, b) => {
                a.compile(out);
                b.compile(out);
                out.push(Instr::Bin(*op));
            }
            Node::Pow(a, k) => {
                a.compile(out);
                out.push(Instr::Pow(*k));
            }
            Node::Call(f, a) => {
                a.compile(out);
                out.push(Instr::Call(*f));
            }
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v}"),
            Node::Var => f.write_str("x"),
            Node::Neg(a) => {
                if a.precedence() < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            Node::Binary(op, a, b) => {
                let p = op.precedence();
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                // Left-associative: an equal-precedence right child keeps its parens.
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Node::Pow(a, k) => {
                if a.precedence() < 5 {
                    write!(f, "({a})^{k}")
                } else {
                    write!(f, "{a}^{k}")
                }
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Push(f64),
    Load,
    Neg,
    Bin(BinOp),
    Pow(u8),
    Call(Func),
}

/// A parsed, immutable function of one real variable `x`.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    root: Node,
    program: Vec<Instr>,
    depth: usize,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let mut parser = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.expected("operator or end of input"));
        }
        Ok(Self::from_node(source.to_owned(), root))
    }

    /// Constant function.
    pub fn constant(v: f64) -> Self {
        Self::from_node(format!("{v}"), Node::Num(v))
    }

    fn from_node(source: String, root: Node) -> Self {
        let mut program = Vec::new();
        root.compile(&mut program);
        let depth = stack_depth(&program);
        Self {
            source,
            root,
            program,
            depth,
        }
    }

    /// The text the expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Node {
        &self.root
    }

    /// Canonical text form; re-parsing it yields the same tree.
    pub fn canonical(&self) -> String {
        self.root.to_string()
    }

    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        if !x.is_finite() {
            return Err(EvalError::NonFiniteInput(x));
        }
        let mut small = [0.0f64; 16];
        if self.depth <= small.len() {
            run(&self.program, x, &mut small)
        } else {
            let mut big = vec![0.0; self.depth];
            run(&self.program, x, &mut big)
        }
    }

    /// True when the expression does not depend on `x`.
    pub fn is_constant(&self) -> bool {
        !self.root.contains_var()
    }
}

impl FromStr for Expression {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expression::parse(s)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.root, f)
    }
}

impl serde::Serialize for Expression {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> serde::Deserialize<'de> for Expression {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expression::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn stack_depth(program: &[Instr]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for ins in program {
        match ins {
            Instr::Push(_) | Instr::Load => depth += 1,
            Instr::Bin(_) => depth -= 1,
            Instr::Neg | Instr::Pow(_) | Instr::Call(_) => {}
        }
        max = max.max(depth);
    }
    max
}

fn run(program: &[Instr], x: f64, stack: &mut [f64]) -> Result<f64, EvalError> {
    let mut sp = 0usize;
    for ins in program {
        match *ins {
            Instr::Push(v) => {
                stack[sp] = v;
                sp += 1;
            }
            Instr::Load => {
                stack[sp] = x;
                sp += 1;
            }
            Instr::Neg => stack[sp - 1] = -stack[sp - 1],
            Instr::Bin(op) => {
                sp -= 1;
                stack[sp - 1] = op.apply(stack[sp - 1], stack[sp])?;
            }
            Instr::Pow(k) => stack[sp - 1] = checked_pow(stack[sp - 1], k)?,
            Instr::Call(f) => stack[sp - 1] = f.apply(stack[sp - 1])?,
        }
    }
    debug_assert_eq!(sp, 1);
    Ok(stack[0])
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
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

    fn expected(&self, what: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            expected: what.to_owned(),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        self.skip_ws();
        let at = self.pos;
        // Right-associative: the exponent is itself a unary expression.
        let exponent = self.unary()?;
        let k = constant_exponent(&exponent)
            .map_err(|reason| ParseError::Exponent { offset: at, reason })?;
        Ok(Node::Pow(Box::new(base), k))
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.expected("`)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            _ => Err(self.expected("number, `x`, function call or `(`")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let int_digits = digits(self);
        let mut frac_digits = 0;
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            frac_digits = digits(self);
        }
        if int_digits + frac_digits == 0 {
            self.pos = start;
            return Err(self.expected("digit"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.expected("exponent digits"));
            }
        }
        // The scanned slice is ASCII digits, '.', 'e', and signs only.
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Node::Num(v)),
            _ => {
                self.pos = start;
                Err(self.expected("finite number literal"))
            }
        }
    }

    fn identifier(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if name == "x" {
            return Ok(Node::Var);
        }
        let Some(func) = Func::from_name(name) else {
            return Err(ParseError::UnknownIdentifier {
                offset: start,
                name: name.to_owned(),
            });
        };
        if !self.eat(b'(') {
            return Err(self.expected("`(` after function name"));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(self.expected("`)`"));
        }
        Ok(Node::Call(func, Box::new(arg)))
    }
}

fn constant_exponent(node: &Node) -> Result<u8, String> {
    if node.contains_var() {
        return Err("exponent must not depend on x".into());
    }
    let v = node
        .fold_constant()
        .map_err(|e| format!("exponent does not evaluate: {e}"))?;
    if v.fract() != 0.0 || !(0.0..=f64::from(MAX_EXPONENT)).contains(&v) {
        return Err(format!(
            "exponent {v} is not an integer in [0, {MAX_EXPONENT}]"
        ));
    }
    Ok(v as u8)
}

/// Lower bound on the Lipschitz constant of `e` over `[lo, hi]`: the largest
/// adjacent-pair slope on a uniform grid of `n_samples` points.
pub fn estimate_lipschitz(
    e: &Expression,
    lo: f64,
    hi: f64,
    n_samples: usize,
) -> Result<f64, EvalError> {
    assert!(lo < hi, "estimate_lipschitz needs lo < hi");
    assert!(
        n_samples >= 2,
        "estimate_lipschitz needs at least two samples"
    );
    let step = (hi - lo) / (n_samples - 1) as f64;
    let at = |k: usize| {
        if k == n_samples - 1 {
            hi
        } else {
            lo + k as f64 * step
        }
    };
    let mut prev_x = lo;
    let mut prev_y = e.eval(lo)?;
    let mut best = 0.0f64;
    for k in 1..n_samples {
        let x = at(k);
        let y = e.eval(x)?;
        let slope = ((y - prev_y) / (x - prev_x)).abs();
        if slope > best {
            best = slope;
        }
        prev_x = x;
        prev_y = y;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64) -> f64 {
        Expression::parse(src).unwrap().eval(x).unwrap()
    }

    #[test]
    fn variable_and_precedence() {
        assert_eq!(Expression::parse("x").unwrap().ast(), &Node::Var);
        assert_eq!(ev("x", 3.0), 3.0);
        assert_eq!(ev("1+2*x", 3.0), 7.0);
        assert_eq!(ev("sin(x)+x^2", 0.0), 0.0);
        assert_eq!(ev("2^3^0", 0.0), 2.0);
        assert_eq!(ev("-x^2", 3.0), -9.0);
        assert_eq!(ev("(-x)^2", 3.0), 9.0);
        assert_eq!(ev("8/4/2", 0.0), 1.0);
        assert_eq!(ev("8-4-2", 0.0), 2.0);
        assert_eq!(ev("  1 +\t2 * x ", 1.0), 3.0);
        assert_eq!(ev("1.5e1", 0.0), 15.0);
        assert_eq!(ev(".5", 0.0), 0.5);
        assert_eq!(ev("x^(1+1)", 4.0), 16.0);
    }

    #[test]
    fn functions() {
        assert!((ev("exp(x)", 1.0) - std::f64::consts::E).abs() < 1e-12);
        assert_eq!(ev("abs(x)", -2.0), 2.0);
        assert_eq!(ev("sqrt(x)", 9.0), 3.0);
        assert_eq!(ev("tanh(0)", 0.0), 0.0);
        assert_eq!(ev("cos(0)", 5.0), 1.0);
    }

    #[test]
    fn eval_errors() {
        let e = Expression::parse("1/x").unwrap();
        assert_eq!(e.eval(0.0), Err(EvalError::DivisionByZero));
        let e = Expression::parse("sqrt(x)").unwrap();
        assert!(matches!(e.eval(-1.0), Err(EvalError::NegativeSqrt(_))));
        let e = Expression::parse("exp(x)").unwrap();
        assert!(matches!(e.eval(1000.0), Err(EvalError::NonFinite { .. })));
        assert!(matches!(
            e.eval(f64::NAN),
            Err(EvalError::NonFiniteInput(_))
        ));
    }

    #[test]
    fn parse_errors() {
        match Expression::parse("1 + y") {
            Err(ParseError::UnknownIdentifier { offset, name }) => {
                assert_eq!(offset, 4);
                assert_eq!(name, "y");
            }
            other => panic!("{other:?}"),
        }
        match Expression::parse("1 + * 2") {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Expression::parse("(1 + x"),
            Err(ParseError::Syntax { offset: 6, .. })
        ));
        assert!(matches!(
            Expression::parse("x x"),
            Err(ParseError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            Expression::parse("log(x)"),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expression::parse("x^7"),
            Err(ParseError::Exponent { .. })
        ));
        assert!(matches!(
            Expression::parse("x^x"),
            Err(ParseError::Exponent { .. })
        ));
        assert!(matches!(
            Expression::parse("x^1.5"),
            Err(ParseError::Exponent { .. })
        ));
        assert!(matches!(
            Expression::parse("x^-1"),
            Err(ParseError::Exponent { .. })
        ));
        assert!(Expression::parse("1e999").is_err());
        assert!(Expression::parse("").is_err());
        assert!(Expression::parse("0x10").is_err());
        assert!(Expression::parse("1e").is_err());
    }

    #[test]
    fn canonical_form_reparses() {
        for src in [
            "1-(2-3)",
            "-(x+1)",
            "--x",
            "x/(2*x)",
            "(x+1)^2",
            "-x^2",
            "sin(cos(x)^3)/abs(x-2)",
            "2*(3*x)",
            "1e-300*x",
            "123456789012345680000*x",
        ] {
            let e = Expression::parse(src).unwrap();
            let printed = e.canonical();
            let again = Expression::parse(&printed).unwrap();
            assert_eq!(e.ast(), again.ast(), "{src} -> {printed}");
            assert_eq!(printed, again.canonical());
        }
        assert_eq!(Expression::parse("1+2*x").unwrap().canonical(), "1 + 2 * x");
    }

    #[test]
    fn lipschitz_examples() {
        let e = Expression::parse("2*x").unwrap();
        assert!((estimate_lipschitz(&e, -3.0, 7.0, 101).unwrap() - 2.0).abs() < 1e-9);
        let e = Expression::parse("sin(x)").unwrap();
        assert!((estimate_lipschitz(&e, -10.0, 10.0, 100_000).unwrap() - 1.0).abs() < 1e-3);
        let e = Expression::parse("x^2").unwrap();
        assert!((estimate_lipschitz(&e, 0.0, 1.0, 100_000).unwrap() - 2.0).abs() < 1e-3);
        let e = Expression::parse("1/x").unwrap();
        assert!(estimate_lipschitz(&e, -1.0, 1.0, 3).is_err());
    }

    #[test]
    fn lipschitz_monotone_in_samples_for_convex_slopes() {
        for src in ["x^2", "exp(x)"] {
            let e = Expression::parse(src).unwrap();
            let mut last = 0.0;
            for n in [2, 3, 5, 10, 33, 100, 1000, 10_000, 100_000] {
                let l = estimate_lipschitz(&e, 0.0, 1.0, n).unwrap();
                assert!(l >= last, "{src}: n={n} gave {l} < {last}");
                last = l;
            }
        }
    }
}
