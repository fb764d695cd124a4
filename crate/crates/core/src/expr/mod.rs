//! Symbolic expression trees.
//!
//! `Expr` is the lingua franca of this crate: Hamiltonians, constraints,
//! brackets and derivatives are all immutable expression trees. The design
//! is deliberately small — four differentiable built-in functions, no
//! algebraic simplification beyond constant folding — because correctness
//! is decided semantically (by evaluation and randomized zero-testing),
//! not syntactically.

mod bracket;
mod calculus;
mod compiled;
mod eval;
mod parse;
mod zero;

pub use bracket::{poisson_bracket, ConjugatePairs, PairsError};
pub use calculus::{differentiate, substitute, CalculusError};
pub use compiled::{CompileError, CompiledExpr};
pub use eval::{evaluate, evaluate_with_magnitude, Bindings, EvalError};
pub use parse::{parse, ParseError};
pub use zero::{is_zero, Interval, SampleDomain, ZeroError, ZeroVerdict};

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Built-in differentiable functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Sin => "sin",
            Builtin::Cos => "cos",
            Builtin::Exp => "exp",
            Builtin::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "sin" => Some(Builtin::Sin),
            "cos" => Some(Builtin::Cos),
            "exp" => Some(Builtin::Exp),
            "sqrt" => Some(Builtin::Sqrt),
            _ => None,
        }
    }
}

/// Immutable symbolic expression tree.
///
/// Subtrees are shared via `Arc`, so clones are cheap and values are safe
/// to hand to concurrent callers.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Symbol(String),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
    /// Function application: one of the four built-ins, or a user-defined
    /// name that must be eliminated by substitution before any calculus.
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn number(v: f64) -> Expr {
        Expr::Number(v)
    }

    pub fn symbol(name: impl Into<String>) -> Expr {
        Expr::Symbol(name.into())
    }

    /// All distinct symbol names appearing in the tree.
    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Number(_) => {}
            Expr::Symbol(s) => {
                out.insert(s.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
            Expr::Neg(a) => a.collect_symbols(out),
            Expr::Call(_, args) => {
                for a in args {
                    a.collect_symbols(out);
                }
            }
        }
    }

    /// True if the tree contains the given symbol.
    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Expr::Number(_) => false,
            Expr::Symbol(s) => s == name,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.mentions(name) || b.mentions(name)
            }
            Expr::Neg(a) => a.mentions(name),
            Expr::Call(_, args) => args.iter().any(|a| a.mentions(name)),
        }
    }

    /// Names of all `Call` nodes in the tree.
    pub fn call_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_calls(&mut out);
        out
    }

    fn collect_calls(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Number(_) | Expr::Symbol(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_calls(out);
                b.collect_calls(out);
            }
            Expr::Neg(a) => a.collect_calls(out),
            Expr::Call(name, args) => {
                out.insert(name.clone());
                for a in args {
                    a.collect_calls(out);
                }
            }
        }
    }

    fn literal(&self) -> Option<f64> {
        match self {
            Expr::Number(v) => Some(*v),
            _ => None,
        }
    }
}

// Smart constructors used when building derivatives and brackets. They fold
// literal-only subtrees and drop additive/multiplicative neutral elements so
// mechanically generated trees stay small. The parser does NOT use them: a
// parsed tree keeps the exact shape of its source text.

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a.literal(), b.literal()) {
        (Some(x), Some(y)) if (x + y).is_finite() => return Expr::Number(x + y),
        (Some(x), _) if x == 0.0 => return b,
        (_, Some(y)) if y == 0.0 => return a,
        _ => {}
    }
    Expr::Add(Arc::new(a), Arc::new(b))
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a.literal(), b.literal()) {
        (Some(x), Some(y)) if (x - y).is_finite() => return Expr::Number(x - y),
        (_, Some(y)) if y == 0.0 => return a,
        (Some(x), _) if x == 0.0 => return neg(b),
        _ => {}
    }
    Expr::Sub(Arc::new(a), Arc::new(b))
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a.literal(), b.literal()) {
        (Some(x), Some(y)) if (x * y).is_finite() => return Expr::Number(x * y),
        (Some(x), _) if x == 0.0 => return Expr::Number(0.0),
        (_, Some(y)) if y == 0.0 => return Expr::Number(0.0),
        (Some(x), _) if x == 1.0 => return b,
        (_, Some(y)) if y == 1.0 => return a,
        _ => {}
    }
    Expr::Mul(Arc::new(a), Arc::new(b))
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.literal(), b.literal()) {
        if y != 0.0 && (x / y).is_finite() {
            return Expr::Number(x / y);
        }
    }
    if a.literal() == Some(0.0) && b.literal() != Some(0.0) {
        return Expr::Number(0.0);
    }
    if b.literal() == Some(1.0) {
        return a;
    }
    Expr::Div(Arc::new(a), Arc::new(b))
}

pub(crate) fn pow(a: Expr, b: Expr) -> Expr {
    if let Some(y) = b.literal() {
        if y == 1.0 {
            return a;
        }
        if y == 0.0 {
            return Expr::Number(1.0);
        }
        if let Some(x) = a.literal() {
            let v = x.powf(y);
            if v.is_finite() {
                return Expr::Number(v);
            }
        }
    }
    Expr::Pow(Arc::new(a), Arc::new(b))
}

pub(crate) fn neg(a: Expr) -> Expr {
    if let Some(x) = a.literal() {
        return Expr::Number(-x);
    }
    Expr::Neg(Arc::new(a))
}

pub(crate) fn call(builtin: Builtin, arg: Expr) -> Expr {
    Expr::Call(builtin.name().to_string(), vec![arg])
}

// Precedence levels used by the printer: additive 1, multiplicative 2,
// unary minus 3, power 4. `^` is right-associative and binds tighter than
// unary minus, matching the parser.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl Expr {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        let prec = match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        };
        let parens = prec < parent;
        if parens {
            write!(f, "(")?;
        }
        match self {
            Expr::Number(v) => {
                if *v < 0.0 || v.is_sign_negative() {
                    // keep "-2" printable inside products: (-2)
                    if parent > 1 && !parens {
                        write!(f, "({})", v)?;
                    } else {
                        write!(f, "{}", v)?;
                    }
                } else {
                    write!(f, "{}", v)?;
                }
            }
            Expr::Symbol(s) => write!(f, "{}", s)?,
            Expr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.fmt_prec(f, 3)?;
            }
            Expr::Pow(a, b) => {
                // left operand of ^ is an atom in the grammar
                a.fmt_prec(f, 5)?;
                write!(f, "^")?;
                b.fmt_prec(f, 4)?;
            }
            Expr::Call(name, args) => {
                write!(f, "{}(", name)?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.fmt_prec(f, 0)?;
                }
                write!(f, ")")?;
            }
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}
