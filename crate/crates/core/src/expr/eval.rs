//! Numerical evaluation of expression trees.

use super::{Builtin, Expr};
use std::collections::BTreeMap;
use thiserror::Error;

/// Symbol-to-value map for evaluation. Values are dimensionless reals;
/// units are the caller's convention.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings(pub BTreeMap<String, f64>);

impl Bindings {
    pub fn new() -> Self {
        Bindings(BTreeMap::new())
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        Bindings(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("missing binding for symbol '{0}'")]
    MissingBinding(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    NegativeSqrt(f64),
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("function '{name}' expects 1 argument, got {got}")]
    WrongArity { name: String, got: usize },
    #[error("non-finite result in '{0}'")]
    NonFinite(String),
}

/// Evaluate to an IEEE double. Every free symbol must be bound.
pub fn evaluate(e: &Expr, b: &Bindings) -> Result<f64, EvalError> {
    let mut scale = 0.0;
    eval_inner(e, b, &mut scale)
}

/// Evaluate and also report a magnitude scale: the largest absolute value
/// attained by any subexpression. Zero-testing compares against
/// `tol * (1 + scale)` so that cancellations among large terms are judged
/// relative to the terms that cancelled.
pub fn evaluate_with_magnitude(e: &Expr, b: &Bindings) -> Result<(f64, f64), EvalError> {
    let mut scale = 0.0_f64;
    let v = eval_inner(e, b, &mut scale)?;
    Ok((v, scale))
}

fn eval_inner(e: &Expr, b: &Bindings, scale: &mut f64) -> Result<f64, EvalError> {
    let v = match e {
        Expr::Number(v) => *v,
        Expr::Symbol(s) => b
            .get(s)
            .ok_or_else(|| EvalError::MissingBinding(s.clone()))?,
        Expr::Add(x, y) => eval_inner(x, b, scale)? + eval_inner(y, b, scale)?,
        Expr::Sub(x, y) => eval_inner(x, b, scale)? - eval_inner(y, b, scale)?,
        Expr::Mul(x, y) => eval_inner(x, b, scale)? * eval_inner(y, b, scale)?,
        Expr::Div(x, y) => {
            let num = eval_inner(x, b, scale)?;
            let den = eval_inner(y, b, scale)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            num / den
        }
        Expr::Pow(x, y) => {
            let base = eval_inner(x, b, scale)?;
            let exp = eval_inner(y, b, scale)?;
            let v = base.powf(exp);
            if !v.is_finite() {
                return Err(EvalError::NonFinite(format!("{}^{}", base, exp)));
            }
            v
        }
        Expr::Neg(x) => -eval_inner(x, b, scale)?,
        Expr::Call(name, args) => {
            let builtin =
                Builtin::from_name(name).ok_or_else(|| EvalError::UnknownFunction(name.clone()))?;
            if args.len() != 1 {
                return Err(EvalError::WrongArity {
                    name: name.clone(),
                    got: args.len(),
                });
            }
            let arg = eval_inner(&args[0], b, scale)?;
            match builtin {
                Builtin::Sin => arg.sin(),
                Builtin::Cos => arg.cos(),
                Builtin::Exp => {
                    let v = arg.exp();
                    if !v.is_finite() {
                        return Err(EvalError::NonFinite(format!("exp({})", arg)));
                    }
                    v
                }
                Builtin::Sqrt => {
                    if arg < 0.0 {
                        return Err(EvalError::NegativeSqrt(arg));
                    }
                    arg.sqrt()
                }
            }
        }
    };
    if v.abs() > *scale {
        *scale = v.abs();
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn basic_arithmetic() {
        let e = parse("sqrt(4)").unwrap();
        assert_eq!(evaluate(&e, &Bindings::new()).unwrap(), 2.0);

        let e = parse("1/(2*p)").unwrap();
        let b = Bindings::from_pairs(&[("p", -1.0)]);
        assert_eq!(evaluate(&e, &b).unwrap(), -0.5);

        let e = parse("((0.3)^2 + 1)/(2*1)").unwrap();
        assert!((evaluate(&e, &Bindings::new()).unwrap() - 0.545).abs() < 1e-15);
    }

    #[test]
    fn missing_binding_names_symbol() {
        let e = parse("x + y_long").unwrap();
        let b = Bindings::from_pairs(&[("x", 1.0)]);
        match evaluate(&e, &b) {
            Err(EvalError::MissingBinding(s)) => assert_eq!(s, "y_long"),
            other => panic!("expected missing binding, got {:?}", other),
        }
    }

    #[test]
    fn division_by_zero_detected() {
        let e = parse("1/x").unwrap();
        let b = Bindings::from_pairs(&[("x", 0.0)]);
        assert_eq!(evaluate(&e, &b), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn negative_sqrt_detected() {
        let e = parse("sqrt(x)").unwrap();
        let b = Bindings::from_pairs(&[("x", -4.0)]);
        assert!(matches!(evaluate(&e, &b), Err(EvalError::NegativeSqrt(_))));
    }

    #[test]
    fn magnitude_scale_sees_cancelling_terms() {
        // 1e6 - 1e6 evaluates to 0 but the scale remembers the large terms
        let e = parse("1000000*x - 1000000*x").unwrap();
        let b = Bindings::from_pairs(&[("x", 1.0)]);
        let (v, scale) = evaluate_with_magnitude(&e, &b).unwrap();
        assert_eq!(v, 0.0);
        assert!(scale >= 1e6);
    }
}
