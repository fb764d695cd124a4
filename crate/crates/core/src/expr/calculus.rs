//! Symbolic differentiation and definition substitution.

use super::{add, call, div, mul, neg, pow, sub, Builtin, Expr};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalculusError {
    #[error("cannot differentiate unknown function '{0}'; substitute definitions first")]
    UnsupportedFunction(String),
    #[error("cyclic definition involving '{0}' (expansion did not terminate)")]
    CyclicDefinition(String),
}

/// Partial derivative with respect to `var`. All other symbols are treated
/// as constants. Only the four built-in functions are differentiable; any
/// other `Call` must have been eliminated by [`substitute`] first.
pub fn differentiate(e: &Expr, var: &str) -> Result<Expr, CalculusError> {
    Ok(match e {
        Expr::Number(_) => Expr::Number(0.0),
        Expr::Symbol(s) => {
            if s == var {
                Expr::Number(1.0)
            } else {
                Expr::Number(0.0)
            }
        }
        Expr::Add(a, b) => add(differentiate(a, var)?, differentiate(b, var)?),
        Expr::Sub(a, b) => sub(differentiate(a, var)?, differentiate(b, var)?),
        Expr::Mul(a, b) => {
            let da = differentiate(a, var)?;
            let db = differentiate(b, var)?;
            add(
                mul(da, b.as_ref().clone()),
                mul(a.as_ref().clone(), db),
            )
        }
        Expr::Div(a, b) => {
            // (a/b)' = a'/b - a b'/b^2
            let da = differentiate(a, var)?;
            let db = differentiate(b, var)?;
            sub(
                div(da, b.as_ref().clone()),
                div(
                    mul(a.as_ref().clone(), db),
                    pow(b.as_ref().clone(), Expr::Number(2.0)),
                ),
            )
        }
        Expr::Pow(base, exponent) => {
            if !exponent.mentions(var) {
                // d(u^c) = c * u^(c-1) * u'
                let du = differentiate(base, var)?;
                mul(
                    mul(
                        exponent.as_ref().clone(),
                        pow(
                            base.as_ref().clone(),
                            sub(exponent.as_ref().clone(), Expr::Number(1.0)),
                        ),
                    ),
                    du,
                )
            } else if let Expr::Number(c) = base.as_ref() {
                if *c > 0.0 {
                    // d(c^v) = c^v * ln(c) * v'
                    let dv = differentiate(exponent, var)?;
                    mul(
                        mul(e.clone(), Expr::Number(c.ln())),
                        dv,
                    )
                } else {
                    return Err(CalculusError::UnsupportedFunction(
                        "^ with variable exponent and non-positive base".into(),
                    ));
                }
            } else {
                return Err(CalculusError::UnsupportedFunction(
                    "^ with variable exponent".into(),
                ));
            }
        }
        Expr::Neg(a) => neg(differentiate(a, var)?),
        Expr::Call(name, args) => {
            let builtin = Builtin::from_name(name)
                .ok_or_else(|| CalculusError::UnsupportedFunction(name.clone()))?;
            let arg = args
                .first()
                .ok_or_else(|| CalculusError::UnsupportedFunction(name.clone()))?;
            let du = differentiate(arg, var)?;
            let outer = match builtin {
                Builtin::Sin => call(Builtin::Cos, arg.clone()),
                Builtin::Cos => neg(call(Builtin::Sin, arg.clone())),
                Builtin::Exp => call(Builtin::Exp, arg.clone()),
                Builtin::Sqrt => div(
                    Expr::Number(0.5),
                    call(Builtin::Sqrt, arg.clone()),
                ),
            };
            mul(outer, du)
        }
    })
}

const MAX_EXPANSION_DEPTH: usize = 64;

/// Expand user definitions until no defined name remains. Both bare symbols
/// and call nodes carrying a defined name are replaced by the definition
/// body (definitions are nullary). Expansion is repeated to a fixpoint;
/// exceeding the depth bound reports a cyclic definition.
pub fn substitute(e: &Expr, defs: &BTreeMap<String, Expr>) -> Result<Expr, CalculusError> {
    if defs.is_empty() {
        return Ok(e.clone());
    }
    let mut current = e.clone();
    for _ in 0..MAX_EXPANSION_DEPTH {
        let (next, changed) = substitute_once(&current, defs);
        if !changed {
            return Ok(next);
        }
        current = next;
    }
    // still expanding after the bound: some definition refers to itself
    let offender = current
        .free_symbols()
        .into_iter()
        .chain(current.call_names())
        .find(|n| defs.contains_key(n))
        .unwrap_or_default();
    Err(CalculusError::CyclicDefinition(offender))
}

fn substitute_once(e: &Expr, defs: &BTreeMap<String, Expr>) -> (Expr, bool) {
    match e {
        Expr::Number(_) => (e.clone(), false),
        Expr::Symbol(s) => match defs.get(s) {
            Some(body) => (body.clone(), true),
            None => (e.clone(), false),
        },
        Expr::Add(a, b) => rebuild2(a, b, defs, |x, y| Expr::Add(x.into(), y.into())),
        Expr::Sub(a, b) => rebuild2(a, b, defs, |x, y| Expr::Sub(x.into(), y.into())),
        Expr::Mul(a, b) => rebuild2(a, b, defs, |x, y| Expr::Mul(x.into(), y.into())),
        Expr::Div(a, b) => rebuild2(a, b, defs, |x, y| Expr::Div(x.into(), y.into())),
        Expr::Pow(a, b) => rebuild2(a, b, defs, |x, y| Expr::Pow(x.into(), y.into())),
        Expr::Neg(a) => {
            let (x, ch) = substitute_once(a, defs);
            (Expr::Neg(x.into()), ch)
        }
        Expr::Call(name, args) => {
            if let Some(body) = defs.get(name) {
                return (body.clone(), true);
            }
            let mut changed = false;
            let new_args = args
                .iter()
                .map(|a| {
                    let (x, ch) = substitute_once(a, defs);
                    changed |= ch;
                    x
                })
                .collect();
            (Expr::Call(name.clone(), new_args), changed)
        }
    }
}

fn rebuild2(
    a: &Expr,
    b: &Expr,
    defs: &BTreeMap<String, Expr>,
    make: impl Fn(Expr, Expr) -> Expr,
) -> (Expr, bool) {
    let (x, ca) = substitute_once(a, defs);
    let (y, cb) = substitute_once(b, defs);
    (make(x, y), ca || cb)
}
