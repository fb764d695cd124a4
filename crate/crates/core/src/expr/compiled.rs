//! Flat compiled form of an expression for tight evaluation loops.
//!
//! The tree walker in `eval` is fine for one-off evaluations; integrators
//! evaluate the same expressions millions of times, so they compile them
//! once into a postfix program over a slot array. IEEE semantics are kept
//! raw here (division by zero yields inf/NaN); callers guard with
//! finiteness checks.

use super::{Builtin, Expr};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    Load(usize),
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("symbol '{0}' has no slot")]
    MissingSymbol(String),
    #[error("cannot compile call to unknown function '{0}'")]
    UnknownFunction(String),
}

#[derive(Debug, Clone)]
pub struct CompiledExpr {
    code: Vec<Instr>,
    max_stack: usize,
}

impl CompiledExpr {
    pub fn compile(e: &Expr, slots: &BTreeMap<String, usize>) -> Result<Self, CompileError> {
        let mut code = Vec::new();
        emit(e, slots, &mut code)?;
        // postfix depth bound: each instruction pushes at most one value
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for instr in &code {
            match instr {
                Instr::Const(_) | Instr::Load(_) => depth += 1,
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div | Instr::Pow => depth -= 1,
                _ => {}
            }
            max_stack = max_stack.max(depth);
        }
        Ok(CompiledExpr { code, max_stack })
    }

    pub fn max_stack(&self) -> usize {
        self.max_stack
    }

    /// Evaluate against a slot array. `stack` is scratch space that is
    /// cleared on entry; reuse it across calls to avoid allocation.
    pub fn eval(&self, slots: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        for instr in &self.code {
            match instr {
                Instr::Const(v) => stack.push(*v),
                Instr::Load(i) => stack.push(slots[*i]),
                Instr::Add => bin(stack, |a, b| a + b),
                Instr::Sub => bin(stack, |a, b| a - b),
                Instr::Mul => bin(stack, |a, b| a * b),
                Instr::Div => bin(stack, |a, b| a / b),
                Instr::Pow => bin(stack, f64::powf),
                Instr::Neg => un(stack, |a| -a),
                Instr::Sin => un(stack, f64::sin),
                Instr::Cos => un(stack, f64::cos),
                Instr::Exp => un(stack, f64::exp),
                Instr::Sqrt => un(stack, f64::sqrt),
            }
        }
        stack.pop().unwrap_or(f64::NAN)
    }
}

#[inline]
fn bin(stack: &mut Vec<f64>, f: impl Fn(f64, f64) -> f64) {
    let b = stack.pop().unwrap_or(f64::NAN);
    let a = stack.pop().unwrap_or(f64::NAN);
    stack.push(f(a, b));
}

#[inline]
fn un(stack: &mut Vec<f64>, f: impl Fn(f64) -> f64) {
    let a = stack.pop().unwrap_or(f64::NAN);
    stack.push(f(a));
}

fn emit(
    e: &Expr,
    slots: &BTreeMap<String, usize>,
    code: &mut Vec<Instr>,
) -> Result<(), CompileError> {
    match e {
        Expr::Number(v) => code.push(Instr::Const(*v)),
        Expr::Symbol(s) => {
            let idx = slots
                .get(s)
                .ok_or_else(|| CompileError::MissingSymbol(s.clone()))?;
            code.push(Instr::Load(*idx));
        }
        Expr::Add(a, b) => {
            emit(a, slots, code)?;
            emit(b, slots, code)?;
            code.push(Instr::Add);
        }
        Expr::Sub(a, b) => {
            emit(a, slots, code)?;
            emit(b, slots, code)?;
            code.push(Instr::Sub);
        }
        Expr::Mul(a, b) => {
            emit(a, slots, code)?;
            emit(b, slots, code)?;
            code.push(Instr::Mul);
        }
        Expr::Div(a, b) => {
            emit(a, slots, code)?;
            emit(b, slots, code)?;
            code.push(Instr::Div);
        }
        Expr::Pow(a, b) => {
            emit(a, slots, code)?;
            emit(b, slots, code)?;
            code.push(Instr::Pow);
        }
        Expr::Neg(a) => {
            emit(a, slots, code)?;
            code.push(Instr::Neg);
        }
        Expr::Call(name, args) => {
            let builtin = Builtin::from_name(name)
                .ok_or_else(|| CompileError::UnknownFunction(name.clone()))?;
            for a in args {
                emit(a, slots, code)?;
            }
            code.push(match builtin {
                Builtin::Sin => Instr::Sin,
                Builtin::Cos => Instr::Cos,
                Builtin::Exp => Instr::Exp,
                Builtin::Sqrt => Instr::Sqrt,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, parse, Bindings};
    use crate::rng::Rng;

    #[test]
    fn compiled_matches_tree_walker() {
        let texts = [
            "2*x + sin(y)",
            "-(((p+0.3*cos(k*t))^2+1)/(2*w))",
            "sqrt(x^2 + y^2) * exp(-t)",
            "x^2^2 - y/(1+x)",
        ];
        let mut rng = Rng::new(3);
        for text in texts {
            let e = parse(text).unwrap();
            let syms: Vec<String> = e.free_symbols().into_iter().collect();
            let slots: BTreeMap<String, usize> = syms
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i))
                .collect();
            let compiled = CompiledExpr::compile(&e, &slots).unwrap();
            let mut stack = Vec::with_capacity(compiled.max_stack());
            for _ in 0..50 {
                let values: Vec<f64> = syms.iter().map(|_| rng.uniform(0.1, 2.0)).collect();
                let mut b = Bindings::new();
                for (s, v) in syms.iter().zip(values.iter()) {
                    b.set(s.clone(), *v);
                }
                let expect = evaluate(&e, &b).unwrap();
                let got = compiled.eval(&values, &mut stack);
                assert!(
                    (expect - got).abs() <= 1e-12 * (1.0 + expect.abs()),
                    "{}: {} vs {}",
                    text,
                    expect,
                    got
                );
            }
        }
    }
}
