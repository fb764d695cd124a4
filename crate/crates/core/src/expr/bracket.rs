//! Poisson brackets over an explicit list of conjugate pairs.
//!
//! The pair list may mix ordinary coordinate pairs `(q, p)` with
//! parameter pairs `(t, p_t)`; summing over both gives the extended
//! bracket used by the integrability analysis.

use super::{add, differentiate, mul, sub, CalculusError, Expr};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PairsError {
    #[error("symbol '{0}' appears in more than one conjugate pair")]
    DuplicateSymbol(String),
    #[error("empty symbol in conjugate pair")]
    EmptySymbol,
}

/// Ordered list of (position, momentum) symbol pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatePairs(Vec<(String, String)>);

impl ConjugatePairs {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self, PairsError> {
        let mut seen = std::collections::BTreeSet::new();
        for (q, p) in &pairs {
            if q.is_empty() || p.is_empty() {
                return Err(PairsError::EmptySymbol);
            }
            for s in [q, p] {
                if !seen.insert(s.clone()) {
                    return Err(PairsError::DuplicateSymbol(s.clone()));
                }
            }
        }
        Ok(ConjugatePairs(pairs))
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, String)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `{F, G} = Σ (∂F/∂q ∂G/∂p − ∂F/∂p ∂G/∂q)` over all pairs.
pub fn poisson_bracket(
    f: &Expr,
    g: &Expr,
    pairs: &ConjugatePairs,
) -> Result<Expr, CalculusError> {
    let mut acc = Expr::Number(0.0);
    for (q, p) in pairs.iter() {
        let df_dq = differentiate(f, q)?;
        let dg_dp = differentiate(g, p)?;
        let df_dp = differentiate(f, p)?;
        let dg_dq = differentiate(g, q)?;
        let term = sub(mul(df_dq, dg_dp), mul(df_dp, dg_dq));
        acc = add(acc, term);
    }
    Ok(acc)
}
