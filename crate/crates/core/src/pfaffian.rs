//! Mechanically derived right-hand sides of the multi-parameter equations
//! of motion.
//!
//! For every parameter `t_α` the flow contributes
//!
//! ```text
//! dq_a = ∂H'_α/∂p_a dt_α      dp_a = -∂H'_α/∂q_a dt_α
//! dp_β = -∂H'_α/∂t_β dt_α     dz   = (-H_α + Σ_a p_a ∂H'_α/∂p_a) dt_α
//! ```
//!
//! All partials are precomputed symbolically once per system and then
//! evaluated at phase points by the integrator.

use crate::expr::{self, Expr};
use crate::system::ConstrainedSystem;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PfaffianError {
    #[error("differentiation failed: {0}")]
    Calculus(#[from] expr::CalculusError),
}

/// Field components generated by one parameter.
#[derive(Debug, Clone)]
pub struct ParameterFields {
    pub parameter: String,
    /// `∂H'_α/∂p_a`, aligned with coordinates.
    pub dq: Vec<Expr>,
    /// `-∂H'_α/∂q_a`, aligned with coordinates.
    pub dp: Vec<Expr>,
    /// `-∂H'_α/∂t_β`, aligned with parameters.
    pub dconj: Vec<Expr>,
    /// `-H_α + Σ_a p_a ∂H'_α/∂p_a`.
    pub dz: Expr,
}

/// Precomputed flow fields for every parameter, plus the extended
/// Hamiltonians for constraint monitoring.
#[derive(Debug, Clone)]
pub struct PfaffianRhs {
    pub fields: Vec<ParameterFields>,
    pub extended: Vec<(String, Expr)>,
}

pub fn pfaffian_rhs(sys: &ConstrainedSystem) -> Result<PfaffianRhs, PfaffianError> {
    let extended = sys.extended_hamiltonians();
    let mut fields = Vec::with_capacity(extended.len());
    for (alpha, (param, hp)) in extended.iter().enumerate() {
        let mut dq = Vec::with_capacity(sys.coordinates.len());
        let mut dp = Vec::with_capacity(sys.coordinates.len());
        let mut dz = neg_expr(sys.hamiltonians[alpha].clone());
        for (coord, momentum) in sys.coordinates.iter().zip(sys.momenta.iter()) {
            let dhp_dp = expr::differentiate(hp, momentum)?;
            let dhp_dq = expr::differentiate(hp, coord)?;
            dz = Expr::Add(
                Arc::new(dz),
                Arc::new(Expr::Mul(
                    Arc::new(Expr::symbol(momentum.clone())),
                    Arc::new(dhp_dp.clone()),
                )),
            );
            dq.push(dhp_dp);
            dp.push(neg_expr(dhp_dq));
        }
        let mut dconj = Vec::with_capacity(sys.parameters.len());
        for t in &sys.parameters {
            let dhp_dt = expr::differentiate(hp, t)?;
            dconj.push(neg_expr(dhp_dt));
        }
        fields.push(ParameterFields {
            parameter: param.clone(),
            dq,
            dp,
            dconj,
            dz,
        });
    }
    Ok(PfaffianRhs {
        fields,
        extended,
    })
}

fn neg_expr(e: Expr) -> Expr {
    match e {
        Expr::Number(v) => Expr::Number(-v),
        other => Expr::Neg(Arc::new(other)),
    }
}
