//! Randomized zero-testing.
//!
//! Deciding whether an expression is identically zero is undecidable in
//! general, so the engine samples: an expression passes if it evaluates
//! below `tol * (1 + scale)` at every seeded sample point, where `scale`
//! is the largest subexpression magnitude seen at that point. Sampling
//! intervals may exclude a symmetric band around zero to keep away from
//! declared singular loci.

use super::{evaluate_with_magnitude, Bindings, EvalError, Expr};
use crate::rng::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Sampling interval for one symbol. `exclude_abs_below > 0` removes the
/// band `|x| < exclude_abs_below` from the interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub exclude_abs_below: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            exclude_abs_below: 0.0,
        }
    }

    pub fn with_exclusion(lo: f64, hi: f64, exclude_abs_below: f64) -> Self {
        Interval {
            lo,
            hi,
            exclude_abs_below,
        }
    }

    /// Draw a point from the interval minus the excluded band, proportionally
    /// to sub-interval length (no rejection loop, so the draw count per
    /// sample is fixed and seeds stay aligned).
    fn sample(&self, rng: &mut Rng) -> f64 {
        let ex = self.exclude_abs_below;
        if ex <= 0.0 {
            return rng.uniform(self.lo, self.hi);
        }
        let below = (self.lo.min(-ex), self.hi.min(-ex));
        let above = (self.lo.max(ex), self.hi.max(ex));
        let len_below = (below.1 - below.0).max(0.0);
        let len_above = (above.1 - above.0).max(0.0);
        let total = len_below + len_above;
        if total <= 0.0 {
            // interval entirely inside the excluded band; fall back to an edge
            return if self.hi.abs() >= self.lo.abs() {
                self.hi
            } else {
                self.lo
            };
        }
        let u = rng.next_f64() * total;
        if u < len_below {
            below.0 + u
        } else {
            above.0 + (u - len_below)
        }
    }
}

/// Per-symbol sampling intervals.
#[derive(Debug, Clone, Default)]
pub struct SampleDomain(pub BTreeMap<String, Interval>);

impl SampleDomain {
    pub fn new() -> Self {
        SampleDomain(BTreeMap::new())
    }

    pub fn set(&mut self, symbol: impl Into<String>, interval: Interval) -> &mut Self {
        self.0.insert(symbol.into(), interval);
        self
    }

    /// Draw bindings for every symbol in the domain. Symbols are visited in
    /// sorted order so the draw sequence is reproducible.
    pub fn sample(&self, rng: &mut Rng) -> Bindings {
        let mut b = Bindings::new();
        for (name, interval) in &self.0 {
            b.set(name.clone(), interval.sample(rng));
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZeroError {
    #[error("symbol '{0}' has no sampling interval")]
    MissingInterval(String),
    #[error("samples must be >= 1")]
    NoSamples,
    #[error("evaluation failed at sample point {point:?}: {source}")]
    Evaluation { point: Vec<(String, f64)>, source: EvalError },
}

/// Outcome of a randomized zero test.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroVerdict {
    pub is_zero: bool,
    /// A sample point where the expression was non-negligible, with the
    /// value found there.
    pub witness: Option<(Bindings, f64)>,
}

/// Test whether `e` vanishes over the sampled domain. Deterministic for a
/// fixed seed. Every free symbol of `e` must have an interval in `domain`.
pub fn is_zero(
    e: &Expr,
    domain: &SampleDomain,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<ZeroVerdict, ZeroError> {
    if samples == 0 {
        return Err(ZeroError::NoSamples);
    }
    for sym in e.free_symbols() {
        if !domain.0.contains_key(&sym) {
            return Err(ZeroError::MissingInterval(sym));
        }
    }
    let mut rng = Rng::new(seed);
    for _ in 0..samples {
        let b = domain.sample(&mut rng);
        let (value, scale) = evaluate_with_magnitude(e, &b).map_err(|source| {
            ZeroError::Evaluation {
                point: b.0.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                source,
            }
        })?;
        if value.abs() >= tol * (1.0 + scale) {
            return Ok(ZeroVerdict {
                is_zero: false,
                witness: Some((b, value)),
            });
        }
    }
    Ok(ZeroVerdict {
        is_zero: true,
        witness: None,
    })
}
