//! Symbolic–numeric engine for constrained Hamiltonian systems with several
//! evolution parameters: extended-Hamiltonian construction, bracket-based
//! integrability analysis, multi-parameter trajectory integration with
//! action accumulation, a gauge-fixed reference integrator, and the quantum
//! sector for the built-in plane-wave model (light-cone wave evolution and
//! a time-sliced propagator kernel).

// index-based loops and guard-style float matches are the clear way to
// write the numeric kernels in this crate
#![allow(clippy::needless_range_loop)]
#![allow(clippy::redundant_guards)]

pub mod expr;
pub mod flow;
pub mod integrability;
pub mod pfaffian;
pub mod planewave;
pub mod quantum;
pub mod rng;
pub mod system;

pub use expr::{Bindings, ConjugatePairs, Expr};
pub use system::{ConstrainedSystem, SystemDocument};
