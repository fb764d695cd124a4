//! Quantum sector for the built-in plane-wave model: wave packets on
//! periodic transverse grids, spectral evolution in the light-front
//! coordinate, expectation-value comparison against the classical flow,
//! a time-sliced propagator matrix, and the residual of the full
//! second-order wave operator.

mod evolve;
mod fft;
mod grid;
mod kernel;
mod residual;

pub use evolve::{
    ehrenfest_compare, evolve_splitstep, EhrenfestReport, Evolution, ObsRow, BOUNDARY_MASS_LIMIT,
    SPECTRAL_TAIL_LIMIT,
};
pub use fft::{momentum, Fft};
pub use grid::{GridSpec, Observables, WaveGrid};
pub use kernel::{apply_kernel, slice_width_bound, sliced_kernel, KernelMatrix};
pub use residual::{kg_residual, ResidualReport};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("under-resolved: {0}")]
    UnderResolved(String),
    #[error("input wavefunction is not normalized (norm = {0})")]
    NotNormalized(f64),
    #[error("non-finite amplitude at x_minus = {0}")]
    NonFinite(f64),
    #[error("packet mass near the box edge at x_minus = {x_minus}: fraction {fraction:.3e} exceeds the limit")]
    BoundaryMass { x_minus: f64, fraction: f64 },
    #[error("slice width {delta_slice:.6} is too coarse for this grid: in-band transport per slice must stay inside the half box (limit {bound:.6}); use more slices, a larger box, or more points")]
    KernelResolution { delta_slice: f64, bound: f64 },
    #[error("the sliced kernel supports d=1 only (explicit matrices)")]
    KernelDimension,
    #[error("kernel and wavefunction grids do not match: {0}")]
    GridMismatch(String),
    #[error("evolution record has no stored wavefunctions (run with recording enabled)")]
    MissingSnapshots,
    #[error("need at least 3 stored slices for the residual, got {0}")]
    TooFewSlices(usize),
}
