//! Time-sliced propagator matrices on the transverse grid.
//!
//! The short-time kernel for one slice comes from integrating out the
//! transverse momenta of the discretized phase-space action in closed
//! form on the periodic grid: with the potential frozen at the slice
//! midpoint the momentum dependence is Gaussian (a pure quadratic phase),
//! and the integral collapses to the grid propagator
//!
//! ```text
//! K_δ(x, x') = (1/L) Σ_k exp(i p_k (x - x')) exp(-i δ ν(p_k)),
//! ν(p) = -((p + e A_mid)^2 + m^2)/(2 π_+)
//! ```
//!
//! whose overall normalization is fixed by unitarity on the grid. Slices
//! are composed by matrix multiplication (times the `Δx` volume factor).
//! Because the frozen potential is uniform across the grid, every slice
//! matrix is circulant, so the composed product is assembled through its
//! generating column; the public `compose` does the plain dense product.

use super::fft::{momentum, Fft};
use super::grid::{GridSpec, WaveGrid};
use super::QuantumError;
use crate::planewave::ModelParams;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub n: usize,
    pub l: f64,
    pub pi_plus: f64,
    /// Evolution span covered by this matrix.
    pub delta: f64,
    /// Starting light-front coordinate the potential was sampled from.
    pub x_minus_from: f64,
    pub slices: usize,
    /// Row-major `n x n`; application is `(K ψ)_i = Σ_j K[i,j] ψ_j Δx`.
    pub data: Vec<Complex64>,
}

impl KernelMatrix {
    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    /// Dense composition `self ∘ other` (apply `other` first):
    /// `P[i][j] = Σ_k self[i][k] other[k][j] Δx`. Rows are computed
    /// independently, so multi-threading does not change the result.
    pub fn compose(&self, other: &KernelMatrix, threads: usize) -> Result<KernelMatrix, QuantumError> {
        if self.n != other.n || self.l != other.l || self.pi_plus != other.pi_plus {
            return Err(QuantumError::GridMismatch(format!(
                "compose: ({}, {}, {}) vs ({}, {}, {})",
                self.n, self.l, self.pi_plus, other.n, other.l, other.pi_plus
            )));
        }
        let n = self.n;
        let dx = self.dx();
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        let rows_per_chunk = n.div_ceil(threads.max(1));
        std::thread::scope(|scope| {
            for (chunk_idx, chunk) in data.chunks_mut(rows_per_chunk * n).enumerate() {
                let row0 = chunk_idx * rows_per_chunk;
                let a = &self.data;
                let b = &other.data;
                scope.spawn(move || {
                    for (local_i, out_row) in chunk.chunks_mut(n).enumerate() {
                        let i = row0 + local_i;
                        for k in 0..n {
                            let aik = a[i * n + k];
                            let b_row = &b[k * n..(k + 1) * n];
                            for (o, bv) in out_row.iter_mut().zip(b_row.iter()) {
                                *o += aik * bv;
                            }
                        }
                        for o in out_row.iter_mut() {
                            *o *= dx;
                        }
                    }
                });
            }
        });
        Ok(KernelMatrix {
            n,
            l: self.l,
            pi_plus: self.pi_plus,
            delta: self.delta + other.delta,
            x_minus_from: other.x_minus_from,
            slices: self.slices + other.slices,
            data,
        })
    }
}

/// Largest slice width the grid can represent: the in-band transport
/// distance per slice, `δ p_max / |π_+|`, must stay within half the box.
/// Equivalently the free-kernel phase difference between adjacent momentum
/// samples at the band edge stays below π.
pub fn slice_width_bound(n: usize, l: f64, pi_plus: f64) -> f64 {
    pi_plus.abs() * l * l / (2.0 * std::f64::consts::PI * n as f64)
}

fn multiplier(params: &ModelParams, pi_plus: f64, n: usize, l: f64, a_mid: f64, delta: f64) -> Vec<Complex64> {
    let m2 = params.m * params.m;
    (0..n)
        .map(|k| {
            let p = momentum(k, n, l) + params.e * a_mid;
            let nu = -(p * p + m2) / (2.0 * pi_plus);
            let phase = -delta * nu;
            Complex64::new(phase.cos(), phase.sin())
        })
        .collect()
}

/// Generating column `c[j] = (1/L) Σ_k m_k e^{i p_k x_j}` of a circulant
/// kernel with symbol `m`.
fn column_from_multiplier(mult: &[Complex64], l: f64) -> Vec<Complex64> {
    let n = mult.len();
    let fft = Fft::new(n);
    let mut col = mult.to_vec();
    fft.inverse(&mut col); // (1/N) Σ_k m_k e^{+2πi jk/N}
    let scale = n as f64 / l; // 1/Δx
    for v in col.iter_mut() {
        *v *= scale;
    }
    col
}

fn dense_from_column(col: &[Complex64]) -> Vec<Complex64> {
    let n = col.len();
    let mut data = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = col[(i + n - j) % n];
        }
    }
    data
}

/// Build the propagator over `[x_minus_from, x_minus_from + delta]` from
/// `slices` short-time kernels with the potential frozen at each slice
/// midpoint.
pub fn sliced_kernel(
    params: &ModelParams,
    spec: GridSpec,
    x_minus_from: f64,
    delta: f64,
    slices: usize,
) -> Result<KernelMatrix, QuantumError> {
    spec.validate()?;
    if spec.d != 1 {
        return Err(QuantumError::KernelDimension);
    }
    if slices == 0 {
        return Err(QuantumError::BadGrid("slices must be >= 1".into()));
    }
    params
        .validate()
        .map_err(|e| QuantumError::BadModel(e.to_string()))?;
    let pi_plus = params.pi_plus;
    let n = spec.n;
    let l = spec.l;
    let dx = spec.dx();
    let delta_slice = delta / slices as f64;
    let bound = slice_width_bound(n, l, pi_plus);
    if delta_slice.abs() > bound {
        return Err(QuantumError::KernelResolution {
            delta_slice: delta_slice.abs(),
            bound,
        });
    }

    // composed generating column: start with slice 1, then convolve in the
    // remaining slices (each convolution is one column of the dense matrix
    // product)
    let mut acc: Option<Vec<Complex64>> = None;
    let mut conv = vec![Complex64::new(0.0, 0.0); n];
    for s in 0..slices {
        let xm_mid = x_minus_from + (s as f64 + 0.5) * delta_slice;
        let a_mid = params.potential[0].at(xm_mid);
        let mult = multiplier(params, pi_plus, n, l, a_mid, delta_slice);
        let col = column_from_multiplier(&mult, l);
        acc = Some(match acc {
            None => col,
            Some(prev) => {
                // c_new[i] = Σ_k col[(i-k) mod n] prev[k] Δx
                for (i, out) in conv.iter_mut().enumerate() {
                    let mut sum = Complex64::new(0.0, 0.0);
                    for (k, pv) in prev.iter().enumerate() {
                        sum += col[(i + n - k) % n] * pv;
                    }
                    *out = sum * dx;
                }
                conv.clone()
            }
        });
    }
    let col = acc.expect("slices >= 1");
    Ok(KernelMatrix {
        n,
        l,
        pi_plus,
        delta,
        x_minus_from,
        slices,
        data: dense_from_column(&col),
    })
}

/// `ψ' = K ψ Δx`; the wavefunction advances by the kernel's span.
pub fn apply_kernel(kernel: &KernelMatrix, psi: &WaveGrid) -> Result<WaveGrid, QuantumError> {
    if psi.spec.d != 1 {
        return Err(QuantumError::KernelDimension);
    }
    if kernel.n != psi.spec.n || kernel.l != psi.spec.l || kernel.pi_plus != psi.pi_plus {
        return Err(QuantumError::GridMismatch(format!(
            "kernel (n={}, l={}, pi_plus={}) vs wavefunction (n={}, l={}, pi_plus={})",
            kernel.n, kernel.l, kernel.pi_plus, psi.spec.n, psi.spec.l, psi.pi_plus
        )));
    }
    let n = kernel.n;
    let dx = kernel.dx();
    let mut amplitude = vec![Complex64::new(0.0, 0.0); n];
    for (i, out) in amplitude.iter_mut().enumerate() {
        let row = &kernel.data[i * n..(i + 1) * n];
        let mut sum = Complex64::new(0.0, 0.0);
        for (k, v) in row.iter().zip(psi.amplitude.iter()) {
            sum += k * v;
        }
        *out = sum * dx;
    }
    Ok(WaveGrid {
        spec: psi.spec,
        x_minus: psi.x_minus + kernel.delta,
        pi_plus: psi.pi_plus,
        amplitude,
    })
}
