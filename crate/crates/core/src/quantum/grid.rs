//! Complex wavefunctions on periodic transverse grids.

use super::fft::{momentum, Fft};
use super::QuantumError;
use num_complex::Complex64;

/// Transverse grid geometry: `d` axes of `n` points spanning `[-l/2, l/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub l: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), QuantumError> {
        if self.d != 1 && self.d != 2 {
            return Err(QuantumError::BadGrid(format!(
                "transverse dimension must be 1 or 2, got {}",
                self.d
            )));
        }
        if !self.n.is_power_of_two() || self.n < 8 {
            return Err(QuantumError::BadGrid(format!(
                "grid points per axis must be a power of two >= 8, got {}",
                self.n
            )));
        }
        if self.l <= 0.0 || !self.l.is_finite() {
            return Err(QuantumError::BadGrid(format!(
                "box length must be positive, got {}",
                self.l
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.l / 2.0 + j as f64 * self.dx()
    }

    pub fn size(&self) -> usize {
        self.n.pow(self.d as u32)
    }
}

/// Wavefunction at fixed conserved `pi_plus`, attached to its current
/// evolution coordinate.
#[derive(Debug, Clone)]
pub struct WaveGrid {
    pub spec: GridSpec,
    pub x_minus: f64,
    pub pi_plus: f64,
    pub amplitude: Vec<Complex64>,
}

/// Grid observables: trapezoid sums in position space, spectral sums for
/// momenta.
#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub norm: f64,
    pub mean_x: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub spread_x: Vec<f64>,
}

impl WaveGrid {
    /// Normalized Gaussian packet `exp(-(x-c)^2/(4 σ^2) + i p x)` per axis.
    pub fn gaussian(
        spec: GridSpec,
        pi_plus: f64,
        x_minus: f64,
        center: &[f64],
        width: &[f64],
        momentum: &[f64],
    ) -> Result<WaveGrid, QuantumError> {
        spec.validate()?;
        if pi_plus == 0.0 {
            return Err(QuantumError::BadGrid("pi_plus must be nonzero".into()));
        }
        for (what, v) in [("center", center), ("width", width), ("momentum", momentum)] {
            if v.len() != spec.d {
                return Err(QuantumError::BadGrid(format!(
                    "{} needs {} components, got {}",
                    what,
                    spec.d,
                    v.len()
                )));
            }
        }
        let dx = spec.dx();
        let p_nyquist = std::f64::consts::PI / dx;
        for axis in 0..spec.d {
            if width[axis] < 4.0 * dx {
                return Err(QuantumError::UnderResolved(format!(
                    "packet width {} on axis {} is below 4 dx = {}",
                    width[axis],
                    axis + 1,
                    4.0 * dx
                )));
            }
            if momentum[axis].abs() > p_nyquist / 2.0 {
                return Err(QuantumError::UnderResolved(format!(
                    "packet momentum {} on axis {} exceeds half the band limit {}",
                    momentum[axis],
                    axis + 1,
                    p_nyquist / 2.0
                )));
            }
        }

        let axis_values = |axis: usize| -> Vec<Complex64> {
            (0..spec.n)
                .map(|j| {
                    let x = spec.x(j);
                    let dxc = x - center[axis];
                    let mag = (-dxc * dxc / (4.0 * width[axis] * width[axis])).exp();
                    let phase = momentum[axis] * x;
                    Complex64::new(phase.cos(), phase.sin()) * mag
                })
                .collect()
        };

        let amplitude: Vec<Complex64> = match spec.d {
            1 => axis_values(0),
            2 => {
                let ax0 = axis_values(0);
                let ax1 = axis_values(1);
                let mut out = Vec::with_capacity(spec.n * spec.n);
                for v0 in &ax0 {
                    for v1 in &ax1 {
                        out.push(v0 * v1);
                    }
                }
                out
            }
            _ => unreachable!(),
        };

        let mut grid = WaveGrid {
            spec,
            x_minus,
            pi_plus,
            amplitude,
        };
        let norm = grid.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(QuantumError::BadGrid("degenerate packet".into()));
        }
        let inv = 1.0 / norm;
        for v in grid.amplitude.iter_mut() {
            *v *= inv;
        }
        Ok(grid)
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx()
    }

    /// Volume element `dx^d`.
    pub fn dv(&self) -> f64 {
        self.dx().powi(self.spec.d as i32)
    }

    /// `sqrt(Σ |ψ|^2 dV)`.
    pub fn norm(&self) -> f64 {
        (self.amplitude.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dv()).sqrt()
    }

    /// Index decomposition for d=2 (row-major: axis 0 outer, axis 1 inner).
    fn axis_index(&self, flat: usize, axis: usize) -> usize {
        match self.spec.d {
            1 => flat,
            2 => {
                if axis == 0 {
                    flat / self.spec.n
                } else {
                    flat % self.spec.n
                }
            }
            _ => unreachable!(),
        }
    }

    /// Mass within `cells` grid cells of any box edge, as a fraction of the
    /// total.
    pub fn boundary_mass_fraction(&self, cells: usize) -> f64 {
        let n = self.spec.n;
        let total: f64 = self.amplitude.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let near_edge = |j: usize| j < cells || j >= n - cells;
        let mut boundary = 0.0;
        for (flat, v) in self.amplitude.iter().enumerate() {
            let hit = (0..self.spec.d).any(|axis| near_edge(self.axis_index(flat, axis)));
            if hit {
                boundary += v.norm_sqr();
            }
        }
        boundary / total
    }

    /// Fraction of spectral mass at `|p| > frac * p_nyquist` on any axis.
    pub fn spectral_tail_fraction(&self, frac: f64) -> f64 {
        let spectrum = self.spectrum();
        let n = self.spec.n;
        let l = self.spec.l;
        let p_cut = frac * std::f64::consts::PI / self.dx();
        let total: f64 = spectrum.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let mut tail = 0.0;
        for (flat, v) in spectrum.iter().enumerate() {
            let hit = (0..self.spec.d).any(|axis| {
                let k = match self.spec.d {
                    1 => flat,
                    _ => {
                        if axis == 0 {
                            flat / n
                        } else {
                            flat % n
                        }
                    }
                };
                momentum(k, n, l).abs() > p_cut
            });
            if hit {
                tail += v.norm_sqr();
            }
        }
        tail / total
    }

    /// Full d-dimensional spectrum (unnormalized FFT bins).
    pub fn spectrum(&self) -> Vec<Complex64> {
        let n = self.spec.n;
        let fft = Fft::new(n);
        let mut data = self.amplitude.clone();
        match self.spec.d {
            1 => fft.forward(&mut data),
            2 => {
                // rows (axis 1)
                for row in data.chunks_mut(n) {
                    fft.forward(row);
                }
                // columns (axis 0)
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..n {
                    for i in 0..n {
                        col[i] = data[i * n + j];
                    }
                    fft.forward(&mut col);
                    for i in 0..n {
                        data[i * n + j] = col[i];
                    }
                }
            }
            _ => unreachable!(),
        }
        data
    }

    pub fn observables(&self) -> Observables {
        let n = self.spec.n;
        let dv = self.dv();
        let norm_sq: f64 = self.amplitude.iter().map(|v| v.norm_sqr()).sum::<f64>() * dv;
        let mut mean_x = vec![0.0; self.spec.d];
        let mut mean_x2 = vec![0.0; self.spec.d];
        for (flat, v) in self.amplitude.iter().enumerate() {
            let w = v.norm_sqr() * dv;
            for axis in 0..self.spec.d {
                let x = self.spec.x(self.axis_index(flat, axis));
                mean_x[axis] += w * x;
                mean_x2[axis] += w * x * x;
            }
        }
        for axis in 0..self.spec.d {
            mean_x[axis] /= norm_sq;
            mean_x2[axis] /= norm_sq;
        }
        let spread_x: Vec<f64> = (0..self.spec.d)
            .map(|a| (mean_x2[a] - mean_x[a] * mean_x[a]).max(0.0).sqrt())
            .collect();

        let spectrum = self.spectrum();
        let spec_total: f64 = spectrum.iter().map(|v| v.norm_sqr()).sum();
        let mut mean_p = vec![0.0; self.spec.d];
        for (flat, v) in spectrum.iter().enumerate() {
            let w = v.norm_sqr();
            for axis in 0..self.spec.d {
                let k = match self.spec.d {
                    1 => flat,
                    _ => {
                        if axis == 0 {
                            flat / n
                        } else {
                            flat % n
                        }
                    }
                };
                mean_p[axis] += w * momentum(k, n, self.spec.l);
            }
        }
        for axis in 0..self.spec.d {
            mean_p[axis] /= spec_total;
        }

        Observables {
            norm: norm_sq.sqrt(),
            mean_x,
            mean_p,
            spread_x,
        }
    }

    /// Position-space norm and spectral norm must agree (Parseval); returns
    /// the relative mismatch.
    pub fn parseval_mismatch(&self) -> f64 {
        let pos = self.norm();
        let spectrum = self.spectrum();
        let spec = (spectrum.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dv()
            / self.spec.size() as f64)
            .sqrt();
        (pos - spec).abs() / pos.max(f64::MIN_POSITIVE)
    }
}
