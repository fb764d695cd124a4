//! Spectral evolution of the light-front wave equation
//! `i ∂ψ/∂x_- = -((p̂_a + e A_a(x_-))^2 + m^2)/(2 π_+) ψ`.
//!
//! The generator is diagonal in momentum space for every `x_-`, so each
//! step is an exact phase multiplication with the potential frozen at the
//! step midpoint (second order in the step, unitary to rounding).

use super::fft::{momentum, Fft};
use super::grid::{Observables, WaveGrid};
use super::QuantumError;
use crate::flow::{integrate, ParameterPath, PhasePoint};
use crate::planewave::{plane_wave_system, ModelParams};
use num_complex::Complex64;

/// Mass fraction allowed within two cells of the box edge.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-10;
/// Spectral mass fraction allowed beyond 3/4 of the band limit.
pub const SPECTRAL_TAIL_LIMIT: f64 = 1e-8;

/// One observables row at a step boundary.
#[derive(Debug, Clone)]
pub struct ObsRow {
    pub x_minus: f64,
    pub obs: Observables,
}

/// Result of a split-step run.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub params: ModelParams,
    pub x_minus_start: f64,
    pub x_minus_end: f64,
    pub steps: usize,
    pub final_grid: WaveGrid,
    pub rows: Vec<ObsRow>,
    /// Wavefunction at every step boundary (present when recording).
    pub snapshots: Option<Vec<Vec<Complex64>>>,
    /// max |norm - 1| over the run.
    pub norm_drift: f64,
}

/// Evolve to `x_minus_end` in `steps` equal steps, recording observables at
/// every boundary. `record` keeps the wavefunction at each boundary for
/// residual analysis.
pub fn evolve_splitstep(
    psi: &WaveGrid,
    params: &ModelParams,
    x_minus_end: f64,
    steps: usize,
    record: bool,
) -> Result<Evolution, QuantumError> {
    if steps == 0 {
        return Err(QuantumError::BadGrid("steps must be >= 1".into()));
    }
    params
        .validate()
        .map_err(|e| QuantumError::BadModel(e.to_string()))?;
    let norm0 = psi.norm();
    if (norm0 - 1.0).abs() > 1e-12 {
        return Err(QuantumError::NotNormalized(norm0));
    }
    if psi.spectral_tail_fraction(0.75) > SPECTRAL_TAIL_LIMIT {
        return Err(QuantumError::UnderResolved(
            "initial spectral tail mass exceeds the resolution limit".into(),
        ));
    }

    let n = psi.spec.n;
    let l = psi.spec.l;
    let d = psi.spec.d;
    let fft = Fft::new(n);
    let h = (x_minus_end - psi.x_minus) / steps as f64;
    let pi_plus = psi.pi_plus;
    let e = params.e;
    let m2 = params.m * params.m;

    let mut grid = psi.clone();
    let mut rows = Vec::with_capacity(steps + 1);
    let mut snapshots = if record {
        Some(Vec::with_capacity(steps + 1))
    } else {
        None
    };
    let mut norm_drift = 0.0_f64;

    let check_and_record = |grid: &WaveGrid,
                                rows: &mut Vec<ObsRow>,
                                snapshots: &mut Option<Vec<Vec<Complex64>>>,
                                norm_drift: &mut f64|
     -> Result<(), QuantumError> {
        if grid.amplitude.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QuantumError::NonFinite(grid.x_minus));
        }
        let frac = grid.boundary_mass_fraction(2);
        if frac > BOUNDARY_MASS_LIMIT {
            return Err(QuantumError::BoundaryMass {
                x_minus: grid.x_minus,
                fraction: frac,
            });
        }
        let obs = grid.observables();
        *norm_drift = norm_drift.max((obs.norm - 1.0).abs());
        rows.push(ObsRow {
            x_minus: grid.x_minus,
            obs,
        });
        if let Some(s) = snapshots {
            s.push(grid.amplitude.clone());
        }
        Ok(())
    };

    check_and_record(&grid, &mut rows, &mut snapshots, &mut norm_drift)?;

    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for step in 0..steps {
        let xm_mid = psi.x_minus + (step as f64 + 0.5) * h;
        let a = params.potential_at(xm_mid);

        // forward transform
        match d {
            1 => fft.forward(&mut grid.amplitude),
            2 => {
                for row in grid.amplitude.chunks_mut(n) {
                    fft.forward(row);
                }
                for j in 0..n {
                    for i in 0..n {
                        col[i] = grid.amplitude[i * n + j];
                    }
                    fft.forward(&mut col);
                    for i in 0..n {
                        grid.amplitude[i * n + j] = col[i];
                    }
                }
            }
            _ => unreachable!(),
        }

        // phase multiplier exp(-i h ν(p)), ν = -((p+eA)^2 + m^2)/(2 π_+)
        match d {
            1 => {
                for (k, v) in grid.amplitude.iter_mut().enumerate() {
                    let p = momentum(k, n, l) + e * a[0];
                    let nu = -(p * p + m2) / (2.0 * pi_plus);
                    let phase = -h * nu;
                    *v *= Complex64::new(phase.cos(), phase.sin());
                }
            }
            2 => {
                for (flat, v) in grid.amplitude.iter_mut().enumerate() {
                    let k0 = flat / n;
                    let k1 = flat % n;
                    let p0 = momentum(k0, n, l) + e * a[0];
                    let p1 = momentum(k1, n, l) + e * a[1];
                    let nu = -(p0 * p0 + p1 * p1 + m2) / (2.0 * pi_plus);
                    let phase = -h * nu;
                    *v *= Complex64::new(phase.cos(), phase.sin());
                }
            }
            _ => unreachable!(),
        }

        // inverse transform
        match d {
            1 => fft.inverse(&mut grid.amplitude),
            2 => {
                for j in 0..n {
                    for i in 0..n {
                        col[i] = grid.amplitude[i * n + j];
                    }
                    fft.inverse(&mut col);
                    for i in 0..n {
                        grid.amplitude[i * n + j] = col[i];
                    }
                }
                for row in grid.amplitude.chunks_mut(n) {
                    fft.inverse(row);
                }
            }
            _ => unreachable!(),
        }

        grid.x_minus = psi.x_minus + (step as f64 + 1.0) * h;
        check_and_record(&grid, &mut rows, &mut snapshots, &mut norm_drift)?;
    }

    Ok(Evolution {
        params: *params,
        x_minus_start: psi.x_minus,
        x_minus_end,
        steps,
        final_grid: grid,
        rows,
        snapshots,
        norm_drift,
    })
}

/// Expectation-value trajectories against the classical flow started from
/// the packet's moments.
#[derive(Debug, Clone)]
pub struct EhrenfestReport {
    pub max_position_deviation: f64,
    pub max_momentum_deviation: f64,
    /// Per-boundary `(x_minus, |<x> - x_cl| per axis, |<p> - p_cl| per axis)`.
    pub rows: Vec<(f64, Vec<f64>, Vec<f64>)>,
    pub norm_drift: f64,
}

/// Run the quantum evolution and the classical integrator side by side.
/// The generator is quadratic in momenta with an `x_-`-dependent shift, so
/// the packet means must track the classical trajectory to discretization
/// accuracy.
pub fn ehrenfest_compare(
    psi: &WaveGrid,
    params: &ModelParams,
    x_minus_end: f64,
    steps: usize,
) -> Result<(EhrenfestReport, Evolution), QuantumError> {
    let evolution = evolve_splitstep(psi, params, x_minus_end, steps, false)?;

    let sys = plane_wave_system(params).map_err(|e| QuantumError::BadModel(e.to_string()))?;
    let obs0 = &evolution.rows[0].obs;
    let d = psi.spec.d;
    let (p1, p2) = (obs0.mean_p[0], if d == 2 { obs0.mean_p[1] } else { 0.0 });
    let (c1, c2) = (obs0.mean_x[0], if d == 2 { obs0.mean_x[1] } else { 0.0 });
    let initial = PhasePoint::on_surface(
        &sys,
        vec![0.0, psi.x_minus],
        vec![0.0, c1, c2],
        vec![psi.pi_plus, p1, p2],
    )
    .map_err(|e| QuantumError::BadModel(e.to_string()))?;
    let path = ParameterPath::new(vec![vec![0.0, psi.x_minus], vec![0.0, x_minus_end]])
        .map_err(|e| QuantumError::BadModel(e.to_string()))?;
    let classical =
        integrate(&sys, &initial, &path, steps, false).map_err(|e| QuantumError::BadModel(e.to_string()))?;

    let mut rows = Vec::with_capacity(steps + 1);
    let mut max_x = 0.0_f64;
    let mut max_p = 0.0_f64;
    for (row, point) in evolution.rows.iter().zip(classical.points.iter()) {
        let mut dxs = Vec::with_capacity(d);
        let mut dps = Vec::with_capacity(d);
        for axis in 0..d {
            let x_cl = point.coordinates[1 + axis];
            let p_cl = point.momenta[1 + axis];
            let dx = (row.obs.mean_x[axis] - x_cl).abs();
            let dp = (row.obs.mean_p[axis] - p_cl).abs();
            max_x = max_x.max(dx);
            max_p = max_p.max(dp);
            dxs.push(dx);
            dps.push(dp);
        }
        rows.push((row.x_minus, dxs, dps));
    }
    Ok((
        EhrenfestReport {
            max_position_deviation: max_x,
            max_momentum_deviation: max_p,
            rows,
            norm_drift: evolution.norm_drift,
        },
        evolution,
    ))
}
