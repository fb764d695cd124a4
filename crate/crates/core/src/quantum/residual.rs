//! Residual of the full second-order light-front wave operator.
//!
//! A first-order evolution record `ψ(x_-)` at fixed `π_+` solves the full
//! wave equation iff
//!
//! ```text
//! R = 2 i π_+ ∂ψ/∂x_-  +  ((p̂_a + e A_a(x_-))^2 + m^2) ψ  =  0,
//! ```
//!
//! where the cross term absorbed the analytic `e^{i π_+ x_+}` factor. The
//! `x_-` derivative is taken by central differences over stored slices,
//! the transverse operator spectrally, so the residual decays second-order
//! in the `x_-` step.

use super::fft::{momentum, Fft};
use super::Evolution;
use super::QuantumError;
use crate::planewave::ModelParams;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// Largest interior-slice L2 residual.
    pub max_l2: f64,
    /// `(x_minus, l2 residual)` for every interior slice.
    pub per_slice: Vec<(f64, f64)>,
}

pub fn kg_residual(evolution: &Evolution, params: &ModelParams) -> Result<ResidualReport, QuantumError> {
    let snapshots = evolution
        .snapshots
        .as_ref()
        .ok_or(QuantumError::MissingSnapshots)?;
    if snapshots.len() < 3 {
        return Err(QuantumError::TooFewSlices(snapshots.len()));
    }
    let spec = evolution.final_grid.spec;
    let n = spec.n;
    let l = spec.l;
    let d = spec.d;
    let dv = spec.dx().powi(d as i32);
    let pi_plus = evolution.final_grid.pi_plus;
    let h = (evolution.x_minus_end - evolution.x_minus_start) / evolution.steps as f64;
    let e = params.e;
    let m2 = params.m * params.m;
    let fft = Fft::new(n);

    let mut per_slice = Vec::with_capacity(snapshots.len() - 2);
    let mut work = vec![Complex64::new(0.0, 0.0); spec.size()];
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    let mut max_l2 = 0.0_f64;

    for i in 1..snapshots.len() - 1 {
        let xm = evolution.x_minus_start + i as f64 * h;
        let a = params.potential_at(xm);

        // transverse operator in momentum space
        work.copy_from_slice(&snapshots[i]);
        match d {
            1 => fft.forward(&mut work),
            2 => {
                for row in work.chunks_mut(n) {
                    fft.forward(row);
                }
                for j in 0..n {
                    for r in 0..n {
                        col[r] = work[r * n + j];
                    }
                    fft.forward(&mut col);
                    for r in 0..n {
                        work[r * n + j] = col[r];
                    }
                }
            }
            _ => unreachable!(),
        }
        for (flat, v) in work.iter_mut().enumerate() {
            let weight = match d {
                1 => {
                    let p = momentum(flat, n, l) + e * a[0];
                    p * p + m2
                }
                _ => {
                    let p0 = momentum(flat / n, n, l) + e * a[0];
                    let p1 = momentum(flat % n, n, l) + e * a[1];
                    p0 * p0 + p1 * p1 + m2
                }
            };
            *v *= weight;
        }
        match d {
            1 => fft.inverse(&mut work),
            2 => {
                for j in 0..n {
                    for r in 0..n {
                        col[r] = work[r * n + j];
                    }
                    fft.inverse(&mut col);
                    for r in 0..n {
                        work[r * n + j] = col[r];
                    }
                }
                for row in work.chunks_mut(n) {
                    fft.inverse(row);
                }
            }
            _ => unreachable!(),
        }

        // R = 2 i π_+ (ψ_{i+1} - ψ_{i-1})/(2h) + Tψ
        let two_i_pi = Complex64::new(0.0, 2.0 * pi_plus);
        let mut l2 = 0.0_f64;
        for (idx, t) in work.iter().enumerate() {
            let dpsi = (snapshots[i + 1][idx] - snapshots[i - 1][idx]) / (2.0 * h);
            let r = two_i_pi * dpsi + t;
            l2 += r.norm_sqr();
        }
        let l2 = (l2 * dv).sqrt();
        max_l2 = max_l2.max(l2);
        per_slice.push((xm, l2));
    }

    Ok(ResidualReport { max_l2, per_slice })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::evolve::evolve_splitstep;
    use crate::quantum::grid::{GridSpec, WaveGrid};

    fn run(params: &ModelParams, steps: usize) -> Evolution {
        let psi = WaveGrid::gaussian(
            GridSpec { d: 1, n: 256, l: 40.0 },
            -1.0,
            0.0,
            &[0.0],
            &[1.0],
            &[0.3],
        )
        .unwrap();
        evolve_splitstep(&psi, params, 2.0, steps, true).unwrap()
    }

    #[test]
    fn free_residual_below_default_threshold() {
        let params = ModelParams::free_particle();
        let report = kg_residual(&run(&params, 1000), &params).unwrap();
        assert!(report.max_l2 <= 1e-4, "residual {}", report.max_l2);
    }

    #[test]
    fn residual_decays_second_order_in_the_step() {
        let params = ModelParams::cosine_default();
        let coarse = kg_residual(&run(&params, 500), &params).unwrap();
        let fine = kg_residual(&run(&params, 1000), &params).unwrap();
        let ratio = coarse.max_l2 / fine.max_l2;
        assert!(
            (2.8..=5.2).contains(&ratio),
            "ratio {} (coarse {}, fine {})",
            ratio,
            coarse.max_l2,
            fine.max_l2
        );
    }

    #[test]
    fn wrong_sign_evolution_is_flagged() {
        // conjugated snapshots solve the equation with the opposite sign of
        // π_+, so the residual must be large
        let params = ModelParams::free_particle();
        let mut ev = run(&params, 400);
        if let Some(snaps) = ev.snapshots.as_mut() {
            for s in snaps.iter_mut() {
                for v in s.iter_mut() {
                    *v = v.conj();
                }
            }
        }
        let report = kg_residual(&ev, &params).unwrap();
        assert!(report.max_l2 > 1e-1, "negative control residual {}", report.max_l2);
    }

    #[test]
    fn missing_snapshots_rejected() {
        let params = ModelParams::free_particle();
        let psi = WaveGrid::gaussian(
            GridSpec { d: 1, n: 64, l: 40.0 },
            -1.0,
            0.0,
            &[0.0],
            &[2.6],
            &[0.0],
        )
        .unwrap();
        let ev = evolve_splitstep(&psi, &params, 1.0, 10, false).unwrap();
        assert!(matches!(
            kg_residual(&ev, &params),
            Err(QuantumError::MissingSnapshots)
        ));
    }
}
