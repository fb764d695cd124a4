//! Built-in model library: the relativistic particle in a transverse
//! potential that depends only on the light-front coordinate `xm`.
//!
//! Coordinates are `(xp, x1, x2)` with evolution parameters `(tau, xm)`;
//! the single Hamiltonian generator is
//! `H_xm = -((p_a + e A_a(xm))^2 + m^2)/(2 p_xp)` and `H_tau = 0`.
//! Besides the system builder this module carries the closed-form
//! trajectory oracle for zero/cosine potentials, a consistency check of the
//! momentum definitions against the underlying Lagrangian, and the
//! non-integrable counterexample used as a negative control.

use crate::flow::{FlowError, PhasePoint};
use crate::system::{ConstrainedSystem, SingularSpec, SystemDocument, SystemError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Transverse potential shape for one polarization component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Cosine,
    GaussianPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    #[serde(default)]
    pub amplitude: f64,
    /// Wavenumber in inverse `xm` units (cosine only).
    #[serde(default)]
    pub k: f64,
    /// Pulse width in `xm` units (gaussian_pulse only).
    #[serde(default)]
    pub width: f64,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec {
            kind: PotentialKind::Zero,
            amplitude: 0.0,
            k: 0.0,
            width: 0.0,
        }
    }

    pub fn cosine(amplitude: f64, k: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Cosine,
            amplitude,
            k,
            width: 0.0,
        }
    }

    pub fn gaussian_pulse(amplitude: f64, width: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::GaussianPulse,
            amplitude,
            k: 0.0,
            width,
        }
    }

    /// `A(xm)` value.
    pub fn at(&self, xm: f64) -> f64 {
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Cosine => self.amplitude * (self.k * xm).cos(),
            PotentialKind::GaussianPulse => {
                self.amplitude * (-(xm / self.width) * (xm / self.width)).exp()
            }
        }
    }

    /// Antiderivative `∫ A` (zero/cosine only).
    fn integral(&self, xm: f64) -> Option<f64> {
        match self.kind {
            PotentialKind::Zero => Some(0.0),
            PotentialKind::Cosine => Some(self.amplitude / self.k * (self.k * xm).sin()),
            PotentialKind::GaussianPulse => None,
        }
    }

    /// Antiderivative `∫ A²` (zero/cosine only).
    fn integral_sq(&self, xm: f64) -> Option<f64> {
        match self.kind {
            PotentialKind::Zero => Some(0.0),
            PotentialKind::Cosine => {
                let a2 = self.amplitude * self.amplitude;
                Some(a2 * (xm / 2.0 + (2.0 * self.k * xm).sin() / (4.0 * self.k)))
            }
            PotentialKind::GaussianPulse => None,
        }
    }

    fn expression(&self, amp_sym: &str, k_sym: &str, width_sym: &str) -> String {
        match self.kind {
            PotentialKind::Zero => "0".to_string(),
            PotentialKind::Cosine => format!("{}*cos({}*xm)", amp_sym, k_sym),
            PotentialKind::GaussianPulse => {
                format!("{}*exp(-(xm/{})^2)", amp_sym, width_sym)
            }
        }
    }

    fn validate(&self, component: usize) -> Result<(), ModelError> {
        if !self.amplitude.is_finite() {
            return Err(ModelError::BadPotential {
                component,
                reason: "amplitude must be finite".into(),
            });
        }
        match self.kind {
            PotentialKind::Cosine if self.k <= 0.0 => Err(ModelError::BadPotential {
                component,
                reason: "cosine potential needs k > 0".into(),
            }),
            PotentialKind::GaussianPulse if self.width <= 0.0 => Err(ModelError::BadPotential {
                component,
                reason: "gaussian pulse needs width > 0".into(),
            }),
            _ => Ok(()),
        }
    }
}

/// Exclusion bound declared for the conserved momentum `p_xp`.
pub const PI_PLUS_EXCLUSION: f64 = 0.5;

/// Physical parameters of the built-in model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: f64,
    pub e: f64,
    /// Conserved light-front momentum sector used by the quantum module
    /// and as the default initial `p_xp`.
    pub pi_plus: f64,
    /// One entry per transverse component.
    pub potential: [PotentialSpec; 2],
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("mass must be positive, got {0}")]
    BadMass(f64),
    #[error("|pi_plus| must be at least {PI_PLUS_EXCLUSION}, got {0}")]
    BadPiPlus(f64),
    #[error("potential component {component}: {reason}")]
    BadPotential { component: usize, reason: String },
    #[error("closed-form trajectory supports zero/cosine potentials only (component {0} is a pulse); integrate numerically instead")]
    UnsupportedPotential(usize),
    #[error("velocity sample is not timelike (2 v+ v- - v_perp^2 = {0:.3e})")]
    NotTimelike(f64),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.m <= 0.0 || !self.m.is_finite() {
            return Err(ModelError::BadMass(self.m));
        }
        if self.pi_plus.abs() < PI_PLUS_EXCLUSION {
            return Err(ModelError::BadPiPlus(self.pi_plus));
        }
        for (i, p) in self.potential.iter().enumerate() {
            p.validate(i + 1)?;
        }
        Ok(())
    }

    /// Cosine drive in the first component; the shipped default.
    pub fn cosine_default() -> Self {
        ModelParams {
            m: 1.0,
            e: 1.0,
            pi_plus: -1.0,
            potential: [PotentialSpec::cosine(0.3, 1.0), PotentialSpec::zero()],
        }
    }

    pub fn free_particle() -> Self {
        ModelParams {
            m: 1.0,
            e: 0.0,
            pi_plus: -1.0,
            potential: [PotentialSpec::zero(), PotentialSpec::zero()],
        }
    }

    pub fn potential_at(&self, xm: f64) -> [f64; 2] {
        [self.potential[0].at(xm), self.potential[1].at(xm)]
    }
}

/// Emit the system-definition document for the given parameters.
pub fn plane_wave_document(params: &ModelParams) -> Result<SystemDocument, ModelError> {
    params.validate()?;
    let mut constants = BTreeMap::new();
    constants.insert("m".to_string(), params.m);
    constants.insert("e".to_string(), params.e);
    let mut definitions = BTreeMap::new();
    for (i, p) in params.potential.iter().enumerate() {
        let n = i + 1;
        let (amp, k, width) = (format!("a{}", n), format!("k{}", n), format!("w{}", n));
        match p.kind {
            PotentialKind::Zero => {}
            PotentialKind::Cosine => {
                constants.insert(amp.clone(), p.amplitude);
                constants.insert(k.clone(), p.k);
            }
            PotentialKind::GaussianPulse => {
                constants.insert(amp.clone(), p.amplitude);
                constants.insert(width.clone(), p.width);
            }
        }
        definitions.insert(format!("A{}", n), p.expression(&amp, &k, &width));
    }
    let mut hamiltonians = BTreeMap::new();
    hamiltonians.insert("tau".to_string(), "0".to_string());
    hamiltonians.insert(
        "xm".to_string(),
        "-(((p_x1+e*A1)^2+(p_x2+e*A2)^2+m^2)/(2*p_xp))".to_string(),
    );
    Ok(SystemDocument {
        name: "plane-wave".to_string(),
        coordinates: vec!["xp".into(), "x1".into(), "x2".into()],
        parameters: vec!["tau".into(), "xm".into()],
        constants,
        definitions,
        hamiltonians,
        singular: vec![SingularSpec {
            symbol: "p_xp".to_string(),
            exclude_abs_below: PI_PLUS_EXCLUSION,
        }],
    })
}

/// Build and load the system in one step.
pub fn plane_wave_system(params: &ModelParams) -> Result<ConstrainedSystem, ModelError> {
    Ok(ConstrainedSystem::load(&plane_wave_document(params)?)?)
}

/// Negative control: one coordinate, generators `p_q^2/2` and `q^2/2`
/// whose extended bracket is `-p_q*q`, so the flow is path-dependent.
pub fn nonintegrable_document() -> SystemDocument {
    SystemDocument {
        name: "nonintegrable-fixture".to_string(),
        coordinates: vec!["q".into()],
        parameters: vec!["tau".into(), "s1".into(), "s2".into()],
        constants: BTreeMap::new(),
        definitions: BTreeMap::new(),
        hamiltonians: [
            ("tau".to_string(), "0".to_string()),
            ("s1".to_string(), "p_q^2/2".to_string()),
            ("s2".to_string(), "q^2/2".to_string()),
        ]
        .into(),
        singular: Vec::new(),
    }
}

pub fn nonintegrable_fixture() -> ConstrainedSystem {
    ConstrainedSystem::load(&nonintegrable_document()).expect("fixture document is valid")
}

/// Exact endpoint of the flow for zero/cosine potentials from elementary
/// antiderivatives: momenta are constant,
/// `x_a` integrates `-(p_a + e A_a)/p_xp`,
/// `xp` integrates `((p_a + e A_a)^2 + m^2)/(2 p_xp^2)`,
/// `z` integrates `(Σ_a e A_a (p_a + e A_a) + m^2)/p_xp`,
/// and `p_xm` is set back on-surface at the endpoint.
pub fn quadrature_solution(
    params: &ModelParams,
    initial: &PhasePoint,
    x_minus_final: f64,
) -> Result<PhasePoint, ModelError> {
    params.validate()?;
    for (i, p) in params.potential.iter().enumerate() {
        if p.integral(0.0).is_none() {
            return Err(ModelError::UnsupportedPotential(i + 1));
        }
    }
    let sys = plane_wave_system(params)?;
    let (worst_param, dev) = initial.surface_deviation(&sys)?;
    if dev > 1e-9 {
        return Err(ModelError::Flow(FlowError::OffSurface {
            parameter: worst_param,
            deviation: dev,
        }));
    }

    let xm0 = initial.parameters[1];
    let xm1 = x_minus_final;
    let delta = xm1 - xm0;
    let pi_plus = initial.momenta[0];
    let e = params.e;
    let m = params.m;
    let p_perp = [initial.momenta[1], initial.momenta[2]];

    let mut x_perp = [initial.coordinates[1], initial.coordinates[2]];
    let mut xp = initial.coordinates[0];
    let mut z = initial.action;

    let mut quad_sum = m * m * delta; // ∫ ((p+eA)^2 + m^2), transverse terms added below
    let mut z_sum = m * m * delta; // ∫ (Σ e A (p+eA) + m^2)
    for a in 0..2 {
        let pot = &params.potential[a];
        let di1 = pot.integral(xm1).unwrap() - pot.integral(xm0).unwrap();
        let di2 = pot.integral_sq(xm1).unwrap() - pot.integral_sq(xm0).unwrap();
        let p = p_perp[a];
        x_perp[a] -= (p * delta + e * di1) / pi_plus;
        quad_sum += p * p * delta + 2.0 * p * e * di1 + e * e * di2;
        z_sum += e * p * di1 + e * e * di2;
    }
    xp += quad_sum / (2.0 * pi_plus * pi_plus);
    z += z_sum / pi_plus;

    // endpoint conjugate back on-surface
    let a_end = params.potential_at(xm1);
    let mut shell = m * m;
    for a in 0..2 {
        let c = p_perp[a] + e * a_end[a];
        shell += c * c;
    }
    let p_xm = shell / (2.0 * pi_plus);

    Ok(PhasePoint {
        parameters: vec![initial.parameters[0], xm1],
        coordinates: vec![xp, x_perp[0], x_perp[1]],
        momenta: vec![pi_plus, p_perp[0], p_perp[1]],
        conjugates: vec![initial.conjugates[0], p_xm],
        action: z,
    })
}

/// One sampled consistency record of the momentum definitions.
#[derive(Debug, Clone, Copy)]
pub struct LegendreSample {
    pub xm: f64,
    pub velocities: [f64; 4],
    pub pi_plus: f64,
    pub pi_minus: f64,
    pub pi_perp: [f64; 2],
    pub mass_shell_residual: f64,
    pub velocity_residual: f64,
    pub h_tau_residual: f64,
}

#[derive(Debug, Clone)]
pub struct LegendreReport {
    pub samples: Vec<LegendreSample>,
    pub max_mass_shell_residual: f64,
    pub max_velocity_residual: f64,
    pub max_h_tau_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Check, at seeded timelike velocity samples, that the momenta computed
/// from the Lagrangian satisfy (i) the light-front mass shell
/// `2 π_+ π_- = (π_a + e A_a)^2 + m^2`, (ii) the expressible-velocity
/// relations `v_+ = (π_-/π_+) v_-` and `v_a = -((π_a + e A_a)/π_+) v_-`,
/// and (iii) that the canonical generator of the primary parameter
/// vanishes identically.
pub fn verify_legendre(
    params: &ModelParams,
    samples: usize,
    seed: u64,
) -> Result<LegendreReport, ModelError> {
    params.validate()?;
    let tol = 1e-10;
    let mut rng = crate::rng::Rng::new(seed);
    let mut out = Vec::with_capacity(samples);
    let mut worst = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let xm = rng.uniform(-3.0, 3.0);
        let v_plus = rng.uniform(0.5, 2.0);
        let v_minus = rng.uniform(0.5, 2.0);
        // transverse bound keeps the sample strictly timelike
        let bound = 0.6 * (v_plus * v_minus).sqrt();
        let v1 = rng.uniform(-bound, bound);
        let v2 = rng.uniform(-bound, bound);
        let sample = legendre_sample(params, xm, [v_plus, v_minus, v1, v2])?;
        worst.0 = worst.0.max(sample.mass_shell_residual);
        worst.1 = worst.1.max(sample.velocity_residual);
        worst.2 = worst.2.max(sample.h_tau_residual);
        out.push(sample);
    }
    Ok(LegendreReport {
        samples: out,
        max_mass_shell_residual: worst.0,
        max_velocity_residual: worst.1,
        max_h_tau_residual: worst.2,
        tol,
        passed: worst.0 <= tol && worst.1 <= tol && worst.2 <= tol,
    })
}

/// Momenta and residuals at one velocity point `(v_+, v_-, v_1, v_2)`.
pub fn legendre_sample(
    params: &ModelParams,
    xm: f64,
    velocities: [f64; 4],
) -> Result<LegendreSample, ModelError> {
    let [v_plus, v_minus, v1, v2] = velocities;
    let m = params.m;
    let e = params.e;
    let a = params.potential_at(xm);
    let d2 = 2.0 * v_plus * v_minus - v1 * v1 - v2 * v2;
    if d2 <= 0.0 || v_minus == 0.0 {
        return Err(ModelError::NotTimelike(d2));
    }
    let d = d2.sqrt();
    let pi_plus = -m * v_minus / d;
    let pi_minus = -m * v_plus / d;
    let pi_perp = [m * v1 / d - e * a[0], m * v2 / d - e * a[1]];

    let kin1 = pi_perp[0] + e * a[0];
    let kin2 = pi_perp[1] + e * a[1];
    let shell = 2.0 * pi_plus * pi_minus - kin1 * kin1 - kin2 * kin2 - m * m;
    let mass_shell_residual = shell.abs() / (1.0 + m * m);

    let w_plus = pi_minus / pi_plus * v_minus;
    let w1 = -(kin1 / pi_plus) * v_minus;
    let w2 = -(kin2 / pi_plus) * v_minus;
    let velocity_residual = (w_plus - v_plus)
        .abs()
        .max((w1 - v1).abs())
        .max((w2 - v2).abs());

    // H_tau = -L + π_a w_a + π_+ w_+ - v_- H_xm with H_xm = -((π+eA)^2+m^2)/(2π_+)
    let lagrangian = -(m * d + e * (v1 * a[0] + v2 * a[1]));
    let h_xm = -((kin1 * kin1 + kin2 * kin2 + m * m) / (2.0 * pi_plus));
    let h_tau =
        -lagrangian + pi_perp[0] * v1 + pi_perp[1] * v2 + pi_plus * v_plus - v_minus * h_xm;
    let h_tau_residual = h_tau.abs() / (1.0 + lagrangian.abs());

    Ok(LegendreSample {
        xm,
        velocities,
        pi_plus,
        pi_minus,
        pi_perp,
        mass_shell_residual,
        velocity_residual,
        h_tau_residual,
    })
}
