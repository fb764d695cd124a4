//! Integrability analysis of the extended constraint algebra.
//!
//! The multi-parameter equations of motion are integrable exactly when all
//! extended brackets `{H'_α, H'_β}` vanish. The matrix of these brackets is
//! tested two ways: over free sampling of the whole phase space, and with
//! the parameter conjugates bound on-surface (`p_α := -H_α`), which
//! parametrizes the constraint surface exactly without root-finding.

use crate::expr::{
    self, evaluate, evaluate_with_magnitude, is_zero, Bindings, Expr, Interval, SampleDomain,
    ZeroError, ZeroVerdict,
};
use crate::rng::Rng;
use crate::system::ConstrainedSystem;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Every bracket vanishes identically.
    AbelianFirstClass,
    /// Every bracket vanishes on the constraint surface, some not identically.
    FirstClassOnSurface,
    /// Some bracket survives even on-surface.
    NotIntegrable,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::AbelianFirstClass => write!(f, "abelian-first-class"),
            Classification::FirstClassOnSurface => write!(f, "first-class-on-surface"),
            Classification::NotIntegrable => write!(f, "not-integrable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrabilityError {
    #[error("bracket construction failed: {0}")]
    Calculus(#[from] expr::CalculusError),
    #[error("zero test failed: {0}")]
    Zero(#[from] ZeroError),
}

/// Full bracket matrix with both zero verdicts.
#[derive(Debug, Clone)]
pub struct IntegrabilityReport {
    pub parameters: Vec<String>,
    /// Entry `(α, β)` is the extended bracket `{H'_α, H'_β}`.
    pub bracket_matrix: Vec<Vec<Expr>>,
    pub zero_identically: Vec<Vec<bool>>,
    pub zero_on_surface: Vec<Vec<bool>>,
    /// Witness for entries failing the free-sampling test.
    pub witnesses: Vec<Vec<Option<(Bindings, f64)>>>,
    pub classification: Classification,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
}

/// Evaluate a zero test with conjugates bound on-surface at each sample:
/// draw `(t, q, p)` from the domain, set `p_α := -H_α(t, q, p)`, evaluate.
pub fn is_zero_on_surface(
    e: &Expr,
    sys: &ConstrainedSystem,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<ZeroVerdict, ZeroError> {
    if samples == 0 {
        return Err(ZeroError::NoSamples);
    }
    // sample only coordinates, momenta and parameters
    let full = sys.sample_domain();
    let mut base = SampleDomain::new();
    for sym in sys
        .coordinates
        .iter()
        .chain(sys.momenta.iter())
        .chain(sys.parameters.iter())
    {
        let interval = full
            .0
            .get(sym)
            .copied()
            .unwrap_or(Interval::new(-2.0, 2.0));
        base.set(sym.clone(), interval);
    }
    let mut rng = Rng::new(seed);
    for _ in 0..samples {
        let mut b = base.sample(&mut rng);
        for (conj, h) in sys.conjugates.iter().zip(sys.hamiltonians.iter()) {
            let value = evaluate(h, &b).map_err(|source| ZeroError::Evaluation {
                point: b.0.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                source,
            })?;
            b.set(conj.clone(), -value);
        }
        let (value, scale) =
            evaluate_with_magnitude(e, &b).map_err(|source| ZeroError::Evaluation {
                point: b.0.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                source,
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

fn classify_flags(identically: &[Vec<bool>], on_surface: &[Vec<bool>]) -> Classification {
    let all_ident = identically.iter().flatten().all(|&x| x);
    let all_surface = on_surface.iter().flatten().all(|&x| x);
    if all_ident {
        Classification::AbelianFirstClass
    } else if all_surface {
        Classification::FirstClassOnSurface
    } else {
        Classification::NotIntegrable
    }
}

/// Build the extended bracket matrix and test every entry for vanishing,
/// both identically and on the constraint surface. Deterministic for a
/// fixed seed.
pub fn integrability_matrix(
    sys: &ConstrainedSystem,
    seed: u64,
    samples: usize,
    tol: f64,
) -> Result<IntegrabilityReport, IntegrabilityError> {
    let pairs = sys.conjugate_pairs();
    let ext = sys.extended_hamiltonians();
    let n = ext.len();
    let domain = sys.sample_domain();

    let mut bracket_matrix = Vec::with_capacity(n);
    let mut zero_identically = vec![vec![false; n]; n];
    let mut zero_on_surface = vec![vec![false; n]; n];
    let mut witnesses: Vec<Vec<Option<(Bindings, f64)>>> = vec![vec![None; n]; n];

    for alpha in 0..n {
        let mut row = Vec::with_capacity(n);
        for beta in 0..n {
            row.push(expr::poisson_bracket(&ext[alpha].1, &ext[beta].1, &pairs)?);
        }
        bracket_matrix.push(row);
    }

    for alpha in 0..n {
        for beta in 0..n {
            let entry = &bracket_matrix[alpha][beta];
            let free = is_zero(entry, &domain, samples, seed, tol)?;
            zero_identically[alpha][beta] = free.is_zero;
            let surface = is_zero_on_surface(entry, sys, samples, seed, tol)?;
            zero_on_surface[alpha][beta] = surface.is_zero;
            witnesses[alpha][beta] = free.witness.or(surface.witness);
        }
    }

    let classification = classify_flags(&zero_identically, &zero_on_surface);
    Ok(IntegrabilityReport {
        parameters: sys.parameters.clone(),
        bracket_matrix,
        zero_identically,
        zero_on_surface,
        witnesses,
        classification,
        seed,
        samples,
        tol,
    })
}

impl IntegrabilityReport {
    /// Re-derive the classification from the stored flags and render a
    /// human-readable summary including nonzero entries and witnesses.
    pub fn classify(&self) -> (Classification, String) {
        let classification = classify_flags(&self.zero_identically, &self.zero_on_surface);
        let mut out = String::new();
        out.push_str(&format!("classification: {}\n", classification));
        out.push_str(&format!(
            "zero test: {} samples, tol {:e}, seed {}\n",
            self.samples, self.tol, self.seed
        ));
        let n = self.parameters.len();
        for alpha in 0..n {
            for beta in 0..n {
                let name_a = &self.parameters[alpha];
                let name_b = &self.parameters[beta];
                let ident = self.zero_identically[alpha][beta];
                let surf = self.zero_on_surface[alpha][beta];
                let status = if ident {
                    "zero identically".to_string()
                } else if surf {
                    "zero on-surface only".to_string()
                } else {
                    "NONZERO".to_string()
                };
                out.push_str(&format!("  {{H'_{}, H'_{}}}: {}", name_a, name_b, status));
                if !ident {
                    if let Some((b, value)) = &self.witnesses[alpha][beta] {
                        let point: Vec<String> =
                            b.0.iter().map(|(k, v)| format!("{}={:.6}", k, v)).collect();
                        out.push_str(&format!(
                            "  (witness value {:.6e} at {})",
                            value,
                            point.join(", ")
                        ));
                    }
                }
                out.push('\n');
            }
        }
        (classification, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::system::SystemDocument;

    fn load(doc: &str) -> ConstrainedSystem {
        let doc: SystemDocument = serde_json::from_str(doc).unwrap();
        ConstrainedSystem::load(&doc).unwrap()
    }

    fn plane_wave() -> ConstrainedSystem {
        load(
            r#"{
            "name": "plane-wave",
            "coordinates": ["xp", "x1", "x2"],
            "parameters": ["tau", "xm"],
            "constants": {"m": 1.0, "e": 1.0, "a": 0.3, "k": 1.0},
            "definitions": {"A1": "a*cos(k*xm)", "A2": "0"},
            "hamiltonians": {
                "tau": "0",
                "xm": "-(((p_x1+e*A1)^2+(p_x2+e*A2)^2+m^2)/(2*p_xp))"
            },
            "singular": [{"symbol": "p_xp", "exclude_abs_below": 0.5}]
        }"#,
        )
    }

    fn nonintegrable() -> ConstrainedSystem {
        load(
            r#"{
            "name": "fixture",
            "coordinates": ["q"],
            "parameters": ["tau", "s1", "s2"],
            "hamiltonians": {"tau": "0", "s1": "p_q^2/2", "s2": "q^2/2"}
        }"#,
        )
    }

    #[test]
    fn plane_wave_is_abelian_first_class() {
        let report = integrability_matrix(&plane_wave(), 42, 20, 1e-9).unwrap();
        assert_eq!(report.classification, Classification::AbelianFirstClass);
        assert!(report.zero_identically.iter().flatten().all(|&x| x));
    }

    #[test]
    fn fixture_bracket_matches_finite_difference_oracle() {
        let sys = nonintegrable();
        let report = integrability_matrix(&sys, 42, 20, 1e-9).unwrap();
        assert_eq!(report.classification, Classification::NotIntegrable);

        // {H'_s1, H'_s2} should equal -p_q*q; check against a central
        // finite-difference bracket of the extended Hamiltonians
        let entry = &report.bracket_matrix[1][2];
        let ext = sys.extended_hamiltonians();
        let pairs: Vec<(String, String)> = sys
            .coordinates
            .iter()
            .zip(sys.momenta.iter())
            .map(|(a, b)| (a.clone(), b.clone()))
            .chain(
                sys.parameters
                    .iter()
                    .zip(sys.conjugates.iter())
                    .map(|(a, b)| (a.clone(), b.clone())),
            )
            .collect();

        let mut b = Bindings::new();
        for (q, p) in &pairs {
            b.set(q.clone(), 0.7);
            b.set(p.clone(), -1.3);
        }
        let h = 1e-5;
        let mut fd = 0.0;
        for (q, p) in &pairs {
            let partial = |expr: &Expr, sym: &str| {
                let mut bp = b.clone();
                bp.set(sym.to_string(), b.get(sym).unwrap() + h);
                let mut bm = b.clone();
                bm.set(sym.to_string(), b.get(sym).unwrap() - h);
                (evaluate(expr, &bp).unwrap() - evaluate(expr, &bm).unwrap()) / (2.0 * h)
            };
            fd += partial(&ext[1].1, q) * partial(&ext[2].1, p)
                - partial(&ext[1].1, p) * partial(&ext[2].1, q);
        }
        let symbolic = evaluate(entry, &b).unwrap();
        assert!((symbolic - fd).abs() < 1e-8, "symbolic {} vs fd {}", symbolic, fd);
        // and the hand result -p_q*q = -(-1.3)*0.7
        assert!((symbolic - 0.91).abs() < 1e-12);

        let (_, summary) = report.classify();
        assert!(summary.contains("NONZERO"));
    }

    #[test]
    fn single_parameter_quadratic_system_is_integrable() {
        let sys = load(
            r#"{
            "name": "oscillator",
            "coordinates": ["q"],
            "parameters": ["t"],
            "hamiltonians": {"t": "p_q^2/2 + q^2/2"}
        }"#,
        );
        let report = integrability_matrix(&sys, 42, 20, 1e-9).unwrap();
        assert_eq!(report.bracket_matrix.len(), 1);
        assert_eq!(report.classification, Classification::AbelianFirstClass);
    }

    #[test]
    fn bracket_matrix_is_antisymmetric() {
        for sys in [plane_wave(), nonintegrable()] {
            let report = integrability_matrix(&sys, 42, 20, 1e-9).unwrap();
            let n = report.parameters.len();
            let domain = sys.sample_domain();
            for a in 0..n {
                for b in 0..n {
                    let sum = Expr::Add(
                        report.bracket_matrix[a][b].clone().into(),
                        report.bracket_matrix[b][a].clone().into(),
                    );
                    let v = is_zero(&sum, &domain, 20, 42, 1e-9).unwrap();
                    assert!(v.is_zero, "antisymmetry failed at ({}, {})", a, b);
                }
            }
        }
    }

    #[test]
    fn conjugate_partials_of_extended_hamiltonians_are_kronecker() {
        let sys = plane_wave();
        let ext = sys.extended_hamiltonians();
        let domain = sys.sample_domain();
        for (i, (_, hp)) in ext.iter().enumerate() {
            for (j, conj) in sys.conjugates.iter().enumerate() {
                let d = expr::differentiate(hp, conj).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                let shifted = Expr::Sub(d.into(), Expr::Number(expected).into());
                let v = is_zero(&shifted, &domain, 20, 42, 1e-9).unwrap();
                assert!(v.is_zero);
            }
        }
    }

    #[test]
    fn synthetic_surface_proportional_report_classifies_on_surface() {
        // classify() judges a report by its flags; build one whose bracket
        // entry is proportional to an extended Hamiltonian, which vanishes
        // on-surface but not identically
        let sys = nonintegrable();
        let entry = parse("q*(p_s2 + q^2/2)").unwrap();
        let free = is_zero(&entry, &sys.sample_domain(), 20, 42, 1e-9).unwrap();
        let surf = is_zero_on_surface(&entry, &sys, 20, 42, 1e-9).unwrap();
        assert!(!free.is_zero);
        assert!(surf.is_zero);
        assert_eq!(
            classify_flags(&[vec![free.is_zero]], &[vec![surf.is_zero]]),
            Classification::FirstClassOnSurface
        );
    }
}
