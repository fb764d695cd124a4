//! Constrained-system definitions.
//!
//! A system is loaded from a structured document naming coordinates `q_a`,
//! evolution parameters `t_α` (the first is the primary one), constants,
//! nullary definitions, and one Hamiltonian `H_α(t_β, q_a, p_a)` per
//! parameter. Momentum symbols are generated as `p_` + name for both
//! coordinates and parameters; the extended Hamiltonians are
//! `H'_α = p_α + H_α`.

use crate::expr::{self, ConjugatePairs, Expr, Interval, SampleDomain};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Declared singular locus: sampling and integration must keep
/// `|symbol| >= exclude_abs_below`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpec {
    pub symbol: String,
    pub exclude_abs_below: f64,
}

/// On-disk system definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDocument {
    pub name: String,
    pub coordinates: Vec<String>,
    /// First entry is the primary evolution parameter.
    pub parameters: Vec<String>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub definitions: BTreeMap<String, String>,
    pub hamiltonians: BTreeMap<String, String>,
    #[serde(default)]
    pub singular: Vec<SingularSpec>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("system has no coordinates")]
    NoCoordinates,
    #[error("system has no parameters")]
    NoParameters,
    #[error("'{0}' is not a valid identifier")]
    BadIdentifier(String),
    #[error("symbol '{0}' declared more than once (or collides with a generated momentum symbol)")]
    SymbolCollision(String),
    #[error("missing Hamiltonian for parameter '{0}'")]
    MissingHamiltonian(String),
    #[error("Hamiltonian given for unknown parameter '{0}'")]
    UnknownHamiltonianKey(String),
    #[error("failed to parse {context}: {source}")]
    Parse { context: String, source: expr::ParseError },
    #[error("in {context}: {source}")]
    Calculus { context: String, source: expr::CalculusError },
    #[error("H_{parameter} references parameter conjugate '{symbol}' (Hamiltonians may depend on parameters, coordinates and coordinate momenta only)")]
    ConjugateInHamiltonian { parameter: String, symbol: String },
    #[error("H_{parameter} references unknown symbol '{symbol}'")]
    UnknownSymbol { parameter: String, symbol: String },
    #[error("singular declaration names unknown symbol '{0}'")]
    UnknownSingularSymbol(String),
}

/// A validated system with parsed and fully substituted Hamiltonians.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub name: String,
    pub coordinates: Vec<String>,
    pub parameters: Vec<String>,
    pub constants: BTreeMap<String, f64>,
    pub definitions: BTreeMap<String, Expr>,
    /// `H_α` with definitions and constants substituted, aligned with
    /// `parameters`.
    pub hamiltonians: Vec<Expr>,
    /// `H_α` exactly as written in the document, aligned with `parameters`.
    pub hamiltonians_raw: Vec<Expr>,
    pub singular: Vec<SingularSpec>,
    /// Generated momentum symbols for coordinates, aligned with `coordinates`.
    pub momenta: Vec<String>,
    /// Generated conjugate symbols for parameters, aligned with `parameters`.
    pub conjugates: Vec<String>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn momentum_symbol(name: &str) -> String {
    format!("p_{}", name)
}

impl ConstrainedSystem {
    /// Validate a document and build the working system.
    pub fn load(doc: &SystemDocument) -> Result<Self, SystemError> {
        if doc.coordinates.is_empty() {
            return Err(SystemError::NoCoordinates);
        }
        if doc.parameters.is_empty() {
            return Err(SystemError::NoParameters);
        }

        let momenta: Vec<String> = doc.coordinates.iter().map(|c| momentum_symbol(c)).collect();
        let conjugates: Vec<String> = doc.parameters.iter().map(|p| momentum_symbol(p)).collect();

        // all user symbols and generated momenta must be distinct identifiers
        let mut seen = std::collections::BTreeSet::new();
        let user_symbols = doc
            .coordinates
            .iter()
            .chain(doc.parameters.iter())
            .chain(doc.constants.keys())
            .chain(doc.definitions.keys());
        for s in user_symbols {
            if !is_identifier(s) {
                return Err(SystemError::BadIdentifier(s.clone()));
            }
            if !seen.insert(s.clone()) {
                return Err(SystemError::SymbolCollision(s.clone()));
            }
        }
        for s in momenta.iter().chain(conjugates.iter()) {
            if !seen.insert(s.clone()) {
                return Err(SystemError::SymbolCollision(s.clone()));
            }
        }

        for key in doc.hamiltonians.keys() {
            if !doc.parameters.contains(key) {
                return Err(SystemError::UnknownHamiltonianKey(key.clone()));
            }
        }

        let definitions: BTreeMap<String, Expr> = doc
            .definitions
            .iter()
            .map(|(name, text)| {
                expr::parse(text)
                    .map(|e| (name.clone(), e))
                    .map_err(|source| SystemError::Parse {
                        context: format!("definition '{}'", name),
                        source,
                    })
            })
            .collect::<Result<_, _>>()?;

        let constant_exprs: BTreeMap<String, Expr> = doc
            .constants
            .iter()
            .map(|(name, value)| (name.clone(), Expr::Number(*value)))
            .collect();

        let mut hamiltonians_raw = Vec::new();
        let mut hamiltonians = Vec::new();
        for param in &doc.parameters {
            let text = doc
                .hamiltonians
                .get(param)
                .ok_or_else(|| SystemError::MissingHamiltonian(param.clone()))?;
            let context = format!("hamiltonian H_{}", param);
            let raw = expr::parse(text).map_err(|source| SystemError::Parse {
                context: context.clone(),
                source,
            })?;
            let expanded = expr::substitute(&raw, &definitions)
                .and_then(|e| expr::substitute(&e, &constant_exprs))
                .map_err(|source| SystemError::Calculus {
                    context: context.clone(),
                    source,
                })?;

            // after substitution, every free symbol must be a coordinate,
            // a coordinate momentum, or a parameter — never a conjugate
            for sym in expanded.free_symbols() {
                if conjugates.contains(&sym) {
                    return Err(SystemError::ConjugateInHamiltonian {
                        parameter: param.clone(),
                        symbol: sym,
                    });
                }
                let known = doc.coordinates.contains(&sym)
                    || momenta.contains(&sym)
                    || doc.parameters.contains(&sym);
                if !known {
                    return Err(SystemError::UnknownSymbol {
                        parameter: param.clone(),
                        symbol: sym,
                    });
                }
            }
            hamiltonians_raw.push(raw);
            hamiltonians.push(expanded);
        }

        for spec in &doc.singular {
            let known = doc.coordinates.contains(&spec.symbol)
                || momenta.contains(&spec.symbol)
                || conjugates.contains(&spec.symbol)
                || doc.parameters.contains(&spec.symbol);
            if !known {
                return Err(SystemError::UnknownSingularSymbol(spec.symbol.clone()));
            }
        }

        Ok(ConstrainedSystem {
            name: doc.name.clone(),
            coordinates: doc.coordinates.clone(),
            parameters: doc.parameters.clone(),
            constants: doc.constants.clone(),
            definitions,
            hamiltonians,
            hamiltonians_raw,
            singular: doc.singular.clone(),
            momenta,
            conjugates,
        })
    }

    /// `H'_α = p_α + H_α` for every parameter, in parameter order.
    pub fn extended_hamiltonians(&self) -> Vec<(String, Expr)> {
        self.parameters
            .iter()
            .zip(self.conjugates.iter())
            .zip(self.hamiltonians.iter())
            .map(|((param, conj), h)| {
                let hp = Expr::Add(
                    Expr::symbol(conj.clone()).into(),
                    h.clone().into(),
                );
                (param.clone(), hp)
            })
            .collect()
    }

    /// All conjugate pairs: coordinate pairs first, then parameter pairs.
    pub fn conjugate_pairs(&self) -> ConjugatePairs {
        let mut pairs: Vec<(String, String)> = self
            .coordinates
            .iter()
            .zip(self.momenta.iter())
            .map(|(q, p)| (q.clone(), p.clone()))
            .collect();
        pairs.extend(
            self.parameters
                .iter()
                .zip(self.conjugates.iter())
                .map(|(t, p)| (t.clone(), p.clone())),
        );
        ConjugatePairs::new(pairs).expect("validated symbols cannot collide")
    }

    /// Default sampling domain: every symbol in `[-2, 2]`, with declared
    /// singular bands excluded.
    pub fn sample_domain(&self) -> SampleDomain {
        let mut d = SampleDomain::new();
        let all = self
            .coordinates
            .iter()
            .chain(self.momenta.iter())
            .chain(self.parameters.iter())
            .chain(self.conjugates.iter());
        for sym in all {
            d.set(sym.clone(), Interval::new(-2.0, 2.0));
        }
        for spec in &self.singular {
            let ex = spec.exclude_abs_below;
            d.set(
                spec.symbol.clone(),
                Interval::with_exclusion(-2.0, 2.0, ex),
            );
        }
        d
    }

    pub fn exclusion_bound(&self, symbol: &str) -> Option<f64> {
        self.singular
            .iter()
            .find(|s| s.symbol == symbol)
            .map(|s| s.exclude_abs_below)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, is_zero, Bindings};

    fn plane_wave_doc() -> SystemDocument {
        serde_json::from_str(
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
        .unwrap()
    }

    #[test]
    fn plane_wave_document_loads() {
        let sys = ConstrainedSystem::load(&plane_wave_doc()).unwrap();
        assert_eq!(sys.coordinates, vec!["xp", "x1", "x2"]);
        assert_eq!(sys.parameters, vec!["tau", "xm"]);
        assert_eq!(sys.momenta, vec!["p_xp", "p_x1", "p_x2"]);
        assert_eq!(sys.conjugates, vec!["p_tau", "p_xm"]);

        // substituted H_xm at a known point: A1(0) = 0.3, e = 1, m = 1
        let b = Bindings::from_pairs(&[("p_x1", 0.0), ("p_x2", 0.0), ("p_xp", -1.0), ("xm", 0.0)]);
        let h_xm = &sys.hamiltonians[1];
        let expect = ((0.3f64).powi(2) + 1.0) / 2.0;
        assert!((evaluate(h_xm, &b).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn extended_hamiltonian_is_conjugate_plus_hamiltonian() {
        let sys = ConstrainedSystem::load(&plane_wave_doc()).unwrap();
        let ext = sys.extended_hamiltonians();
        assert_eq!(ext[0].0, "tau");

        // H'_tau = p_tau since H_tau = 0
        let b = Bindings::from_pairs(&[("p_tau", 0.7)]);
        assert_eq!(evaluate(&ext[0].1, &b).unwrap(), 0.7);

        // H'_xm - p_xm - H_xm vanishes over the sampled domain
        let hp_minus_parts = Expr::Sub(
            Expr::Sub(ext[1].1.clone().into(), Expr::symbol("p_xm").into()).into(),
            sys.hamiltonians[1].clone().into(),
        );
        let v = is_zero(&hp_minus_parts, &sys.sample_domain(), 20, 42, 1e-9).unwrap();
        assert!(v.is_zero);
    }

    #[test]
    fn free_particle_hamiltonian_loses_potential_dependence() {
        let mut doc = plane_wave_doc();
        doc.constants.insert("e".into(), 0.0);
        let sys = ConstrainedSystem::load(&doc).unwrap();
        // with e = 0, H_xm no longer depends on xm
        let dh = expr::differentiate(&sys.hamiltonians[1], "xm").unwrap();
        let v = is_zero(&dh, &sys.sample_domain(), 20, 42, 1e-9).unwrap();
        assert!(v.is_zero);
    }

    #[test]
    fn hamiltonian_mentioning_conjugate_rejected() {
        let mut doc = plane_wave_doc();
        doc.hamiltonians.insert("tau".into(), "p_tau".into());
        match ConstrainedSystem::load(&doc) {
            Err(SystemError::ConjugateInHamiltonian { parameter, symbol }) => {
                assert_eq!(parameter, "tau");
                assert_eq!(symbol, "p_tau");
            }
            other => panic!("expected conjugate rejection, got {:?}", other),
        }
    }

    #[test]
    fn missing_hamiltonian_rejected() {
        let mut doc = plane_wave_doc();
        doc.hamiltonians.remove("tau");
        assert!(matches!(
            ConstrainedSystem::load(&doc),
            Err(SystemError::MissingHamiltonian(_))
        ));
    }

    #[test]
    fn symbol_collision_with_generated_momentum_rejected() {
        let mut doc = plane_wave_doc();
        doc.coordinates.push("p_xp".into());
        doc.hamiltonians
            .insert("xm".into(), "p_xp".into());
        assert!(matches!(
            ConstrainedSystem::load(&doc),
            Err(SystemError::SymbolCollision(_))
        ));
    }

    #[test]
    fn unknown_symbol_rejected() {
        let mut doc = plane_wave_doc();
        doc.hamiltonians.insert("tau".into(), "zz + 1".into());
        assert!(matches!(
            ConstrainedSystem::load(&doc),
            Err(SystemError::UnknownSymbol { .. })
        ));
    }
}
