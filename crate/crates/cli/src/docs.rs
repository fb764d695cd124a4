//! On-disk document formats consumed by the CLI.

use hjflow_core::flow::{ParameterPath, PhasePoint};
use hjflow_core::planewave::ModelParams;
use hjflow_core::ConstrainedSystem;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Initial-state document. Conjugates are either given explicitly or
/// requested on-surface.
#[derive(Debug, Clone, Deserialize)]
pub struct InitialStateDoc {
    pub coordinates: BTreeMap<String, f64>,
    pub momenta: BTreeMap<String, f64>,
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub conjugates: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub on_surface: Option<bool>,
}

impl InitialStateDoc {
    pub fn into_phase_point(self, sys: &ConstrainedSystem) -> Result<PhasePoint, String> {
        let grab = |map: &BTreeMap<String, f64>, names: &[String], what: &str| -> Result<Vec<f64>, String> {
            names
                .iter()
                .map(|n| {
                    map.get(n)
                        .copied()
                        .ok_or_else(|| format!("initial state is missing {} '{}'", what, n))
                })
                .collect()
        };
        for key in self.coordinates.keys() {
            if !sys.coordinates.contains(key) {
                return Err(format!("initial state names unknown coordinate '{}'", key));
            }
        }
        for key in self.momenta.keys() {
            if !sys.momenta.contains(key) {
                return Err(format!("initial state names unknown momentum '{}'", key));
            }
        }
        for key in self.parameters.keys() {
            if !sys.parameters.contains(key) {
                return Err(format!("initial state names unknown parameter '{}'", key));
            }
        }
        let coordinates = grab(&self.coordinates, &sys.coordinates, "coordinate")?;
        let momenta = grab(&self.momenta, &sys.momenta, "momentum")?;
        let parameters = grab(&self.parameters, &sys.parameters, "parameter")?;
        match (self.conjugates, self.on_surface) {
            (Some(conj), None) | (Some(conj), Some(false)) => {
                let conjugates = grab(&conj, &sys.conjugates, "conjugate")?;
                PhasePoint::explicit(sys, parameters, coordinates, momenta, conjugates)
                    .map_err(|e| e.to_string())
            }
            (None, Some(true)) | (None, None) => {
                PhasePoint::on_surface(sys, parameters, coordinates, momenta)
                    .map_err(|e| e.to_string())
            }
            (Some(_), Some(true)) => {
                Err("initial state gives both explicit conjugates and on_surface=true".into())
            }
            (None, Some(false)) => {
                Err("initial state needs either conjugates or on_surface=true".into())
            }
        }
    }
}

/// Path document: waypoints as parameter-name maps.
#[derive(Debug, Clone, Deserialize)]
pub struct PathDoc {
    pub waypoints: Vec<BTreeMap<String, f64>>,
}

impl PathDoc {
    pub fn into_path(self, sys: &ConstrainedSystem) -> Result<ParameterPath, String> {
        let mut rows = Vec::with_capacity(self.waypoints.len());
        for (i, w) in self.waypoints.iter().enumerate() {
            for key in w.keys() {
                if !sys.parameters.contains(key) {
                    return Err(format!("waypoint {} names unknown parameter '{}'", i, key));
                }
            }
            let row: Result<Vec<f64>, String> = sys
                .parameters
                .iter()
                .map(|p| {
                    w.get(p)
                        .copied()
                        .ok_or_else(|| format!("waypoint {} is missing parameter '{}'", i, p))
                })
                .collect();
            rows.push(row?);
        }
        ParameterPath::new(rows).map_err(|e| e.to_string())
    }
}

/// Quantum-run document.
#[derive(Debug, Clone, Deserialize)]
pub struct QuantumRunDoc {
    pub model: ModelParams,
    pub grid: GridDoc,
    pub initial: PacketDoc,
    pub range: RangeDoc,
    pub steps: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GridDoc {
    pub d: usize,
    pub n: usize,
    pub l: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PacketDoc {
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    pub momentum: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RangeDoc {
    pub from: f64,
    pub to: f64,
}

/// Provenance block attached to reports so published numbers are
/// reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub threads: usize,
    pub command: String,
}

impl Provenance {
    pub fn new(seed: u64, samples: usize, tol: f64, threads: usize) -> Self {
        Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            samples,
            tol,
            threads,
            command: std::env::args().collect::<Vec<_>>().join(" "),
        }
    }

    pub fn println(&self) {
        println!(
            "provenance: version={} seed={} samples={} tol={:e} threads={}",
            self.version, self.seed, self.samples, self.tol, self.threads
        );
    }
}
