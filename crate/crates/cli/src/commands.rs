//! Subcommand implementations.

use crate::docs::{InitialStateDoc, PathDoc, Provenance, QuantumRunDoc};
use crate::failure::Failure;
use crate::output;
use hjflow_core::expr;
use hjflow_core::flow::{dirac_reference, integrate, path_independence_check};
use hjflow_core::integrability::{integrability_matrix, Classification};
use hjflow_core::quantum::{
    apply_kernel, ehrenfest_compare, evolve_splitstep, slice_width_bound, sliced_kernel, GridSpec,
    WaveGrid,
};
use hjflow_core::{ConstrainedSystem, SystemDocument};
use serde::de::DeserializeOwned;
use std::path::Path;

/// Ehrenfest acceptance threshold for `quantum --compare-classical`.
const EHRENFEST_LIMIT: f64 = 1e-5;
/// Norm-drift threshold for quantum runs.
const NORM_DRIFT_LIMIT: f64 = 1e-10;
/// Single-slice-count kernel runs pass if the distance is already small.
const KERNEL_DIRECT_LIMIT: f64 = 1e-6;
/// Multi-slice kernel runs pass if the fitted convergence order reaches this.
const KERNEL_ORDER_LIMIT: f64 = 0.9;

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read '{}': {}", path.display(), e)))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("cannot parse '{}': {}", path.display(), e)))
}

fn load_system(path: &Path) -> Result<ConstrainedSystem, Failure> {
    let doc: SystemDocument = read_json(path)?;
    ConstrainedSystem::load(&doc).map_err(|e| Failure::input(e.to_string()))
}

pub fn analyze(
    system: &Path,
    seed: u64,
    samples: usize,
    tol: f64,
    report_path: Option<&Path>,
) -> Result<(), Failure> {
    let sys = load_system(system)?;
    let report = integrability_matrix(&sys, seed, samples, tol)
        .map_err(|e| Failure::input(e.to_string()))?;

    println!("system: {}", sys.name);
    println!("extended hamiltonians:");
    for (param, hp) in sys.extended_hamiltonians() {
        println!("  H'_{} = {}", param, hp);
    }
    let (classification, summary) = report.classify();
    print!("{}", summary);
    Provenance::new(seed, samples, tol, 1).println();

    if let Some(path) = report_path {
        let entries: Vec<serde_json::Value> = (0..report.parameters.len())
            .flat_map(|a| (0..report.parameters.len()).map(move |b| (a, b)))
            .map(|(a, b)| {
                serde_json::json!({
                    "alpha": report.parameters[a],
                    "beta": report.parameters[b],
                    "bracket": report.bracket_matrix[a][b].to_string(),
                    "zero_identically": report.zero_identically[a][b],
                    "zero_on_surface": report.zero_on_surface[a][b],
                    "witness": report.witnesses[a][b].as_ref().map(|(bind, value)| {
                        serde_json::json!({
                            "point": bind.0,
                            "value": value,
                        })
                    }),
                })
            })
            .collect();
        let doc = serde_json::json!({
            "system": sys.name,
            "classification": classification.to_string(),
            "entries": entries,
            "provenance": Provenance::new(seed, samples, tol, 1),
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap() + "\n")
            .map_err(|e| Failure::input(format!("cannot write '{}': {}", path.display(), e)))?;
    }

    match classification {
        Classification::NotIntegrable => Err(Failure::scientific(
            "system is not integrable (see witnesses above)",
        )),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Canonical,
    Dirac,
}

#[allow(clippy::too_many_arguments)]
pub fn evolve(
    system: &Path,
    initial: &Path,
    path: &Path,
    steps: usize,
    method: Method,
    gauge: Option<&str>,
    allow_off_surface: bool,
    tol: f64,
    out: &Path,
) -> Result<(), Failure> {
    let sys = load_system(system)?;
    let initial_doc: InitialStateDoc = read_json(initial)?;
    let path_doc: PathDoc = read_json(path)?;
    let start = initial_doc.into_phase_point(&sys).map_err(Failure::input)?;
    let ppath = path_doc.into_path(&sys).map_err(Failure::input)?;

    let (record, lambdas) = match method {
        Method::Canonical => {
            let record = integrate(&sys, &start, &ppath, steps, allow_off_surface)?;
            (record, None)
        }
        Method::Dirac => {
            let gauge_text =
                gauge.ok_or_else(|| Failure::input("--method dirac requires --gauge EXPR"))?;
            let gauge_expr =
                expr::parse(gauge_text).map_err(|e| Failure::input(format!("gauge: {}", e)))?;
            if sys.parameters.len() != 2 {
                return Err(Failure::input(
                    "the dirac method needs exactly one non-primary parameter",
                ));
            }
            if !allow_off_surface {
                let (parameter, deviation) = start.surface_deviation(&sys)?;
                if deviation > 1e-9 {
                    return Err(Failure::input(format!(
                        "initial point is off-surface: |p_{} + H_{}| = {:.3e} (pass --allow-off-surface to proceed)",
                        parameter, parameter, deviation
                    )));
                }
            }
            let constraint = sys.extended_hamiltonians()[1].1.clone();
            let tau_range = (ppath.first()[0], ppath.last()[0]);
            for (a, b) in start.parameters.iter().zip(ppath.first().iter()) {
                if (a - b).abs() > 1e-12 {
                    return Err(Failure::input(
                        "initial parameter values do not match the path's first waypoint",
                    ));
                }
            }
            let run = dirac_reference(&sys, &constraint, &gauge_expr, &start, tau_range, steps)?;
            (run.record, Some(run.lambdas))
        }
    };

    output::trajectory_csv(out, &sys, &record, lambdas.as_deref())?;
    let max_hprime = record.max_abs_hprime();
    println!("steps: {}", steps);
    println!("max |H'_alpha| along run: {:.3e}", max_hprime);
    if let Some(ls) = &lambdas {
        let lmin = ls.iter().cloned().fold(f64::INFINITY, f64::min);
        let lmax = ls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("lambda range: [{}, {}]", lmin, lmax);
    }
    println!("trajectory written to {}", out.display());
    if max_hprime > tol && !allow_off_surface {
        return Err(Failure::scientific(format!(
            "constraint violation {:.3e} exceeds tolerance {:.3e}",
            max_hprime, tol
        )));
    }
    Ok(())
}

pub fn check(
    system: &Path,
    initial: &Path,
    path_a: &Path,
    path_b: &Path,
    steps: usize,
    tol: f64,
) -> Result<(), Failure> {
    let sys = load_system(system)?;
    let initial_doc: InitialStateDoc = read_json(initial)?;
    let a_doc: PathDoc = read_json(path_a)?;
    let b_doc: PathDoc = read_json(path_b)?;
    let start = initial_doc.into_phase_point(&sys).map_err(Failure::input)?;
    let a = a_doc.into_path(&sys).map_err(Failure::input)?;
    let b = b_doc.into_path(&sys).map_err(Failure::input)?;

    let result = path_independence_check(&sys, &start, &a, &b, steps)?;
    println!("endpoint discrepancies over {} steps per path:", steps);
    for (name, d) in &result.per_variable {
        println!("  {:<12} {:.3e}", name, d);
    }
    println!("max discrepancy: {:.3e} (tolerance {:.3e})", result.max_discrepancy, tol);
    if result.max_discrepancy < tol {
        Ok(())
    } else {
        Err(Failure::scientific(format!(
            "endpoints differ by {:.3e}: the flow is path-dependent at this tolerance",
            result.max_discrepancy
        )))
    }
}

fn build_packet(doc: &QuantumRunDoc) -> Result<WaveGrid, Failure> {
    let spec = GridSpec {
        d: doc.grid.d,
        n: doc.grid.n,
        l: doc.grid.l,
    };
    Ok(WaveGrid::gaussian(
        spec,
        doc.model.pi_plus,
        doc.range.from,
        &doc.initial.center,
        &doc.initial.width,
        &doc.initial.momentum,
    )?)
}

/// Per-step resolution guard shared with the sliced kernel: the in-band
/// transport per step must stay within the half box.
fn step_resolution_guard(doc: &QuantumRunDoc) -> Result<(), Failure> {
    let h = (doc.range.to - doc.range.from).abs() / doc.steps.max(1) as f64;
    let bound = slice_width_bound(doc.grid.n, doc.grid.l, doc.model.pi_plus);
    if h > bound {
        return Err(Failure::resolution(format!(
            "step width {:.6} violates the grid resolution bound {:.6} (use at least {} steps)",
            h,
            bound,
            ((doc.range.to - doc.range.from).abs() / bound).ceil() as usize
        )));
    }
    Ok(())
}

pub fn quantum(
    run: &Path,
    compare_classical: bool,
    dump: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let doc: QuantumRunDoc = read_json(run)?;
    if doc.steps == 0 {
        return Err(Failure::input("steps must be >= 1"));
    }
    doc.model
        .validate()
        .map_err(|e| Failure::input(e.to_string()))?;
    step_resolution_guard(&doc)?;
    let psi = build_packet(&doc)?;

    if compare_classical {
        if doc.grid.d != 1 && doc.grid.d != 2 {
            return Err(Failure::input("d must be 1 or 2"));
        }
        let (report, evolution) = ehrenfest_compare(&psi, &doc.model, doc.range.to, doc.steps)?;
        output::observables_csv(out, &evolution)?;
        if let Some(p) = dump {
            output::wavefunction_dump(p, &evolution.final_grid)?;
        }
        println!("norm drift: {:.3e}", report.norm_drift);
        println!(
            "ehrenfest deviation: position {:.3e}, momentum {:.3e}",
            report.max_position_deviation, report.max_momentum_deviation
        );
        println!("observables written to {}", out.display());
        if report.norm_drift > NORM_DRIFT_LIMIT {
            return Err(Failure::resolution(format!(
                "norm drift {:.3e} exceeds {:.1e}",
                report.norm_drift, NORM_DRIFT_LIMIT
            )));
        }
        if report.max_position_deviation > EHRENFEST_LIMIT {
            return Err(Failure::scientific(format!(
                "expectation values deviate from the classical flow by {:.3e}",
                report.max_position_deviation
            )));
        }
    } else {
        let evolution = evolve_splitstep(&psi, &doc.model, doc.range.to, doc.steps, false)?;
        output::observables_csv(out, &evolution)?;
        if let Some(p) = dump {
            output::wavefunction_dump(p, &evolution.final_grid)?;
        }
        println!("norm drift: {:.3e}", evolution.norm_drift);
        println!("observables written to {}", out.display());
        if evolution.norm_drift > NORM_DRIFT_LIMIT {
            return Err(Failure::resolution(format!(
                "norm drift {:.3e} exceeds {:.1e}",
                evolution.norm_drift, NORM_DRIFT_LIMIT
            )));
        }
    }
    Ok(())
}

pub fn kernel(
    run: &Path,
    slices_list: &[usize],
    report_path: Option<&Path>,
    threads: usize,
) -> Result<(), Failure> {
    let doc: QuantumRunDoc = read_json(run)?;
    if doc.grid.d != 1 {
        return Err(Failure::input("kernel supports d=1 only"));
    }
    if slices_list.is_empty() {
        return Err(Failure::input("--slices needs at least one value"));
    }
    if doc.steps == 0 {
        return Err(Failure::input("steps must be >= 1"));
    }
    doc.model
        .validate()
        .map_err(|e| Failure::input(e.to_string()))?;
    step_resolution_guard(&doc)?;
    let psi = build_packet(&doc)?;
    let spec = psi.spec;
    let delta = doc.range.to - doc.range.from;

    let reference = evolve_splitstep(&psi, &doc.model, doc.range.to, doc.steps, false)?;
    let mut distances = Vec::with_capacity(slices_list.len());
    println!("kernel vs split-step over delta = {}:", delta);
    for &slices in slices_list {
        let k = sliced_kernel(&doc.model, spec, doc.range.from, delta, slices)?;
        let out = apply_kernel(&k, &psi)?;
        let mut l2 = 0.0_f64;
        for (a, b) in out
            .amplitude
            .iter()
            .zip(reference.final_grid.amplitude.iter())
        {
            l2 += (a - b).norm_sqr();
        }
        let l2 = (l2 * psi.dv()).sqrt();
        println!("  slices {:>4}: L2 distance {:.6e}", slices, l2);
        distances.push(l2);
        let _ = threads;
    }

    let order = if slices_list.len() >= 2 {
        let xs: Vec<f64> = slices_list.iter().map(|s| (1.0 / *s as f64).ln()).collect();
        let ys: Vec<f64> = distances.iter().map(|d| d.max(1e-300).ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let order = cov / var;
        println!("fitted convergence order in 1/slices: {:.3}", order);
        Some(order)
    } else {
        None
    };

    if let Some(path) = report_path {
        let rows: Vec<serde_json::Value> = slices_list
            .iter()
            .zip(&distances)
            .map(|(s, d)| serde_json::json!({"slices": s, "l2_distance": d}))
            .collect();
        let doc_json = serde_json::json!({
            "delta": delta,
            "grid": {"d": doc.grid.d, "n": doc.grid.n, "l": doc.grid.l},
            "rows": rows,
            "fitted_order": order,
            "provenance": Provenance::new(0, 0, 0.0, threads),
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc_json).unwrap() + "\n")
            .map_err(|e| Failure::input(format!("cannot write '{}': {}", path.display(), e)))?;
    }

    match order {
        Some(o) if o >= KERNEL_ORDER_LIMIT => Ok(()),
        Some(o) => Err(Failure::scientific(format!(
            "fitted order {:.3} is below {}",
            o, KERNEL_ORDER_LIMIT
        ))),
        None if distances[0] <= KERNEL_DIRECT_LIMIT => Ok(()),
        None => Err(Failure::scientific(format!(
            "single-slice distance {:.3e} exceeds {:.1e}",
            distances[0], KERNEL_DIRECT_LIMIT
        ))),
    }
}
