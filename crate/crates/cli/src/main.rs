//! `hjflow` — constraint analysis, multi-parameter classical evolution,
//! path-independence checks, quantum runs and propagator-kernel studies
//! for constrained Hamiltonian systems.

mod commands;
mod docs;
mod failure;
mod output;

use clap::{Parser, Subcommand};
use failure::Failure;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "hjflow", version, about = "Symbolic-numeric engine for constrained Hamiltonian systems with multi-parameter evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct extended Hamiltonians and classify the constraint algebra.
    ///
    /// Exit codes: 0 integrable (first-class), 3 not integrable, 1 input error.
    Analyze {
        /// System-definition document (JSON).
        system: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Write a machine-readable report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Integrate the equations of motion along a parameter path.
    ///
    /// Exit codes: 0 ok, 3 constraint violation, 4 singularity, 1 input error.
    Evolve {
        system: PathBuf,
        /// Initial-state document (JSON).
        #[arg(long)]
        initial: PathBuf,
        /// Parameter-path document (JSON).
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = commands::Method::Canonical)]
        method: commands::Method,
        /// Gauge expression for the dirac method, e.g. "xm - tau".
        #[arg(long)]
        gauge: Option<String>,
        /// Accept an initial state that violates the constraint surface.
        #[arg(long)]
        allow_off_surface: bool,
        /// Constraint-conservation tolerance for the exit status.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Trajectory CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate along two paths sharing endpoints and compare the results.
    ///
    /// Exit codes: 0 path-independent at tolerance, 3 otherwise, 1 input error.
    Check {
        system: PathBuf,
        #[arg(long)]
        initial: PathBuf,
        #[arg(long)]
        path_a: PathBuf,
        #[arg(long)]
        path_b: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Evolve a wavepacket; optionally compare expectation values with the
    /// classical flow.
    ///
    /// Exit codes: 0 ok, 3 classical mismatch, 5 resolution failure, 1 input error.
    Quantum {
        /// Quantum-run document (JSON).
        run: PathBuf,
        #[arg(long)]
        compare_classical: bool,
        /// Binary wavefunction dump of the final state.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Observables CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build time-sliced propagator matrices and study their convergence to
    /// the split-step evolution.
    ///
    /// Exit codes: 0 converged, 3 convergence failure, 5 resolution failure,
    /// 1 input error.
    Kernel {
        run: PathBuf,
        /// Comma-separated slice counts, e.g. 8,16,32,64.
        #[arg(long, value_delimiter = ',', required = true)]
        slices: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Worker threads for dense kernel composition.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze {
            system,
            seed,
            samples,
            tol,
            report,
        } => commands::analyze(&system, seed, samples, tol, report.as_deref()),
        Command::Evolve {
            system,
            initial,
            path,
            steps,
            method,
            gauge,
            allow_off_surface,
            tol,
            out,
        } => commands::evolve(
            &system,
            &initial,
            &path,
            steps,
            method,
            gauge.as_deref(),
            allow_off_surface,
            tol,
            &out,
        ),
        Command::Check {
            system,
            initial,
            path_a,
            path_b,
            steps,
            tol,
        } => commands::check(&system, &initial, &path_a, &path_b, steps, tol),
        Command::Quantum {
            run,
            compare_classical,
            dump,
            out,
        } => commands::quantum(&run, compare_classical, dump.as_deref(), &out),
        Command::Kernel {
            run,
            slices,
            report,
            threads,
        } => commands::kernel(&run, &slices, report.as_deref(), threads),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}
