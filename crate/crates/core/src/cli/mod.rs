//! Command-line front end: `solve`, `converge`, `sweep` and `scale`.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a solve
//! fails (the report is still written).

pub mod config;
pub mod drivers;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use drivers::{
    convergence_rows, profile, run_convergence, run_solve, run_sweep, scale_inputs, unscale_inputs,
    DimensionalInputs, ProfileRecord, RunOutcome, TableRow,
};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "membrane-ritz",
    version,
    about = "Ritz solver for clamped hyperelastic membranes under hydrostatic load"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Configuration file (key = value text or JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Gauss node count; overrides the configuration.
    #[arg(long)]
    pub quad: Option<usize>,
    /// Probe point in [0, 1]; repeatable, replaces the configured probes.
    #[arg(long = "probe")]
    pub probes: Vec<f64>,
    /// Independent solves to run at once.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve once and write solution.json, profile.csv and report.json.
    Solve(RunArgs),
    /// Solve for every m in `m_range` and write table.csv.
    Converge(RunArgs),
    /// Follow the load–sag curve from `c` to `c_end` and write loadsag.csv.
    Sweep(RunArgs),
    /// Convert dimensional inputs to the dimensionless load constants.
    Scale {
        #[arg(long)]
        r0: f64,
        #[arg(long)]
        h0: f64,
        #[arg(long)]
        c1: f64,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        #[arg(long, default_value_t = 9.81)]
        g: f64,
        #[arg(long)]
        pstar: f64,
        #[arg(long, default_value_t = 0.0)]
        p0: f64,
    },
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_file(&args.config)?;
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    if args.quad.is_some() {
        cfg.quadrature = args.quad;
    }
    if !args.probes.is_empty() {
        cfg.probes = args.probes.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(outcome: Result<RunOutcome>) -> i32 {
    match outcome {
        Ok(out) => {
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            match out.failure {
                None => EXIT_OK,
                Some(msg) => {
                    eprintln!("solve failed: {msg}");
                    EXIT_SOLVE
                }
            }
        }
        Err(e @ (Error::Config(_) | Error::InvalidInput(_))) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_SOLVE
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Solve(args) => {
            report(load_config(&args).and_then(|c| run_solve(&c, &c.output.dir)))
        }
        Command::Converge(args) => {
            report(load_config(&args).and_then(|c| run_convergence(&c, &c.output.dir, args.jobs)))
        }
        Command::Sweep(args) => {
            report(load_config(&args).and_then(|c| run_sweep(&c, &c.output.dir)))
        }
        Command::Scale {
            r0,
            h0,
            c1,
            rho,
            g,
            pstar,
            p0,
        } => {
            let dim = DimensionalInputs {
                r0,
                h0,
                c1,
                rho,
                g,
                p_star: pstar,
                p0,
            };
            match scale_inputs(&dim) {
                Ok((c, d)) => {
                    println!("c = {c}\nd = {d}");
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("{e}");
                    EXIT_CONFIG
                }
            }
        }
    }
}
