//! `consensus-forge` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 infeasible
//! synthesis or failed verification.

// NaN must fail positivity checks, and dense kernels read best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod certificate;
mod commands;
mod config;
mod output;

use clap::{ArgGroup, Parser, Subcommand};
use commands::{GainSource, Outcome};
use consensus_forge::Method;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "consensus-forge", version, about = "Leader-follower consensus gains with certified cost bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the synthesis LMI and write a certificate.
    Synth {
        config: PathBuf,
        /// th1 (coupled) or th2 (uniform); defaults to the config, then th1.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the closed loop and compare its cost with the bound.
    #[command(group(ArgGroup::new("gain_source").required(true).args(["cert", "gain"])))]
    Simulate {
        config: PathBuf,
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Row-major gain, e.g. "3.987,4.5178"; rows separated by ';'.
        #[arg(long, allow_hyphen_values = true)]
        gain: Option<String>,
        /// Replace the configured coupling by k·I.
        #[arg(long, allow_hyphen_values = true)]
        k: Option<f64>,
        /// Trajectory CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a certificate against its config.
    Verify {
        config: PathBuf,
        #[arg(long)]
        cert: PathBuf,
    },
    /// Build a ready-made instance and run the whole pipeline.
    Demo {
        #[arg(long, default_value = "pendulum")]
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Spring constant.
        #[arg(long, default_value_t = consensus_forge::demo::DEFAULT_SPRING)]
        k: f64,
    },
    /// Simulate over a grid of coupling strengths k·I.
    #[command(group(ArgGroup::new("gain_source").required(true).args(["cert", "gain"])))]
    Sweep {
        config: PathBuf,
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        gain: Option<String>,
        /// Comma-separated list, e.g. "0,0.5,1".
        #[arg(long, allow_hyphen_values = true)]
        k_grid: String,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn source<'a>(cert: &'a Option<PathBuf>, gain: &'a Option<String>) -> GainSource<'a> {
    match (cert, gain) {
        (Some(c), _) => GainSource::Certificate(c),
        (None, Some(g)) => GainSource::Inline(g),
        (None, None) => unreachable!("clap enforces one gain source"),
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Synth { config, method, out } => commands::synth(&config, method, out.as_deref()),
        Command::Simulate {
            config,
            cert,
            gain,
            k,
            out,
        } => commands::simulate(&config, source(&cert, &gain), k, out.as_deref()),
        Command::Verify { config, cert } => commands::verify(&config, &cert),
        Command::Demo { name, out, k } => commands::demo(&name, &out, k),
        Command::Sweep {
            config,
            cert,
            gain,
            k_grid,
            out,
        } => {
            let grid = commands::parse_grid(&k_grid)?;
            commands::sweep(&config, source(&cert, &gain), &grid, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
