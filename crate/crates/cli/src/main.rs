//! `fracsynth`: synthesize, verify and simulate robust fractional-order
//! output-feedback controllers.
//!
//! Exit codes: 0 ok, 1 internal error, 2 infeasible, 3 invalid input,
//! 4 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod commands;
mod schema;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Input(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "fracsynth", version, about = "Robust output-feedback synthesis for interval fractional-order plants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct PlantArgs {
    /// Plant JSON: {"alpha", "A": {"lower", "upper"}, "B": .., "C": ..}
    #[arg(long)]
    plant: PathBuf,
    /// Swap misordered interval bounds instead of rejecting them.
    #[arg(long)]
    canonicalize: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-stage LMI synthesis; writes controller.json, certificate.json and report.json.
    Synth {
        #[command(flatten)]
        plant: PlantArgs,
        /// Controller order (must be at least the plant order).
        #[arg(long)]
        nc: usize,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Strictness margin for the strict LMIs.
        #[arg(long)]
        eps: Option<f64>,
        /// Stage-1 retries after a stage-2 failure.
        #[arg(long, default_value_t = 3)]
        retries: usize,
        /// Seed for retry perturbations and the post-hoc sweep.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random members in the post-hoc sweep.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Sector test over interval vertices and seeded random members.
    Verify {
        #[command(flatten)]
        plant: PlantArgs,
        /// Controller JSON: {"nc", "Ac", "Bc", "Cc", "Dc"}
        #[arg(long)]
        controller: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for report.json and eigenvalues.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grünwald-Letnikov simulation of one closed-loop member; CSV output.
    Simulate {
        #[command(flatten)]
        plant: PlantArgs,
        #[arg(long)]
        controller: PathBuf,
        /// Comma-separated initial state: plant states, optionally followed by controller states.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long = "t-final", default_value_t = 40.0)]
        t_final: f64,
        /// `nominal`, `random`, or a comma-separated delta list in [-1, 1].
        #[arg(long, default_value = "nominal", allow_hyphen_values = true)]
        member: String,
        /// Seed for `--member random`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth { plant, nc, out, eps, retries, seed, samples } => {
            commands::synth(&plant.plant, plant.canonicalize, nc, &out, eps, retries, seed, samples)
        }
        Command::Verify { plant, controller, samples, seed, out } => {
            commands::verify(&plant.plant, plant.canonicalize, &controller, samples, seed, out.as_deref())
        }
        Command::Simulate { plant, controller, x0, dt, t_final, member, seed, out } => commands::simulate(
            &plant.plant,
            plant.canonicalize,
            &controller,
            x0.as_deref(),
            dt,
            t_final,
            &member,
            seed,
            out.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracsynth: {e}");
            ExitCode::from(e.code())
        }
    }
}
