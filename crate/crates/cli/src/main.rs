//! `squidw`: reproduction commands for the rf-SQUID W-state simulator.

mod commands;
mod config;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "squidw",
    about = "Simulate N-qubit W-state generation with rf-SQUID qubits in a cavity",
    version
)]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, default_value = "configs/reference.toml")]
    config: PathBuf,
    /// Output directory for CSV files and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for Monte Carlo sampling.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Suppress progress output (results still land in --out).
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fig2Variant {
    A,
    B,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce the 3-qubit trajectories: fidelity and success probability
    /// at t = 25/g for the two spontaneous-emission settings.
    Fig2 {
        #[arg(long, value_enum)]
        variant: Fig2Variant,
    },
    /// Sweep the qubit number at t = 50/g and tabulate (N, F, P_s).
    Fig3 {
        /// Comma-separated qubit numbers.
        #[arg(long, value_delimiter = ',', default_value = "3,5,10,20,40,60,80")]
        qubits: Vec<usize>,
    },
    /// Run the stage selected by [protocol] mode (or the full protocol).
    Simulate,
    /// Compare the reduced model against the full tensor-product oracle.
    OracleCheck {
        /// Relative offset applied to the reduced model's first coupling
        /// (sensitivity check; nonzero values are expected to FAIL).
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
    },
    /// Solve the [device] flux levels and derive the couplings.
    SquidLevels {
        /// Also dump (phi, potential, wavefunctions) for plotting.
        #[arg(long)]
        wavefunctions: bool,
    },
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let run_config = config::load(&cli.config)?;
    let setup = run_config.setup()?;
    let io = commands::Io {
        out_dir: &cli.out,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Fig2 { variant } => {
            let v = match variant {
                Fig2Variant::A => 'a',
                Fig2Variant::B => 'b',
            };
            commands::fig2(&setup, v, &io)?;
            Ok(true)
        }
        Command::Fig3 { qubits } => {
            commands::fig3(&setup, qubits, &io)?;
            Ok(true)
        }
        Command::Simulate => {
            commands::simulate(&setup, cli.seed, &io)?;
            Ok(true)
        }
        Command::OracleCheck { perturb } => commands::oracle_check(&setup, *perturb, &io),
        Command::SquidLevels { wavefunctions } => {
            commands::squid_levels(&setup, *wavefunctions, &io)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            // A check command computed successfully but the check failed.
            eprintln!("{}", serde_json::json!({ "error": "check failed" }));
            ExitCode::FAILURE
        }
        Err(err) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{err:#}") }));
            ExitCode::from(2)
        }
    }
}
