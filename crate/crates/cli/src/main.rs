use std::io;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use qfde_cli::commands::{cmd_check, cmd_solve, cmd_study, SolveFlags};

/// Monotone fixed-point solver and verification harness for coupled
/// quadratic functional differential systems.
#[derive(Parser)]
#[command(name = "qfde", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a problem spec against the admissibility hypotheses.
    Check {
        spec: PathBuf,
        /// Write the full audit report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Override the audit seed from the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve a problem spec; solution CSV goes to stdout unless --solution is given.
    Solve {
        spec: PathBuf,
        /// Write the solution samples (t, x_star, y_star) to this CSV file.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Write the iteration trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the run report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Iterate even when the hypothesis audit fails (recorded in the report).
        #[arg(long)]
        override_gate: bool,
        /// Keep per-iterate digests in the trace CSV.
        #[arg(long)]
        record_iterates: bool,
        /// Override the audit seed from the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-solve on a ladder of grids and report observed convergence orders.
    Study {
        spec: PathBuf,
        /// Comma-separated grid sizes, e.g. --grids 101,201,401.
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        /// Write the study table as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Override the audit seed from the spec.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    let cli = Cli::parse();
    let mut out = io::stdout();
    let mut err = io::stderr();
    let code = match cli.command {
        Command::Check { spec, json, seed } => {
            cmd_check(&spec, json.as_deref(), seed, &mut out, &mut err)
        }
        Command::Solve {
            spec,
            solution,
            trace,
            json,
            override_gate,
            record_iterates,
            seed,
        } => cmd_solve(
            &spec,
            &SolveFlags {
                solution,
                trace,
                json,
                override_gate,
                record_iterates,
                seed,
            },
            &mut out,
            &mut err,
        ),
        Command::Study {
            spec,
            grids,
            json,
            seed,
        } => cmd_study(&spec, &grids, json.as_deref(), seed, &mut out, &mut err),
    };
    std::process::exit(code);
}
