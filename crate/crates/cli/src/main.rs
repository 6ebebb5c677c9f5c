mod converge;
mod failure;
mod oracle;
mod pressure;
mod run;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::Failure;

/// Variable-density two-phase flow with power-law viscosity on periodic boxes.
///
/// Exit codes: 0 success, 2 configuration, 3 i/o, 4 checkpoint,
/// 5 numerical failure, 6 verification failure, 7 linear solver.
/// NSCH_THREADS caps the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "nsch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a configured run, writing diagnostics.csv and checkpoints.
    Run(run::RunArgs),
    /// Run the invariant suite on every preset; nonzero exit on any failure.
    Verify {
        #[arg(long, value_name = "N", default_value_t = 0)]
        seed: u64,
    },
    /// Time-step and resolution refinement studies with observed rates.
    Converge {
        /// Number of dt halvings (at least 3).
        #[arg(long, value_name = "N", default_value_t = 3)]
        dt_levels: usize,
        /// Number of resolution doublings, starting from 8 points per axis.
        #[arg(long, value_name = "N", default_value_t = 3)]
        m_levels: usize,
        #[arg(long, value_name = "N", default_value_t = 0)]
        seed: u64,
    },
    /// Certify the fast operators against dense quadrature.
    Oracle {
        #[arg(long, value_name = "N", default_value_t = 64)]
        n_grid: usize,
        /// Random states per cutoff.
        #[arg(long, value_name = "N", default_value_t = 2)]
        samples: u64,
        #[arg(long, value_name = "N", default_value_t = 0)]
        seed: u64,
    },
    /// Recover the pressure of a checkpointed state.
    Pressure(pressure::PressureArgs),
    /// Convert diagnostics.csv into aligned columns for plotting tools.
    Plotdata {
        #[arg(value_name = "CSV")]
        input: PathBuf,
        /// Comma-separated column names to keep, in order.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        /// Write here instead of standard output.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("NSCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Config(format!("NSCH_THREADS = `{raw}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn plotdata(input: &PathBuf, columns: &[String], output: Option<&PathBuf>) -> Result<(), Failure> {
    let csv = std::fs::read_to_string(input).map_err(|e| Failure::Io(format!("{}: {e}", input.display())))?;
    let text = nsch::io::csv_to_columns(&csv, columns).map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
    match output {
        Some(path) => nsch::io::write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Run(args) => run::execute(&args),
        Command::Verify { seed } => verify::execute(seed),
        Command::Converge {
            dt_levels,
            m_levels,
            seed,
        } => converge::execute(dt_levels, m_levels, seed),
        Command::Oracle { n_grid, samples, seed } => oracle::execute(n_grid, samples, seed),
        Command::Pressure(args) => pressure::execute(&args),
        Command::Plotdata {
            input,
            columns,
            output,
        } => plotdata(&input, &columns, output.as_ref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nsch: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
