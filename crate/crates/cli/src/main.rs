//! `qruns`: evaluate, simulate and fit the Type IV q-binomial run-count
//! distribution from the command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 domain error, 3 numerical
//! error, 4 verification failure.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "qruns",
    version,
    about = "Exact-length success runs under a geometrically varying success probability"
)]
struct Cli {
    /// Output format for stdout.
    #[arg(long, value_enum, default_value = "json", global = true)]
    format: Format,

    /// Worker threads (falls back to QRUNS_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Model parameters shared by several subcommands.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Number of trials.
    #[arg(long)]
    n: usize,
    /// Exact run length.
    #[arg(long)]
    k: usize,
    /// Initial success probability.
    #[arg(long)]
    theta: f64,
    /// Geometric decay of the success probability per failure.
    #[arg(long)]
    q: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probability mass function.
    Pmf {
        #[command(flatten)]
        model: ModelArgs,
        /// exact, recursive, corollary, classical or all.
        #[arg(long, default_value = "exact")]
        method: String,
    },
    /// Factorial, raw and central moments with shape factors.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = qruns::moments::DEFAULT_ORDER)]
        order: usize,
    },
    /// Draw run counts or whole sequences.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of sequences.
        #[arg(long)]
        draws: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Emit the 0/1 sequences as well as their counts.
        #[arg(long)]
        sequences: bool,
        /// Also write the counts as a sample file for `mle`.
        #[arg(long, value_name = "PATH")]
        save_sample: Option<std::path::PathBuf>,
    },
    /// Maximum-likelihood estimate and likelihood-ratio interval.
    Mle {
        /// Sample file: header "n k q", then one count per line.
        #[arg(long)]
        input: std::path::PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Monte Carlo study over a parameter grid.
    Mcstudy(commands::StudyArgs),
    /// Compare every formula against brute-force enumeration.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// Largest tolerated absolute deviation.
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
}

fn configure_threads(flag: Option<usize>) -> Result<(), commands::CliError> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("QRUNS_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                commands::CliError::usage(format!(
                    "QRUNS_THREADS must be a positive integer, got {v:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(commands::CliError::usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| commands::CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(String, bool), commands::CliError> {
    configure_threads(cli.threads)?;
    let report = match cli.command {
        Command::Pmf { model, method } => commands::pmf(&model, &method)?,
        Command::Moments { model, order } => commands::moments(&model, order)?,
        Command::Simulate {
            model,
            draws,
            seed,
            sequences,
            save_sample,
        } => commands::simulate(&model, draws, seed, sequences, save_sample.as_deref())?,
        Command::Mle { input, alpha } => commands::mle(&input, alpha)?,
        Command::Mcstudy(args) => commands::mcstudy(&args, cli.format)?,
        Command::Verify { model, tolerance } => {
            let (report, ok) = commands::verify(&model, tolerance)?;
            return Ok((report.render(cli.format), ok));
        }
    };
    Ok((report.render(cli.format), true))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok((text, ok)) => {
            print!("{text}");
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed: deviation above tolerance");
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("qruns: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
