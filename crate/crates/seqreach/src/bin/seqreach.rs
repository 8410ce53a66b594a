use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seqreach::cli::{self, CommonArgs};

#[derive(Parser)]
#[command(name = "seqreach", version, about = "Stochastic motion-planning value chains: solve, verify, simulate, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Output directory (defaults to $SEQREACH_OUT/<config stem>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the chained PDEs and write field/policy artifacts.
    Solve,
    /// Compare a solve's artifacts against closed-loop Monte Carlo.
    Verify,
    /// Dump trajectories with exit-time records and verdicts.
    Simulate,
    /// Re-render graymaps from existing field CSVs.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // results are thread-count independent; this only bounds parallelism
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let args = CommonArgs {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let outcome = match cli.command {
        Command::Solve => cli::cmd_solve(&args).map(|_| cli::EXIT_OK),
        Command::Verify => cli::cmd_verify(&args).map(|(_, report)| {
            if report.pass {
                cli::EXIT_OK
            } else {
                cli::EXIT_VERIFY
            }
        }),
        Command::Simulate => cli::cmd_simulate(&args).map(|_| cli::EXIT_OK),
        Command::Report => cli::cmd_report(&args).map(|_| cli::EXIT_OK),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => ExitCode::from(cli::error_exit_code(&err) as u8),
    }
}
