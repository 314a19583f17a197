use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mol_cli::{run, Command};

#[derive(Parser)]
#[command(name = "mol", version, about = "Monotone operator learning reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the learned operator.
    Train(Common),
    /// Reconstruct measurements with a trained checkpoint.
    Reconstruct(Common),
    /// Check convergence, monotonicity and robustness properties of a checkpoint.
    Verify(Common),
    /// Compare memory and time of the implicit and unrolled gradients.
    Bench(Common),
}

fn threads() -> Option<usize> {
    let raw = std::env::var("MOL_THREADS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            eprintln!("ignoring MOL_THREADS={raw:?}: expected a positive integer");
            None
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Reconstruct(a) => (Command::Reconstruct, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Bench(a) => (Command::Bench, a),
    };
    let go = || run(command, &args.config, &args.out, args.checkpoint.as_deref(), args.seed);
    let result = match threads() {
        Some(n) => mol::parallel::with_threads(n, go),
        None => go(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
