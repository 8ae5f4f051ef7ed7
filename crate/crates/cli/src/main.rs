use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrcone::io::{run, Experiment, RunOptions};

/// Local Lindblad dynamics: light-cones, spectra and clustering.
#[derive(Parser)]
#[command(name = "simulate", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check generator invariants on the model.
    Validate(Common),
    /// Commutator-norm profile and light-cone fit.
    Lightcone(Common),
    /// Spectrum, gap, stationary state and conditioning.
    Spectrum(Common),
    /// Stationary connected correlations against the clustering length.
    Clustering(Common),
    /// Sampled M-values and their integral recursion.
    Mvalue(Common),
}

#[derive(Args)]
struct Common {
    /// Model file (TOML).
    #[arg(long)]
    model: PathBuf,
    /// Run file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the run file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIM_LOG", "warn")).init();
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Validate(a) => (Experiment::Validate, a),
        Command::Lightcone(a) => (Experiment::Lightcone, a),
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Clustering(a) => (Experiment::Clustering, a),
        Command::Mvalue(a) => (Experiment::Mvalue, a),
    };
    if args.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let opts = RunOptions {
        experiment,
        model: args.model,
        config: args.config,
        out: args.out,
        seed: args.seed,
        threads: args.threads,
    };
    match run(&opts) {
        Ok(m) => {
            log::info!("{} finished in {:.2} s (run {})", m.experiment, m.wall_time_seconds, m.run_id);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
