use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kpo_cli::{execute, validate_file, Command, RunManifest};

#[derive(Parser)]
#[command(name = "kpo", version, about = "Kerr parametric oscillator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment named in the config.
    Run { config: PathBuf },
    /// Calibrate, synthesize, reconstruct and report the round-trip fidelity.
    Pipeline { config: PathBuf },
    /// Steady-state photon number over the [sweep] grid.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a config and print the effective (defaulted) version.
    Validate { config: PathBuf },
}

fn report(m: &RunManifest) {
    println!("status: {}", m.status);
    println!("outputs: {} files, config {}", m.outputs.len(), &m.config_hash[..12]);
    for (k, v) in &m.summary {
        println!("{k}: {v}");
    }
    for w in &m.warnings {
        println!("warning: {w}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (path, command) = match cli.command {
        Cmd::Validate { config } => {
            return match validate_file(&config) {
                Ok(cfg) => {
                    print!("{}", cfg.to_toml());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error [config]: {e}");
                    ExitCode::from(2)
                }
            };
        }
        Cmd::Run { config } => (config, Command::Run),
        Cmd::Pipeline { config } => (config, Command::Pipeline),
        Cmd::Sweep { config, jobs } => (config, Command::Sweep { jobs }),
    };
    let cfg = match validate_file(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error [config]: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg, command) {
        Ok(m) => {
            report(&m);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.stage().unwrap_or("output"));
            ExitCode::FAILURE
        }
    }
}
