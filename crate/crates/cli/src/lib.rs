//! Configuration-driven experiment harness for the `kpo` toolkit.
//!
//! Each command reads one TOML config, writes its outputs to a directory
//! together with the effective config and a `manifest.json` that lists every
//! file with its SHA-256 checksum.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod pipeline;
pub mod sweep;

use std::fs;
use std::time::Instant;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use output::RunManifest;

use output::{io_err, sha256_hex, OutputDir, EFFECTIVE_CONFIG_FILE, MANIFEST_FILE};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Pipeline,
    Sweep { jobs: usize },
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Pipeline => "pipeline",
            Command::Sweep { .. } => "sweep",
        }
    }
}

/// Removes the files listed by a previous manifest in `root`, so reruns do
/// not inherit stale outputs. Other files are left alone.
fn clear_previous(out: &OutputDir) -> Result<(), CliError> {
    let path = out.root().join(MANIFEST_FILE);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(());
    };
    let Ok(old) = serde_json::from_str::<RunManifest>(&text) else {
        return Ok(());
    };
    for entry in old.outputs {
        let p = out.root().join(&entry.path);
        if p.is_file() {
            fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
        }
    }
    fs::remove_file(&path).map_err(|e| io_err(&path, e))
}

/// Runs `command` for `cfg` and writes the manifest. A failing stage still
/// produces a manifest (status `failed`, stage and error recorded); the error
/// is then returned.
pub fn execute(cfg: &ExperimentConfig, command: Command) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = OutputDir::create(&cfg.output_path())?;
    clear_previous(&out)?;
    let effective = cfg.to_toml();
    out.write(EFFECTIVE_CONFIG_FILE, &effective)?;
    log::info!("{} {} -> {}", command.name(), cfg.experiment, out.root().display());

    let outcome = match command {
        Command::Run => experiments::run_experiment(cfg, &mut out),
        Command::Pipeline => pipeline::run_pipeline(cfg, &mut out),
        Command::Sweep { jobs } => sweep::run_sweep(cfg, jobs, &mut out),
    };
    let outputs = out.inventory()?;
    let (status, failed_stage, error) = match &outcome {
        Ok(()) => ("ok", None, None),
        Err(e) => ("failed", Some(e.stage().unwrap_or("output").to_string()), Some(e.to_string())),
    };
    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        command: command.name().to_string(),
        experiment: cfg.experiment.to_string(),
        config_hash: sha256_hex(effective.as_bytes()),
        seed: cfg.seed,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        status: status.to_string(),
        failed_stage,
        error,
        outputs,
        warnings: std::mem::take(&mut out.warnings),
        summary: std::mem::take(&mut out.summary),
    };
    out.write_json(MANIFEST_FILE, &manifest)?;
    outcome.map(|()| manifest)
}

pub fn validate_file(path: &std::path::Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::from_file(path)
}
