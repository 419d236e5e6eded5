//! Steady-state photon number over a Δ × β grid, evaluated point by point
//! on a worker pool.

use std::fmt::Write as _;

use kpo::dynamics::steady_state;
use kpo::params::mhz_to_angular;
use kpo::{FockSpace, KpoParams};
use rayon::prelude::*;

use crate::config::{invalid, ExperimentConfig};
use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub detuning_mhz: f64,
    pub beta_mhz: f64,
    pub result: Result<PointValue, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub mean_photon_number: f64,
    pub parity: f64,
    pub purity: f64,
    pub truncated: bool,
}

fn evaluate(dim: usize, kerr_mhz: f64, kappa_mhz: f64, detuning_mhz: f64, beta_mhz: f64) -> Result<PointValue, String> {
    let space = FockSpace::new(dim).map_err(|e| e.to_string())?;
    let params = KpoParams::from_mhz(detuning_mhz, kerr_mhz, kappa_mhz).map_err(|e| e.to_string())?;
    let ss = steady_state(space, &params, mhz_to_angular(beta_mhz)).map_err(|e| e.to_string())?;
    Ok(PointValue {
        mean_photon_number: ss.mean_photon_number(),
        parity: ss.parity(),
        purity: ss.purity(),
        truncated: ss.truncation_warning().is_some(),
    })
}

/// Evaluates every grid point with `jobs` workers. The result order is the
/// grid order (Δ outer, β inner) regardless of scheduling.
pub fn sweep_points(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<SweepPoint>, CliError> {
    let s = &cfg.sweep;
    if s.beta_mhz.is_empty() {
        return Err(invalid("sweep.beta_mhz", "empty grid"));
    }
    if s.detuning_mhz.is_empty() {
        return Err(invalid("sweep.detuning_mhz", "empty grid"));
    }
    if jobs == 0 {
        return Err(CliError::Other("--jobs must be at least 1".into()));
    }
    let grid: Vec<(f64, f64)> = s
        .detuning_mhz
        .iter()
        .flat_map(|&d| s.beta_mhz.iter().map(move |&b| (d, b)))
        .collect();
    let (dim, kerr, kappa) = (cfg.dim, cfg.physics.kerr_mhz, cfg.physics.kappa_mhz);
    let run = |&(d, b): &(f64, f64)| SweepPoint {
        detuning_mhz: d,
        beta_mhz: b,
        result: evaluate(dim, kerr, kappa, d, b),
    };
    if jobs == 1 {
        return Ok(grid.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    Ok(pool.install(|| grid.par_iter().map(run).collect()))
}

pub fn run_sweep(cfg: &ExperimentConfig, jobs: usize, out: &mut OutputDir) -> Result<(), CliError> {
    let points = sweep_points(cfg, jobs)?;
    let mut csv = String::from("detuning_mhz,beta_mhz,mean_photon_number,parity,purity,status,error\n");
    let mut failed = 0;
    for p in &points {
        match &p.result {
            Ok(v) => {
                let status = if v.truncated { "truncated" } else { "ok" };
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{status},",
                    p.detuning_mhz, p.beta_mhz, v.mean_photon_number, v.parity, v.purity
                );
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(csv, "{},{},,,,failed,\"{}\"", p.detuning_mhz, p.beta_mhz, e.replace('"', "'"));
            }
        }
    }
    for p in &points {
        match &p.result {
            Err(e) => out.warn(format!("point (detuning {} MHz, beta {} MHz) failed: {e}", p.detuning_mhz, p.beta_mhz)),
            Ok(v) if v.truncated => out.warn(format!(
                "point (detuning {} MHz, beta {} MHz): steady state reaches the truncation edge",
                p.detuning_mhz, p.beta_mhz
            )),
            _ => {}
        }
    }
    out.write("sweep.csv", &csv)?;
    out.record("points", points.len());
    out.record("failed_points", failed);
    Ok(())
}
