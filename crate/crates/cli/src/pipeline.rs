//! Calibrate → synthesize → reconstruct → compare, shared by the pipeline
//! command and the tomography round trips of the figure experiments.

use std::f64::consts::PI;

use kpo::analysis::{fidelity, wigner, PhaseGrid};
use kpo::fock::cat_state;
use kpo::tomography::{
    calibrate_pulses, reconstruct_state, synthesize_dataset, voltages_for, CalibrationResult, ReconstructionOptions,
    ReconstructionResult, TomographyDataset, MAX_DISPLACEMENT_FILL,
};
use kpo::{coherent_state, fock_state, Complex64, DensityMatrix, FockSpace};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, StageExt};
use crate::output::{DensityRecord, OutputDir};

/// Displacement grid: every configured amplitude at `phases` equally spaced phases.
pub fn displacement_grid(cfg: &ExperimentConfig) -> Vec<Complex64> {
    let t = &cfg.tomography;
    t.amplitudes
        .iter()
        .flat_map(|&a| (0..t.phases).map(move |q| Complex64::from_polar(a, 2.0 * PI * q as f64 / t.phases as f64)))
        .collect()
}

pub fn true_calibration(cfg: &ExperimentConfig) -> Result<CalibrationResult, CliError> {
    CalibrationResult::new(Complex64::new(cfg.tomography.k, 0.0), cfg.tomography.gains.clone()).stage("calibration")
}

pub fn phase_grid(cfg: &ExperimentConfig) -> Result<PhaseGrid, CliError> {
    PhaseGrid::square(cfg.phase_space.extent, cfg.phase_space.points).stage("wigner")
}

/// The state described by the `[state]` section.
pub fn configured_state(cfg: &ExperimentConfig, space: FockSpace) -> Result<DensityMatrix, CliError> {
    let s = &cfg.state;
    let alpha = Complex64::new(s.alpha_re, s.alpha_im);
    let psi = match s.kind.as_str() {
        "vacuum" => return Ok(DensityMatrix::vacuum(space)),
        "coherent" => coherent_state(space, alpha),
        "fock" => fock_state(space, s.level).stage("state")?,
        _ => cat_state(space, alpha, s.even).stage("state")?,
    };
    let rho = psi.to_density();
    if let Some(w) = rho.truncation_warning() {
        return Err(CliError::Config {
            field: "state".into(),
            message: format!("not representable at dim = {}: {w}", space.dim()),
        });
    }
    Ok(rho)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionRecord {
    pub loss: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub parity: bool,
    pub fidelity: f64,
    pub warnings: Vec<String>,
    pub rho: DensityRecord,
}

pub struct RoundTrip {
    pub dataset: TomographyDataset,
    pub result: ReconstructionResult,
    pub fidelity: f64,
}

/// Measures `rho_true` on the configured grid with hardware `cal_true`,
/// choosing voltages and reconstructing with the experimenter's `cal_est`.
pub fn round_trip(
    cfg: &ExperimentConfig,
    rho_true: &DensityMatrix,
    cal_true: &CalibrationResult,
    cal_est: &CalibrationResult,
    seed: u64,
) -> Result<RoundTrip, CliError> {
    let voltages = voltages_for(&displacement_grid(cfg), cal_est.k);
    let dataset =
        synthesize_dataset(rho_true, &voltages, cal_true, cfg.tomography.noise_sigma, seed).stage("synthesis")?;
    let options = ReconstructionOptions {
        dim: match cfg.tomography.estimator_dim {
            0 => None,
            d => Some(d),
        },
        parity: cfg.tomography.parity,
        ..Default::default()
    };
    let result = reconstruct_state(&dataset, cal_est, &options).stage("reconstruction")?;
    let estimate = result.rho.resized(rho_true.space()).stage("fidelity")?;
    let fidelity = fidelity(&estimate, rho_true).stage("fidelity")?;
    Ok(RoundTrip {
        dataset,
        result,
        fidelity,
    })
}

impl RoundTrip {
    pub fn record(&self) -> ReconstructionRecord {
        ReconstructionRecord {
            loss: self.result.loss,
            iterations: self.result.iterations,
            gradient_norm: self.result.gradient_norm,
            converged: self.result.converged,
            parity: self.result.parity,
            fidelity: self.fidelity,
            warnings: self.result.warnings.clone(),
            rho: DensityRecord::from(&self.result.rho),
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Smallest dimension that keeps every calibration displacement inside the
/// forward model's truncation guard.
fn calibration_dim(cfg: &ExperimentConfig) -> usize {
    let v_max = cfg.tomography.calibration_voltages.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let fill = (cfg.tomography.k * v_max).powi(2);
    cfg.dim.max((fill / MAX_DISPLACEMENT_FILL).ceil() as usize + 1)
}

pub fn run_pipeline(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let seed = cfg.stochastic_seed()?;
    let cal_true = true_calibration(cfg)?;

    let cal_space = FockSpace::new(calibration_dim(cfg)).stage("calibration")?;
    let cal_voltages: Vec<Complex64> = cfg
        .tomography
        .calibration_voltages
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let cal_data = synthesize_dataset(
        &DensityMatrix::vacuum(cal_space),
        &cal_voltages,
        &cal_true,
        cfg.tomography.noise_sigma,
        seed,
    )
    .stage("calibration")?;
    out.write("calibration_dataset.json", &cal_data.to_json().stage("calibration")?)?;
    let cal_est = calibrate_pulses(&cal_data).stage("calibration")?;
    out.write_json("calibration.json", &cal_est)?;
    out.warn_all("calibration", &cal_est.flags);
    let k_error = (cal_est.k - cal_true.k).norm() / cal_true.k.norm();
    out.record("k_true", cal_true.k.re);
    out.record("k_estimated", cal_est.k.re);
    out.record("k_relative_error", k_error);
    out.record("gains_estimated", &cal_est.c);

    let space = FockSpace::new(cfg.dim).stage("state")?;
    let rho_true = configured_state(cfg, space)?;
    out.write_json("state_true.json", &DensityRecord::from(&rho_true))?;

    let mut fidelities = Vec::with_capacity(cfg.tomography.repeats);
    let mut first = None;
    for r in 0..cfg.tomography.repeats {
        // the calibration run consumed `seed`
        let trip = round_trip(cfg, &rho_true, &cal_true, &cal_est, seed.wrapping_add(1 + r as u64))?;
        out.write(&format!("datasets/dataset_{r:03}.json"), &trip.dataset.to_json().stage("synthesis")?)?;
        out.write_json(&format!("reconstructions/reconstruction_{r:03}.json"), &trip.record())?;
        out.warn_all(&format!("reconstruction {r}"), &trip.result.warnings);
        log::info!("repeat {r}: fidelity {:.6}", trip.fidelity);
        fidelities.push(trip.fidelity);
        first.get_or_insert(trip);
    }
    let mut csv = String::from("repeat,seed,fidelity\n");
    for (r, f) in fidelities.iter().enumerate() {
        csv.push_str(&format!("{r},{},{f}\n", seed.wrapping_add(1 + r as u64)));
    }
    out.write("fidelities.csv", &csv)?;

    let grid = phase_grid(cfg)?;
    let w_true = wigner(&rho_true, &grid);
    out.write("wigner_true.csv", &w_true.to_csv())?;
    if let Some(trip) = &first {
        let w_rec = wigner(&trip.result.rho, &grid);
        out.write("wigner_reconstructed.csv", &w_rec.to_csv())?;
        out.record("wigner_negative_volume_reconstructed", w_rec.negative_volume());
    }
    out.record("wigner_negative_volume_true", w_true.negative_volume());
    out.record("fidelities", &fidelities);
    let med = median(&fidelities);
    out.record("fidelity_median", med);
    Ok(())
}
