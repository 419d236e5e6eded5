//! Figure experiments. Each writes plot-ready CSV and JSON files; columns
//! carry their units in the header.

use std::fmt::Write as _;

use kpo::analysis::{
    adiabatic_cat_prep, beta_for_lobe_amplitude, threshold_curve, tune_cat_drive, wigner, CatPrepProtocol,
};
use kpo::dynamics::{propagate, steady_psd_for, steady_state, Sampling};
use kpo::params::{angular_to_mhz, mhz_to_angular, ns_to_us};
use kpo::spectral::{bin_integrate, transient_psd_analytic, transient_psd_numeric_with, NumericPsdOptions};
use kpo::{coherent_state, Complex64, DensityMatrix, DriveProfile, FockSpace};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, StageExt};
use crate::output::{DensityRecord, OutputDir};
use crate::pipeline::{configured_state, median, phase_grid, round_trip, true_calibration};

pub fn run_experiment(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    match cfg.experiment {
        ExperimentKind::Fig2b => fig2b(cfg, out),
        ExperimentKind::Fig2c => fig2c(cfg, out),
        ExperimentKind::Fig2d => fig2d(cfg, out),
        ExperimentKind::Fig3 => fig3(cfg, out),
        ExperimentKind::Fig4a => fig4a(cfg, out),
        ExperimentKind::Fig4b => fig4b(cfg, out),
        ExperimentKind::Fig4d => fig4d(cfg, out),
        ExperimentKind::Custom => custom(cfg, out),
    }
}

fn space(cfg: &ExperimentConfig) -> Result<FockSpace, CliError> {
    FockSpace::new(cfg.dim).stage("setup")
}

fn frequency_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let s = &cfg.spectrum;
    (0..s.points)
        .map(|k| mhz_to_angular(s.min_mhz + (s.max_mhz - s.min_mhz) * k as f64 / (s.points - 1) as f64))
        .collect()
}

fn betas(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.drive.beta_mhz.iter().map(|&b| mhz_to_angular(b)).collect()
}

fn nonempty<'a>(field: &str, values: &'a [f64]) -> Result<&'a [f64], CliError> {
    if values.is_empty() {
        Err(crate::config::invalid(field, "must not be empty"))
    } else {
        Ok(values)
    }
}

/// Transient PSD of coherent states versus |α| (heat map) and its bin powers.
fn fig2b(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let space = space(cfg)?;
    let params = cfg.kpo_params()?;
    let freqs = frequency_grid(cfg);
    let alphas = nonempty("spectrum.alphas", &cfg.spectrum.alphas)?;
    let n_bins = cfg.spectrum.n_bins;
    let mut map = String::from("alpha,frequency_mhz,psd\n");
    let mut bins = String::from("alpha,mean_photon_number");
    for j in 1..=n_bins {
        let _ = write!(bins, ",bin{j}");
    }
    bins.push('\n');
    let mut worst_sum_rule = 0.0f64;
    for &alpha in alphas {
        let rho = coherent_state(space, Complex64::new(alpha, 0.0)).to_density();
        if let Some(w) = rho.truncation_warning() {
            out.warn(format!("alpha = {alpha}: {w}"));
        }
        let psd = if cfg.spectrum.method == "numeric" {
            let opts = NumericPsdOptions {
                frequencies: Some(freqs.clone()),
                ..Default::default()
            };
            transient_psd_numeric_with(&rho, &params, &opts).stage("psd")?
        } else {
            transient_psd_analytic(&rho.populations(), &params, &freqs).stage("psd")?
        };
        out.warn_all(&format!("alpha = {alpha}"), &psd.warnings);
        if rho.mean_photon_number() > 1e-12 {
            worst_sum_rule = worst_sum_rule.max(psd.normalization.relative_error());
        }
        for (w, s) in psd.frequencies.iter().zip(&psd.values) {
            let _ = writeln!(map, "{alpha},{},{s}", angular_to_mhz(*w));
        }
        let b = bin_integrate(&psd, n_bins).stage("bins")?;
        let _ = write!(bins, "{alpha},{}", rho.mean_photon_number());
        for p in &b.powers {
            let _ = write!(bins, ",{p}");
        }
        bins.push('\n');
    }
    out.write("psd_vs_alpha.csv", &map)?;
    out.write("bin_powers.csv", &bins)?;
    out.record("method", &cfg.spectrum.method);
    out.record("worst_sum_rule_relative_error", worst_sum_rule);
    Ok(())
}

/// Steady ⟨n⟩ versus β with the classical fixed-point curve.
fn fig2c(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let space = space(cfg)?;
    let params = cfg.kpo_params()?;
    let betas = betas(cfg);
    nonempty("drive.beta_mhz", &betas)?;
    let curve = threshold_curve(space, &params, &betas).stage("steady_state")?;
    out.warn_all("threshold", &curve.warnings);
    let mut csv = String::from("beta_mhz,quantum_mean_photon_number,classical_mean_photon_number\n");
    for k in 0..curve.betas.len() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            cfg.drive.beta_mhz[k], curve.quantum[k], curve.classical[k]
        );
    }
    out.write("threshold.csv", &csv)?;
    out.record("classical_threshold_mhz", angular_to_mhz(params.classical_threshold()));
    out.record("min_quantum_mean_photon_number", curve.quantum.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok(())
}

/// Steady emission spectrum versus β (map) with the photon number per β.
fn fig2d(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let space = space(cfg)?;
    let params = cfg.kpo_params()?;
    let freqs = frequency_grid(cfg);
    let betas = betas(cfg);
    nonempty("drive.beta_mhz", &betas)?;
    let mut map = String::from("beta_mhz,frequency_mhz,psd\n");
    let mut photons = String::from("beta_mhz,mean_photon_number\n");
    for (k, &beta) in betas.iter().enumerate() {
        let ss = steady_state(space, &params, beta).stage("steady_state")?;
        if let Some(w) = ss.truncation_warning() {
            out.warn(format!("beta = {} MHz: {w}", cfg.drive.beta_mhz[k]));
        }
        let psd = steady_psd_for(&ss, &params, beta, &freqs).stage("psd")?;
        for (w, s) in freqs.iter().zip(&psd) {
            let _ = writeln!(map, "{},{},{s}", cfg.drive.beta_mhz[k], angular_to_mhz(*w));
        }
        let _ = writeln!(photons, "{},{}", cfg.drive.beta_mhz[k], ss.mean_photon_number());
    }
    out.write("steady_psd_vs_beta.csv", &map)?;
    out.write("steady_photon_number.csv", &photons)?;
    Ok(())
}

/// Undriven Kerr evolution of the configured state: Wigner maps at the time
/// slices plus a tomography round trip of each slice.
fn fig3(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let space = space(cfg)?;
    let params = cfg.kpo_params()?;
    let seed = cfg.stochastic_seed()?;
    let slices = cfg.time.slices_ns.clone();
    nonempty("time.slices_ns", &slices)?;
    let rho0 = configured_state(cfg, space)?;
    let times: Vec<f64> = slices.iter().map(|&t| ns_to_us(t)).collect();
    let t_final = *times.last().unwrap();
    let traj = propagate(
        &rho0,
        &params,
        &DriveProfile::constant(0.0),
        t_final,
        &Sampling::Times { times },
    )
    .stage("propagation")?;
    out.warn_all("propagation", &traj.warnings);
    let grid = phase_grid(cfg)?;
    let cal = true_calibration(cfg)?;
    let mut table = String::from("t_ns,mean_photon_number,purity,wigner_min,wigner_negative_volume,fidelity\n");
    let mut fids = Vec::new();
    for (k, (t, rho)) in slices.iter().zip(&traj.states).enumerate() {
        let w = wigner(rho, &grid);
        out.write(&format!("wigner_true_{k:02}.csv"), &w.to_csv())?;
        let trip = round_trip(cfg, rho, &cal, &cal, seed.wrapping_add(k as u64))?;
        out.write(&format!("datasets/dataset_{k:02}.json"), &trip.dataset.to_json().stage("synthesis")?)?;
        out.write_json(&format!("reconstructions/reconstruction_{k:02}.json"), &trip.record())?;
        out.warn_all(&format!("t = {t} ns reconstruction"), &trip.result.warnings);
        let w_rec = wigner(&trip.result.rho, &grid);
        out.write(&format!("wigner_reconstructed_{k:02}.csv"), &w_rec.to_csv())?;
        let _ = writeln!(
            table,
            "{t},{},{},{},{},{}",
            rho.mean_photon_number(),
            rho.purity(),
            w.min(),
            w.negative_volume(),
            trip.fidelity
        );
        fids.push(trip.fidelity);
    }
    out.write("slices.csv", &table)?;
    out.record("fidelity_median", median(&fids));
    out.record("fidelity_min", fids.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok(())
}

fn time_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = cfg.time.points;
    (0..n)
        .map(|k| cfg.time.t_final_ns * k as f64 / (n - 1) as f64)
        .collect()
}

/// ⟨n⟩(t) from the vacuum under each constant drive.
fn fig4a(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let space = space(cfg)?;
    let params = cfg.kpo_params()?;
    let betas = betas(cfg);
    nonempty("drive.beta_mhz", &betas)?;
    let times_ns = time_grid(cfg);
    let times: Vec<f64> = times_ns.iter().map(|&t| ns_to_us(t)).collect();
    let mut columns = Vec::with_capacity(betas.len());
    for (k, &beta) in betas.iter().enumerate() {
        let traj = propagate(
            &DensityMatrix::vacuum(space),
            &params,
            &DriveProfile::constant(beta),
            *times.last().unwrap(),
            &Sampling::Times { times: times.clone() },
        )
        .stage("propagation")?;
        out.warn_all(&format!("beta = {} MHz", cfg.drive.beta_mhz[k]), &traj.warnings);
        columns.push(traj.mean_photon_numbers());
    }
    let mut csv = String::from("t_ns");
    for b in &cfg.drive.beta_mhz {
        let _ = write!(csv, ",n_beta_{b}mhz");
    }
    csv.push('\n');
    for (i, t) in times_ns.iter().enumerate() {
        let _ = write!(csv, "{t}");
        for c in &columns {
            let _ = write!(csv, ",{}", c[i]);
        }
        csv.push('\n');
    }
    out.write("photon_number_vs_time.csv", &csv)?;
    let finals: Vec<f64> = columns.iter().map(|c| *c.last().unwrap()).collect();
    out.record("final_mean_photon_numbers", finals);
    Ok(())
}

/// States at the configured slices (transient and near-steady) under the
/// first drive value, each with a tomography round trip.
fn fig4b(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let space = space(cfg)?;
    let params = cfg.kpo_params()?;
    let seed = cfg.stochastic_seed()?;
    let beta = *nonempty("drive.beta_mhz", &cfg.drive.beta_mhz)?.first().unwrap();
    let slices = cfg.time.slices_ns.clone();
    nonempty("time.slices_ns", &slices)?;
    let times: Vec<f64> = slices.iter().map(|&t| ns_to_us(t)).collect();
    let traj = propagate(
        &DensityMatrix::vacuum(space),
        &params,
        &DriveProfile::constant(mhz_to_angular(beta)),
        *times.last().unwrap(),
        &Sampling::Times { times },
    )
    .stage("propagation")?;
    out.warn_all("propagation", &traj.warnings);
    let grid = phase_grid(cfg)?;
    let cal = true_calibration(cfg)?;
    let mut table = String::from("t_ns,mean_photon_number,parity,purity,fidelity\n");
    for (k, (t, rho)) in slices.iter().zip(&traj.states).enumerate() {
        out.write_json(&format!("state_true_{k:02}.json"), &DensityRecord::from(rho))?;
        out.write(&format!("wigner_true_{k:02}.csv"), &wigner(rho, &grid).to_csv())?;
        let trip = round_trip(cfg, rho, &cal, &cal, seed.wrapping_add(k as u64))?;
        out.write(&format!("datasets/dataset_{k:02}.json"), &trip.dataset.to_json().stage("synthesis")?)?;
        out.write_json(&format!("reconstructions/reconstruction_{k:02}.json"), &trip.record())?;
        out.warn_all(&format!("t = {t} ns reconstruction"), &trip.result.warnings);
        out.write(
            &format!("wigner_reconstructed_{k:02}.csv"),
            &wigner(&trip.result.rho, &grid).to_csv(),
        )?;
        let _ = writeln!(
            table,
            "{t},{},{},{},{}",
            rho.mean_photon_number(),
            rho.parity(),
            rho.purity(),
            trip.fidelity
        );
    }
    out.write("states.csv", &table)?;
    Ok(())
}

/// Adiabatic cat preparation for each target lobe amplitude.
fn fig4d(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let space = space(cfg)?;
    let params = cfg.kpo_params()?;
    let alphas = nonempty("cat.alphas", &cfg.cat.alphas)?;
    let t_max = ns_to_us(cfg.drive.t_max_ns);
    let t_delay = ns_to_us(cfg.drive.t_delay_ns);
    let grid = phase_grid(cfg)?;
    let mut table =
        String::from("alpha,beta_max_mhz,cat_size,fidelity,rotation_rad,rotated_fidelity,wigner_negative_volume\n");
    let mut rotated = Vec::new();
    for (k, &alpha) in alphas.iter().enumerate() {
        let result = if cfg.cat.tune_drive {
            tune_cat_drive(space, &params, alpha, t_max, t_delay).stage("cat_preparation")?
        } else {
            let protocol = CatPrepProtocol {
                beta_max: beta_for_lobe_amplitude(&params, alpha),
                t_max,
                t_delay,
            };
            adiabatic_cat_prep(space, &params, &protocol).stage("cat_preparation")?
        };
        out.warn_all(&format!("alpha = {alpha}"), &result.warnings);
        let w = wigner(&result.final_state, &grid);
        out.write(&format!("wigner_cat_{k:02}.csv"), &w.to_csv())?;
        out.write_json(&format!("state_cat_{k:02}.json"), &DensityRecord::from(&result.final_state))?;
        let _ = writeln!(
            table,
            "{alpha},{},{},{},{},{},{}",
            angular_to_mhz(result.protocol.beta_max),
            result.cat_size(),
            result.fidelity,
            result.rotation,
            result.rotated_fidelity,
            w.negative_volume()
        );
        rotated.push(result.rotated_fidelity);
    }
    out.write("cats.csv", &table)?;
    out.record("rotated_fidelities", rotated);
    Ok(())
}

/// Propagation of the configured state under the configured drive.
fn custom(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let space = space(cfg)?;
    let params = cfg.kpo_params()?;
    let beta = mhz_to_angular(*nonempty("drive.beta_mhz", &cfg.drive.beta_mhz)?.first().unwrap());
    let drive = if cfg.drive.profile == "ramp" {
        DriveProfile::SinSquaredRamp {
            beta_max: beta,
            t_max: ns_to_us(cfg.drive.t_max_ns),
        }
    } else {
        DriveProfile::constant(beta)
    };
    let rho0 = configured_state(cfg, space)?;
    let times_ns = time_grid(cfg);
    let traj = propagate(
        &rho0,
        &params,
        &drive,
        ns_to_us(cfg.time.t_final_ns),
        &Sampling::Times {
            times: times_ns.iter().map(|&t| ns_to_us(t)).collect(),
        },
    )
    .stage("propagation")?;
    out.warn_all("propagation", &traj.warnings);
    let mut csv = String::from("t_ns,beta_mhz,mean_photon_number,parity,purity\n");
    for (t, o) in times_ns.iter().zip(&traj.observables) {
        let _ = writeln!(
            csv,
            "{t},{},{},{},{}",
            angular_to_mhz(drive.beta(ns_to_us(*t))),
            o.mean_photon_number,
            o.parity,
            o.purity
        );
    }
    out.write("trajectory.csv", &csv)?;
    let last = traj.final_state();
    out.write_json("final_state.json", &DensityRecord::from(last))?;
    out.write("wigner_final.csv", &wigner(last, &phase_grid(cfg)?).to_csv())?;
    out.record("final_mean_photon_number", last.mean_photon_number());
    Ok(())
}
