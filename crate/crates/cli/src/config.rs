//! Experiment configuration.
//!
//! A config file is TOML with frequencies in MHz and times in ns. The
//! user's table is merged over the defaults of the chosen experiment, and
//! the merged result is deserialized into [`ExperimentConfig`]; serializing
//! that value back gives the effective config written next to the outputs.

use std::fmt;
use std::path::{Path, PathBuf};

use kpo::analysis::default_beta_grid;
use kpo::KpoParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const OUTPUT_ROOT_ENV: &str = "KPO_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Fig2b,
    Fig2c,
    Fig2d,
    Fig3,
    Fig4a,
    Fig4b,
    Fig4d,
    Custom,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from));
        write!(f, "{}", s.unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output_dir: String,
    /// Fock-space truncation for simulations.
    pub dim: usize,
    pub physics: PhysicsConfig,
    pub drive: DriveConfig,
    pub time: TimeConfig,
    pub spectrum: SpectrumConfig,
    pub phase_space: PhaseSpaceConfig,
    pub state: StateConfig,
    pub tomography: TomographyConfig,
    pub cat: CatConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub detuning_mhz: f64,
    pub kerr_mhz: f64,
    pub kappa_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    /// Drive amplitudes β/2π.
    pub beta_mhz: Vec<f64>,
    /// "constant" or "ramp" (sin² up to t_max, then off).
    pub profile: String,
    pub t_max_ns: f64,
    pub t_delay_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final_ns: f64,
    pub points: usize,
    /// Snapshot times for slice-based experiments.
    pub slices_ns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// "analytic" or "numeric".
    pub method: String,
    pub alphas: Vec<f64>,
    /// Frequency window relative to the half-pump frequency.
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub points: usize,
    pub n_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpaceConfig {
    pub extent: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    /// "vacuum", "coherent", "fock" or "cat".
    pub kind: String,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub level: usize,
    pub even: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    pub n_bins: usize,
    /// 0 selects the largest identifiable dimension up to 12.
    pub estimator_dim: usize,
    pub parity: bool,
    pub noise_sigma: f64,
    /// Independent noisy datasets (seeds seed, seed+1, ...).
    pub repeats: usize,
    /// Displacement amplitudes |α| of the measurement grid.
    pub amplitudes: Vec<f64>,
    pub phases: usize,
    /// Pulse conversion k (displacement per unit voltage) of the simulated hardware.
    pub k: f64,
    /// Per-bin gains of the simulated hardware.
    pub gains: Vec<f64>,
    /// Voltages of the vacuum calibration pulses.
    pub calibration_voltages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatConfig {
    pub alphas: Vec<f64>,
    /// Fit β_max to each target amplitude instead of using the potential maximum.
    pub tune_drive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub beta_mhz: Vec<f64>,
    pub detuning_mhz: Vec<f64>,
}

fn log_betas_mhz(detuning_mhz: f64, kappa_mhz: f64, points: usize) -> Vec<f64> {
    let p = KpoParams::from_mhz(detuning_mhz, 17.3, kappa_mhz).expect("default parameters are valid");
    default_beta_grid(&p, points)
        .into_iter()
        .map(kpo::params::angular_to_mhz)
        .collect()
}

impl ExperimentConfig {
    /// Defaults for one experiment, matching the device and protocol values
    /// of the corresponding figure.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let detuning = match kind {
            ExperimentKind::Fig2c => 25.3,
            ExperimentKind::Fig2d => 11.2,
            ExperimentKind::Fig4a | ExperimentKind::Fig4b => 24.6,
            ExperimentKind::Fig4d => -6.7,
            ExperimentKind::Fig2b | ExperimentKind::Fig3 | ExperimentKind::Custom => 0.0,
        };
        let kappa = 1.1;
        let dim = match kind {
            ExperimentKind::Fig2b | ExperimentKind::Fig2c => 30,
            ExperimentKind::Fig4a => 16,
            _ => 20,
        };
        let beta_mhz = match kind {
            ExperimentKind::Fig2c | ExperimentKind::Fig2d => log_betas_mhz(detuning, kappa, 40),
            ExperimentKind::Fig4a => vec![3.5, 5.8, 11.5],
            ExperimentKind::Fig4b => vec![5.8],
            _ => vec![0.0],
        };
        let (t_final_ns, points, slices) = match kind {
            ExperimentKind::Fig4a => (400.0, 201, vec![]),
            ExperimentKind::Fig4b => (2000.0, 2, vec![20.0, 2000.0]),
            ExperimentKind::Fig3 => (32.0, 2, vec![0.0, 8.0, 16.0, 24.0, 32.0]),
            _ => (100.0, 101, vec![]),
        };
        ExperimentConfig {
            experiment: kind,
            seed: None,
            output_dir: format!("out/{kind}"),
            dim,
            physics: PhysicsConfig {
                detuning_mhz: detuning,
                kerr_mhz: 17.3,
                kappa_mhz: kappa,
            },
            drive: DriveConfig {
                beta_mhz,
                profile: "constant".into(),
                t_max_ns: 22.0,
                t_delay_ns: 2.5,
            },
            time: TimeConfig {
                t_final_ns,
                points,
                slices_ns: slices,
            },
            spectrum: SpectrumConfig {
                method: "analytic".into(),
                alphas: (0..=20).map(|k| 0.1 * k as f64).collect(),
                min_mhz: if kind == ExperimentKind::Fig2d { -40.0 } else { -180.0 },
                max_mhz: if kind == ExperimentKind::Fig2d { 40.0 } else { 30.0 },
                points: if kind == ExperimentKind::Fig2d { 801 } else { 2101 },
                n_bins: 4,
            },
            phase_space: PhaseSpaceConfig {
                extent: 4.0,
                points: 81,
            },
            state: StateConfig {
                kind: if kind == ExperimentKind::Fig3 { "coherent".into() } else { "cat".into() },
                alpha_re: if kind == ExperimentKind::Fig3 { 1.0 } else { 1.2 },
                alpha_im: 0.0,
                level: 1,
                even: true,
            },
            tomography: TomographyConfig {
                n_bins: 4,
                estimator_dim: 0,
                parity: !matches!(kind, ExperimentKind::Fig3),
                noise_sigma: 0.0,
                repeats: 1,
                amplitudes: vec![0.5, 1.0],
                phases: 16,
                k: 0.12,
                gains: vec![1.0, 0.9, 1.1, 0.8],
                calibration_voltages: (1..=20).map(|v| v as f64).collect(),
            },
            cat: CatConfig {
                alphas: vec![0.64, 0.88, 1.08, 1.2],
                tune_drive: true,
            },
            sweep: SweepConfig {
                beta_mhz: log_betas_mhz(detuning, kappa, 40),
                detuning_mhz: vec![detuning],
            },
        }
    }

    /// Parses a config, merging it over the defaults of its experiment.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let user: toml::Table = toml::from_str(text).map_err(|e| CliError::Config {
            field: "<syntax>".into(),
            message: e.to_string(),
        })?;
        let kind_value = user.get("experiment").ok_or_else(|| CliError::Config {
            field: "experiment".into(),
            message: "missing; one of fig2b, fig2c, fig2d, fig3, fig4a, fig4b, fig4d, custom".into(),
        })?;
        let kind: ExperimentKind = kind_value.clone().try_into().map_err(|_| CliError::Config {
            field: "experiment".into(),
            message: format!("unknown experiment {kind_value}"),
        })?;
        let mut merged = toml::Table::try_from(Self::defaults(kind)).expect("defaults serialize");
        // the default sweep follows the configured detuning unless given
        if let Some(d) = user
            .get("physics")
            .and_then(|p| p.get("detuning_mhz"))
            .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
        {
            let kappa = user
                .get("physics")
                .and_then(|p| p.get("kappa_mhz"))
                .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                .unwrap_or(1.1);
            let defaults = Self::defaults(kind);
            let mut sweep = toml::Table::new();
            if kappa >= 0.0 {
                let grid = log_betas_mhz(d, kappa, 40);
                sweep.insert("beta_mhz".into(), toml::Value::try_from(grid.clone()).unwrap());
                if matches!(kind, ExperimentKind::Fig2c | ExperimentKind::Fig2d) {
                    let mut drive = toml::Table::new();
                    drive.insert("beta_mhz".into(), toml::Value::try_from(grid).unwrap());
                    merge(&mut merged, &table_with("drive", drive));
                }
            } else {
                sweep.insert(
                    "beta_mhz".into(),
                    toml::Value::try_from(defaults.sweep.beta_mhz).unwrap(),
                );
            }
            sweep.insert("detuning_mhz".into(), toml::Value::try_from(vec![d]).unwrap());
            merge(&mut merged, &table_with("sweep", sweep));
        }
        merge(&mut merged, &user);
        let cfg: ExperimentConfig = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| {
            CliError::Config {
                field: field_from_message(&e.to_string()),
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Output directory, placed under `KPO_OUTPUT_ROOT` when that is set and
    /// the configured directory is relative.
    pub fn output_path(&self) -> PathBuf {
        let dir = PathBuf::from(&self.output_dir);
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir,
        }
    }

    pub fn kpo_params(&self) -> Result<KpoParams, CliError> {
        KpoParams::from_mhz(self.physics.detuning_mhz, self.physics.kerr_mhz, self.physics.kappa_mhz)
            .map_err(|e| CliError::Config {
                field: "physics".into(),
                message: e.to_string(),
            })
    }

    /// Seed for stochastic stages; required once any noise is requested.
    pub fn stochastic_seed(&self) -> Result<u64, CliError> {
        match self.seed {
            Some(s) => Ok(s),
            None if self.tomography.noise_sigma == 0.0 => Ok(0),
            None => Err(invalid("seed", "required when tomography.noise_sigma > 0")),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let finite = |field: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, "must be finite"))
            }
        };
        finite("physics.detuning_mhz", self.physics.detuning_mhz)?;
        if !(self.physics.kerr_mhz.is_finite() && self.physics.kerr_mhz > 0.0) {
            return Err(invalid("physics.kerr_mhz", "must be positive"));
        }
        if !(self.physics.kappa_mhz.is_finite() && self.physics.kappa_mhz >= 0.0) {
            return Err(invalid("physics.kappa_mhz", "must be non-negative"));
        }
        if !(2..=200).contains(&self.dim) {
            return Err(invalid("dim", "must lie in 2..=200"));
        }
        if self.output_dir.trim().is_empty() {
            return Err(invalid("output_dir", "must not be empty"));
        }
        for (i, b) in self.drive.beta_mhz.iter().enumerate() {
            finite(&format!("drive.beta_mhz[{i}]"), *b)?;
        }
        if !matches!(self.drive.profile.as_str(), "constant" | "ramp") {
            return Err(invalid("drive.profile", "must be \"constant\" or \"ramp\""));
        }
        if !(self.drive.t_max_ns > 0.0 && self.drive.t_max_ns.is_finite()) {
            return Err(invalid("drive.t_max_ns", "must be positive"));
        }
        if !(self.drive.t_delay_ns >= 0.0 && self.drive.t_delay_ns.is_finite()) {
            return Err(invalid("drive.t_delay_ns", "must be non-negative"));
        }
        if !(self.time.t_final_ns > 0.0 && self.time.t_final_ns.is_finite()) {
            return Err(invalid("time.t_final_ns", "must be positive"));
        }
        if self.time.points < 2 {
            return Err(invalid("time.points", "need at least 2"));
        }
        if self.time.slices_ns.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(invalid("time.slices_ns", "slices must be finite and non-negative"));
        }
        if self.time.slices_ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("time.slices_ns", "slices must be strictly increasing"));
        }
        if !matches!(self.spectrum.method.as_str(), "analytic" | "numeric") {
            return Err(invalid("spectrum.method", "must be \"analytic\" or \"numeric\""));
        }
        if !(self.spectrum.max_mhz > self.spectrum.min_mhz) {
            return Err(invalid("spectrum.max_mhz", "must exceed spectrum.min_mhz"));
        }
        if self.spectrum.points < 2 {
            return Err(invalid("spectrum.points", "need at least 2"));
        }
        if self.spectrum.n_bins == 0 {
            return Err(invalid("spectrum.n_bins", "must be at least 1"));
        }
        if self.spectrum.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("spectrum.alphas", "amplitudes must be finite and non-negative"));
        }
        if !(self.phase_space.extent > 0.0 && self.phase_space.extent.is_finite()) {
            return Err(invalid("phase_space.extent", "must be positive"));
        }
        if self.phase_space.points < 2 {
            return Err(invalid("phase_space.points", "need at least 2"));
        }
        if !matches!(self.state.kind.as_str(), "vacuum" | "coherent" | "fock" | "cat") {
            return Err(invalid("state.kind", "must be vacuum, coherent, fock or cat"));
        }
        finite("state.alpha_re", self.state.alpha_re)?;
        finite("state.alpha_im", self.state.alpha_im)?;
        if self.state.level >= self.dim {
            return Err(invalid("state.level", "must be below dim"));
        }
        let t = &self.tomography;
        if !(1..=8).contains(&t.n_bins) {
            return Err(invalid("tomography.n_bins", "must lie in 1..=8"));
        }
        if t.gains.len() != t.n_bins {
            return Err(invalid("tomography.gains", "need one gain per bin"));
        }
        if t.gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(invalid("tomography.gains", "gains must be positive"));
        }
        if !(t.k.is_finite() && t.k > 0.0) {
            return Err(invalid("tomography.k", "must be positive"));
        }
        if !(t.noise_sigma.is_finite() && t.noise_sigma >= 0.0) {
            return Err(invalid("tomography.noise_sigma", "must be non-negative"));
        }
        if t.repeats == 0 {
            return Err(invalid("tomography.repeats", "must be at least 1"));
        }
        if t.amplitudes.is_empty() || t.amplitudes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(invalid("tomography.amplitudes", "need positive amplitudes"));
        }
        if t.phases == 0 {
            return Err(invalid("tomography.phases", "must be at least 1"));
        }
        if t.estimator_dim == 1 || t.estimator_dim > 40 {
            return Err(invalid("tomography.estimator_dim", "must be 0 (auto) or in 2..=40"));
        }
        if t.calibration_voltages.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tomography.calibration_voltages", "must be finite"));
        }
        if self.cat.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(invalid("cat.alphas", "amplitudes must be positive"));
        }
        for (i, b) in self.sweep.beta_mhz.iter().enumerate() {
            finite(&format!("sweep.beta_mhz[{i}]"), *b)?;
        }
        for (i, d) in self.sweep.detuning_mhz.iter().enumerate() {
            finite(&format!("sweep.detuning_mhz[{i}]"), *d)?;
        }
        if t.noise_sigma > 0.0 && self.seed.is_none() {
            return Err(invalid("seed", "required when tomography.noise_sigma > 0"));
        }
        Ok(())
    }
}

pub(crate) fn invalid(field: &str, message: &str) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn table_with(key: &str, inner: toml::Table) -> toml::Table {
    let mut t = toml::Table::new();
    t.insert(key.into(), toml::Value::Table(inner));
    t
}

/// Recursively overlays `over` onto `base`; arrays and scalars replace.
fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Pulls the dotted key path out of a toml error message, if present.
fn field_from_message(msg: &str) -> String {
    for marker in ["for key `", "field `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "<config>".into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_for_every_experiment() {
        for kind in [
            ExperimentKind::Fig2b,
            ExperimentKind::Fig2c,
            ExperimentKind::Fig2d,
            ExperimentKind::Fig3,
            ExperimentKind::Fig4a,
            ExperimentKind::Fig4b,
            ExperimentKind::Fig4d,
            ExperimentKind::Custom,
        ] {
            ExperimentConfig::defaults(kind).validate().unwrap();
        }
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = ExperimentConfig::from_toml("experiment = \"fig2c\"\nseed = 3\n[physics]\ndetuning_mhz = 20.0\n").unwrap();
        assert_eq!(cfg.physics.detuning_mhz, 20.0);
        assert_eq!(cfg.drive.beta_mhz.len(), 40);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn negative_kappa_names_the_field() {
        let err = ExperimentConfig::from_toml("experiment = \"fig2c\"\n[physics]\nkappa_mhz = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("physics.kappa_mhz"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::from_toml("experiment = \"fig2c\"\n[physics]\nkapa_mhz = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("kapa_mhz"), "{err}");
    }

    #[test]
    fn noise_requires_seed() {
        let err = ExperimentConfig::from_toml("experiment = \"fig3\"\n[tomography]\nnoise_sigma = 0.01\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }
}
