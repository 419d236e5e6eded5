//! Physical parameters, the rotating-frame Hamiltonian, drive profiles and
//! the circuit-level derivation of the Kerr parameters.
//!
//! Library units: angular frequencies in rad/µs, times in µs.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, FockSpace, Operator};
use crate::linalg::CMatrix;

/// ν [MHz] → ω = 2πν [rad/µs].
pub fn mhz_to_angular(mhz: f64) -> f64 {
    2.0 * PI * mhz
}

pub fn angular_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

pub fn ns_to_us(ns: f64) -> f64 {
    ns * 1e-3
}

/// Rotating-frame parameters (Δ, χ, κ) in rad/µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpoParams {
    pub detuning: f64,
    pub kerr: f64,
    pub kappa: f64,
}

impl KpoParams {
    pub fn new(detuning: f64, kerr: f64, kappa: f64) -> Result<Self> {
        let p = KpoParams {
            detuning,
            kerr,
            kappa,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_mhz(detuning: f64, kerr: f64, kappa: f64) -> Result<Self> {
        Self::new(mhz_to_angular(detuning), mhz_to_angular(kerr), mhz_to_angular(kappa))
    }

    /// Measured device values: χ/2π = 17.3 MHz, κ/2π = 1.1 MHz.
    pub fn device(detuning_mhz: f64) -> Self {
        Self::from_mhz(detuning_mhz, 17.3, 1.1).expect("device constants are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.detuning.is_finite() {
            return Err(Error::param("detuning", "must be finite"));
        }
        if !(self.kerr.is_finite() && self.kerr > 0.0) {
            return Err(Error::param("kerr", format!("must be positive, got {}", self.kerr)));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::param("kappa", format!("must be non-negative, got {}", self.kappa)));
        }
        Ok(())
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        KpoParams { detuning, ..self }
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        KpoParams { kappa, ..self }
    }

    /// Diagonal energies E_n = Δn − (χ/2)n(n−1) of the undriven oscillator.
    pub fn bare_energy(&self, n: usize) -> f64 {
        let n = n as f64;
        self.detuning * n - 0.5 * self.kerr * n * (n - 1.0)
    }

    /// Classical instability threshold of the vacuum, √(Δ² + κ²/4)/2.
    pub fn classical_threshold(&self) -> f64 {
        0.5 * (self.detuning * self.detuning + 0.25 * self.kappa * self.kappa).sqrt()
    }

    /// Mean photon number of the stable classical fixed point: zero below
    /// threshold, (Δ + √(4β² − κ²/4))/χ above it.
    pub fn classical_photon_number(&self, beta: f64) -> f64 {
        let beta = beta.abs();
        if beta <= self.classical_threshold() {
            return 0.0;
        }
        let root = (4.0 * beta * beta - 0.25 * self.kappa * self.kappa).sqrt();
        ((self.detuning + root) / self.kerr).max(0.0)
    }
}

/// H = Δa†a − (χ/2)a†a†aa + β(a² + a†²).
pub fn kpo_hamiltonian(space: FockSpace, params: &KpoParams, beta: f64) -> Operator {
    let n = space.dim();
    let mut h = CMatrix::zeros(n, n);
    for k in 0..n {
        h[(k, k)] = Complex64::new(params.bare_energy(k), 0.0);
    }
    for k in 2..n {
        let s = beta * ((k * (k - 1)) as f64).sqrt();
        h[(k - 2, k)] = Complex64::new(s, 0.0);
        h[(k, k - 2)] = Complex64::new(s, 0.0);
    }
    Operator::new(space, h).expect("dimension matches by construction")
}

/// Same Hamiltonian assembled from ladder-operator products; used to
/// cross-check [`kpo_hamiltonian`].
pub fn kpo_hamiltonian_from_ladders(space: FockSpace, params: &KpoParams, beta: f64) -> Operator {
    let a = annihilation_op(space).into_matrix();
    let ad = a.adjoint();
    let nop = &ad * &a;
    let kerr = &ad * &ad * &a * &a;
    let pair = &a * &a + &ad * &ad;
    let h = nop * Complex64::new(params.detuning, 0.0) - kerr * Complex64::new(0.5 * params.kerr, 0.0)
        + pair * Complex64::new(beta, 0.0);
    Operator::new(space, h).expect("dimension matches")
}

/// Circuit parameters of a SQUID-array resonator, energies in GHz·h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub charging_energy: f64,
    pub josephson_energy: f64,
    pub squid_count: u32,
    pub josephson_modulation: f64,
    /// External flux in units of the flux quantum.
    pub flux: f64,
}

impl CircuitParams {
    /// Device values: E_C/h = 1.053 GHz, E_J,max/h = 82.79 GHz, N = 10.
    pub fn device() -> Self {
        CircuitParams {
            charging_energy: 1.053,
            josephson_energy: 82.79,
            squid_count: 10,
            josephson_modulation: 0.0,
            flux: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.charging_energy > 0.0 && self.charging_energy.is_finite()) {
            return Err(Error::param("charging_energy", "must be positive"));
        }
        if !(self.josephson_energy > 0.0 && self.josephson_energy.is_finite()) {
            return Err(Error::param("josephson_energy", "must be positive"));
        }
        if self.squid_count == 0 {
            return Err(Error::param("squid_count", "must be at least 1"));
        }
        if !(self.josephson_modulation.abs() <= self.josephson_energy) {
            return Err(Error::param(
                "josephson_modulation",
                "modulation depth cannot exceed the Josephson energy",
            ));
        }
        if !self.flux.is_finite() {
            return Err(Error::param("flux", "must be finite"));
        }
        Ok(())
    }
}

/// Lowest-order Kerr-oscillator parameters of a circuit, all frequencies in
/// the circuit's units (GHz for the device values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitDerivation {
    /// ω_c⁽⁰⁾ = √(8 E_C E_J / N).
    pub bare_frequency: f64,
    /// ω_c = ω_c⁽⁰⁾ − χ.
    pub dressed_frequency: f64,
    /// χ = E_C / N².
    pub kerr: f64,
    /// β = ω_c⁽⁰⁾ δE_J / (8 E_J).
    pub drive: f64,
    /// n₀² = √(E_J / (32 N E_C)).
    pub charge_zpf_sq: f64,
    /// φ₀² = √(2 N E_C / E_J).
    pub phase_zpf_sq: f64,
}

/// Uses E_J,max; see [`josephson_energy_at_flux`] for flux-tuned values.
pub fn circuit_to_kpo(circuit: &CircuitParams) -> Result<CircuitDerivation> {
    circuit.validate()?;
    let ec = circuit.charging_energy;
    let ej = circuit.josephson_energy;
    let n = circuit.squid_count as f64;
    let bare = (8.0 * ec * ej / n).sqrt();
    let kerr = ec / (n * n);
    Ok(CircuitDerivation {
        bare_frequency: bare,
        dressed_frequency: bare - kerr,
        kerr,
        drive: bare * circuit.josephson_modulation / (8.0 * ej),
        charge_zpf_sq: (ej / (32.0 * n * ec)).sqrt(),
        phase_zpf_sq: (2.0 * n * ec / ej).sqrt(),
    })
}

/// E_J(Φ) = E_J,max |cos(πΦ/Φ₀)| for a symmetric SQUID.
pub fn josephson_energy_at_flux(circuit: &CircuitParams) -> f64 {
    circuit.josephson_energy * (PI * circuit.flux).cos().abs()
}

/// ω_c(Φ_e) = ω_c,max √|cos(πΦ_e/Φ₀)|, flux in units of Φ₀.
pub fn flux_tuning(omega_max: f64, flux: f64) -> f64 {
    omega_max * (PI * flux).cos().abs().sqrt()
}

/// Time-dependent parametric drive amplitude β(t) in rad/µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveProfile {
    Constant { beta: f64 },
    /// β_max sin²(πt / 2t_max) for t ≤ t_max, zero afterwards.
    SinSquaredRamp { beta_max: f64, t_max: f64 },
    /// sin² ramp up to β_max, then held at β_max.
    RampThenHold { beta_max: f64, t_max: f64 },
    /// Piecewise-linear interpolation, held constant outside the table.
    Sampled { times: Vec<f64>, values: Vec<f64> },
}

impl DriveProfile {
    pub fn constant(beta: f64) -> Self {
        DriveProfile::Constant { beta }
    }

    pub fn sampled(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let p = DriveProfile::Sampled { times, values };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DriveProfile::Constant { beta } => finite("beta", *beta),
            DriveProfile::SinSquaredRamp { beta_max, t_max }
            | DriveProfile::RampThenHold { beta_max, t_max } => {
                finite("beta_max", *beta_max)?;
                if !(*t_max > 0.0 && t_max.is_finite()) {
                    return Err(Error::param("t_max", "ramp duration must be positive"));
                }
                Ok(())
            }
            DriveProfile::Sampled { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::param(
                        "values",
                        "sampled drive needs matching, non-empty time and value tables",
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::param("times", "sample times must be strictly increasing"));
                }
                if times.iter().chain(values).any(|x| !x.is_finite()) {
                    return Err(Error::param("values", "samples must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        match self {
            DriveProfile::Constant { beta } => *beta,
            DriveProfile::SinSquaredRamp { beta_max, t_max } => {
                if t <= 0.0 || t > *t_max {
                    0.0
                } else {
                    beta_max * (0.5 * PI * t / t_max).sin().powi(2)
                }
            }
            DriveProfile::RampThenHold { beta_max, t_max } => {
                if t <= 0.0 {
                    0.0
                } else if t >= *t_max {
                    *beta_max
                } else {
                    beta_max * (0.5 * PI * t / t_max).sin().powi(2)
                }
            }
            DriveProfile::Sampled { times, values } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let (t0, t1) = (times[k - 1], times[k]);
                    let w = (t - t0) / (t1 - t0);
                    values[k - 1] * (1.0 - w) + values[k] * w
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, DriveProfile::Constant { .. })
    }
}

fn finite(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, "must be finite"))
    }
}
