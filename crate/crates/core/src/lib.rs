//! Simulation and reconstruction toolkit for a dissipative Kerr parametric
//! oscillator (KPO).
//!
//! The crate covers the full forward and inverse chain:
//!
//! * [`fock`] and [`params`]: truncated Fock-space states and operators, the
//!   rotating-frame Hamiltonian and the circuit-level parameter derivation.
//! * [`dynamics`]: Lindblad propagation, Liouvillian steady states,
//!   two-time correlations and steady-state emission spectra.
//! * [`spectral`]: transient power spectral densities (numerical,
//!   closed-form, Lorentzian) and per-transition bin powers.
//! * [`tomography`]: displacement calibration, the bin-power measurement
//!   model, synthetic datasets and constrained density-matrix estimation.
//! * [`analysis`]: Wigner maps, fidelities, effective potential,
//!   eigenstructure versus drive, adiabatic cat preparation and fits.
//!
//! Angular frequencies are in rad/µs and times in µs throughout.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod ode;
pub mod params;
pub mod spectral;
pub mod tomography;

pub use error::{Error, Result};
pub use fock::{
    annihilation_op, coherent_state, creation_op, displacement_op, fock_state, number_op,
    parity_op, DensityMatrix, FockSpace, Operator, StateVector,
};
pub use num_complex::Complex64;
pub use params::{circuit_to_kpo, flux_tuning, kpo_hamiltonian, CircuitParams, DriveProfile, KpoParams};
