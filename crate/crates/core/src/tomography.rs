//! Displacement calibration, the bin-power measurement model, synthetic
//! datasets and constrained density-matrix reconstruction.
//!
//! A displacement pulse of complex voltage V prepares D(kV)ρD†(kV); the
//! detector reports c_j S_j for each bin j, where S_j is the tail sum
//! Σ_{n≥j} of the displaced populations.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{displacement_elements, DensityMatrix, FockSpace};
use crate::linalg::{self, CMatrix, CVector};

/// Estimator dimension used when none is given.
pub const DEFAULT_ESTIMATOR_DIM: usize = 12;

/// Largest |α|² accepted by the forward model, as a fraction of the Fock
/// dimension.
pub const MAX_DISPLACEMENT_FILL: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Displacement per volt, α = kV.
    pub k: Complex64,
    /// Per-bin detection gains.
    pub c: Vec<f64>,
    #[serde(default)]
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl CalibrationResult {
    pub fn new(k: Complex64, c: Vec<f64>) -> Result<Self> {
        let cal = CalibrationResult {
            k,
            c,
            loss: 0.0,
            flags: vec![],
        };
        cal.validate()?;
        Ok(cal)
    }

    /// Unit conversion and unit gains.
    pub fn ideal(n_bins: usize) -> Self {
        CalibrationResult {
            k: Complex64::new(1.0, 0.0),
            c: vec![1.0; n_bins],
            loss: 0.0,
            flags: vec![],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.re.is_finite() && self.k.im.is_finite()) || self.k.norm() == 0.0 {
            return Err(Error::Calibration("k must be finite and nonzero".into()));
        }
        if self.c.is_empty() {
            return Err(Error::Calibration("no bin gains".into()));
        }
        if let Some(j) = self.c.iter().position(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::Calibration(format!("gain c_{} = {} is not positive", j + 1, self.c[j])));
        }
        Ok(())
    }
}

/// Voltages and measured bin powers; `bin_powers[j][i]` is bin j + 1 at
/// voltage i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyDataset {
    pub voltages: Vec<Complex64>,
    pub bin_powers: Vec<Vec<f64>>,
    pub n_bins: usize,
    pub noise_sigma: f64,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationResult>,
}

impl TomographyDataset {
    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 {
            return Err(Error::Dataset("n_bins must be at least 1".into()));
        }
        if self.bin_powers.len() != self.n_bins {
            return Err(Error::Dataset(format!(
                "{} bin rows for n_bins = {}",
                self.bin_powers.len(),
                self.n_bins
            )));
        }
        if let Some(row) = self.bin_powers.iter().find(|r| r.len() != self.voltages.len()) {
            return Err(Error::Dataset(format!(
                "bin row of length {} for {} voltages",
                row.len(),
                self.voltages.len()
            )));
        }
        if self
            .bin_powers
            .iter()
            .flatten()
            .any(|&x| !(x.is_finite() && x >= 0.0))
        {
            return Err(Error::Dataset("bin powers must be finite and non-negative".into()));
        }
        if self.voltages.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Dataset("non-finite voltage".into()));
        }
        if let Some(cal) = &self.calibration {
            cal.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: TomographyDataset = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }

    /// Copy with every power and gain multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.bin_powers {
            for x in row {
                *x *= s;
            }
        }
        if let Some(cal) = &mut out.calibration {
            for c in &mut cal.c {
                *c *= s;
            }
        }
        out
    }
}

/// 16 phases × amplitudes {0.5, 1.0} in displacement units.
pub fn default_displacements() -> Vec<Complex64> {
    let mut out = Vec::with_capacity(32);
    for amp in [0.5, 1.0] {
        for q in 0..16 {
            out.push(Complex64::from_polar(amp, 2.0 * PI * q as f64 / 16.0));
        }
    }
    out
}

/// Voltages that produce the given displacements under `k`.
pub fn voltages_for(displacements: &[Complex64], k: Complex64) -> Vec<Complex64> {
    displacements.iter().map(|a| a / k).collect()
}

fn check_displacement(alpha: Complex64, dim: usize) -> Result<()> {
    if alpha.norm_sqr() > MAX_DISPLACEMENT_FILL * dim as f64 {
        return Err(Error::Truncation(format!(
            "|alpha|^2 = {:.3} exceeds {MAX_DISPLACEMENT_FILL} x dim = {}",
            alpha.norm_sqr(),
            MAX_DISPLACEMENT_FILL * dim as f64
        )));
    }
    Ok(())
}

/// v_n = D(α)†|n⟩ for n < rows, so ⟨n|DρD†|n⟩ = v_n† ρ v_n.
fn probe_vectors(alpha: Complex64, rows: usize, dim: usize) -> Vec<CVector> {
    let d = displacement_elements(alpha, rows, dim);
    (0..rows)
        .map(|n| CVector::from_iterator(dim, (0..dim).map(|b| d[(n, b)].conj())))
        .collect()
}

fn quadratic_form(v: &CVector, rho: &CMatrix) -> f64 {
    v.dotc(&(rho * v)).re
}

/// c_j S_j(D(kV) ρ D†(kV)) for j = 1..n_bins.
pub fn predict_bin_powers(rho: &DensityMatrix, voltage: Complex64, cal: &CalibrationResult) -> Result<Vec<f64>> {
    cal.validate()?;
    let alpha = cal.k * voltage;
    check_displacement(alpha, rho.dim())?;
    let probes = probe_vectors(alpha, cal.n_bins(), rho.dim());
    Ok(tail_powers(&probes, rho.matrix(), rho.trace(), &cal.c))
}

fn tail_powers(probes: &[CVector], rho: &CMatrix, trace: f64, gains: &[f64]) -> Vec<f64> {
    let mut remaining = trace;
    gains
        .iter()
        .zip(probes)
        .map(|(c, v)| {
            remaining -= quadratic_form(v, rho);
            c * remaining
        })
        .collect()
}

/// Forward model plus independent Gaussian noise (absolute σ) on every bin
/// power, clamped at zero. Deterministic for a given seed.
pub fn synthesize_dataset(
    rho_true: &DensityMatrix,
    voltages: &[Complex64],
    cal: &CalibrationResult,
    noise_sigma: f64,
    seed: u64,
) -> Result<TomographyDataset> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::param("noise_sigma", "must be finite and non-negative"));
    }
    let n_bins = cal.n_bins();
    let mut powers = vec![Vec::with_capacity(voltages.len()); n_bins];
    for &v in voltages {
        let p = predict_bin_powers(rho_true, v, cal)?;
        for (row, x) in powers.iter_mut().zip(p) {
            row.push(x);
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::param("noise_sigma", e.to_string()))?;
    for row in &mut powers {
        for x in row.iter_mut() {
            let noise = if noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            *x = (*x + noise).max(0.0);
        }
    }
    Ok(TomographyDataset {
        voltages: voltages.to_vec(),
        bin_powers: powers,
        n_bins,
        noise_sigma,
        seed: Some(seed),
        calibration: Some(cal.clone()),
    })
}

/// Poisson tail probabilities P(N ≥ j), j = 1..n_bins, for mean x.
pub fn poisson_tails(x: f64, n_bins: usize) -> Vec<f64> {
    let mut term = (-x).exp();
    let mut cumulative = 0.0;
    (0..n_bins)
        .map(|n| {
            if n > 0 {
                term *= x / n as f64;
            }
            cumulative += term;
            (1.0 - cumulative).max(0.0)
        })
        .collect()
}

/// Fits |k| and the gains c from vacuum-displacement data by minimizing
/// Σᵢⱼ (S̃_j(V_i) − c_j S_j(|kV_i⟩))². The gains are the closed-form least
/// squares solution for each |k|; |k| is found by a logarithmic scan
/// followed by golden-section refinement. The returned k is real and
/// positive: vacuum data carry no phase information.
pub fn calibrate_pulses(dataset: &TomographyDataset) -> Result<CalibrationResult> {
    dataset.validate()?;
    let mut amplitudes: Vec<f64> = dataset.voltages.iter().map(|v| v.norm()).collect();
    amplitudes.sort_by(f64::total_cmp);
    amplitudes.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1e-300));
    let distinct = amplitudes.iter().filter(|&&a| a > 0.0).count();
    if distinct < 5 {
        return Err(Error::Calibration(format!(
            "need at least 5 distinct nonzero pulse amplitudes, got {distinct}"
        )));
    }
    let v_max = *amplitudes.last().unwrap();
    let v_min = amplitudes.iter().cloned().find(|&a| a > 0.0).unwrap();

    let objective = |k: f64| -> (f64, Vec<f64>) { calibration_loss(dataset, k) };

    // |k| such that the displaced photon number spans 1e-3 .. 30
    let lo = (1e-3f64).sqrt() / v_max;
    let hi = (30f64).sqrt() / v_min.max(v_max * 1e-3);
    let n_scan = 400;
    let grid: Vec<f64> = (0..n_scan)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n_scan - 1) as f64))
        .collect();
    let losses: Vec<f64> = grid.iter().map(|&k| objective(k).0).collect();
    let best = (0..n_scan)
        .min_by(|&a, &b| losses[a].total_cmp(&losses[b]))
        .unwrap();
    if best == 0 || best == n_scan - 1 {
        return Err(Error::Calibration(format!(
            "loss minimum at the edge of the |k| scan ({:.3e})",
            grid[best]
        )));
    }
    let k = golden_section(|k| objective(k).0, grid[best - 1], grid[best + 1], 1e-13)?;
    let (loss, c) = objective(k);
    let mut flags = Vec::new();
    if let Some(j) = c.iter().position(|&x| x <= 0.0) {
        let msg = format!("non-positive gain c_{} = {:.3e}; data look corrupted", j + 1, c[j]);
        warn!("{msg}");
        flags.push(msg);
        return Err(Error::Calibration(flags.join("; ")));
    }
    Ok(CalibrationResult {
        k: Complex64::new(k, 0.0),
        c,
        loss,
        flags,
    })
}

fn calibration_loss(dataset: &TomographyDataset, k: f64) -> (f64, Vec<f64>) {
    let n_bins = dataset.n_bins;
    let model: Vec<Vec<f64>> = dataset
        .voltages
        .iter()
        .map(|v| poisson_tails((k * v.norm()).powi(2), n_bins))
        .collect();
    let mut loss = 0.0;
    let mut gains = Vec::with_capacity(n_bins);
    for j in 0..n_bins {
        let (mut sy, mut ss) = (0.0, 0.0);
        for (i, m) in model.iter().enumerate() {
            sy += dataset.bin_powers[j][i] * m[j];
            ss += m[j] * m[j];
        }
        let c = if ss > 0.0 { sy / ss } else { 0.0 };
        for (i, m) in model.iter().enumerate() {
            let r = dataset.bin_powers[j][i] - c * m[j];
            loss += r * r;
        }
        gains.push(c);
    }
    (loss, gains)
}

/// Golden-section minimization on [a, b] to relative width `tol`.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..300 {
        if (b - a) <= tol * (a.abs() + b.abs()) {
            return Ok(0.5 * (a + b));
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    Err(Error::NotConverged("golden-section search on |k|".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionOptions {
    /// Estimator dimension; `None` picks the largest identifiable dimension
    /// up to [`DEFAULT_ESTIMATOR_DIM`].
    pub dim: Option<usize>,
    /// Restrict to states commuting with parity.
    pub parity: bool,
    /// Tikhonov weight λ in + λ‖ρ‖²_F.
    pub regularization: f64,
    /// Rotation of the displacement grid (phase reference offset).
    pub phase_offset: f64,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub gradient_tolerance: f64,
    /// Starting point; the maximally mixed state when `None`.
    pub initial: Option<DensityMatrix>,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        ReconstructionOptions {
            dim: None,
            parity: false,
            regularization: 0.0,
            phase_offset: 0.0,
            max_iterations: 100_000,
            relative_tolerance: 1e-10,
            gradient_tolerance: 1e-8,
            initial: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub rho: DensityMatrix,
    pub loss: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub projections: usize,
    pub converged: bool,
    pub parity: bool,
    pub warnings: Vec<String>,
}

/// Number of free real parameters of a density matrix of dimension `dim`.
pub fn free_parameters(dim: usize, parity: bool) -> usize {
    if parity {
        let even = dim.div_ceil(2);
        let odd = dim / 2;
        even * even + odd * odd - 1
    } else {
        dim * dim - 1
    }
}

/// Linear measurement map ρ ↦ c_j (Tr ρ − Σ_{n<j} v_{in}† ρ v_{in}).
struct MeasurementModel {
    dim: usize,
    probes: Vec<Vec<CVector>>,
    gains: Vec<f64>,
}

impl MeasurementModel {
    fn new(voltages: &[Complex64], cal: &CalibrationResult, dim: usize, phase_offset: f64) -> Result<Self> {
        let rot = Complex64::from_polar(1.0, phase_offset);
        let mut probes = Vec::with_capacity(voltages.len());
        for &v in voltages {
            let alpha = cal.k * v * rot;
            check_displacement(alpha, dim)?;
            probes.push(probe_vectors(alpha, cal.n_bins(), dim));
        }
        Ok(MeasurementModel {
            dim,
            probes,
            gains: cal.c.clone(),
        })
    }

    /// predictions[j][i]
    fn forward(&self, rho: &CMatrix) -> Vec<Vec<f64>> {
        let trace = linalg::trace(rho).re;
        let mut out = vec![Vec::with_capacity(self.probes.len()); self.gains.len()];
        for probes in &self.probes {
            for (j, p) in tail_powers(probes, rho, trace, &self.gains).into_iter().enumerate() {
                out[j].push(p);
            }
        }
        out
    }

    /// Adjoint map: Σ_ij w_ij c_j (I − Σ_{n<j} v_in v_in†).
    fn adjoint(&self, weights: &[Vec<f64>]) -> CMatrix {
        let d = self.dim;
        let mut total = 0.0;
        let mut out = CMatrix::zeros(d, d);
        for (i, probes) in self.probes.iter().enumerate() {
            // projector n enters bin j (1-based) for every j > n
            let mut suffix = 0.0;
            let nb = self.gains.len();
            let mut coeff = vec![0.0; nb];
            for j in (0..nb).rev() {
                let w = weights[j][i] * self.gains[j];
                total += w;
                suffix += w;
                coeff[j] = suffix;
            }
            for (n, v) in probes.iter().enumerate() {
                let c = coeff[n];
                if c != 0.0 {
                    out.gerc(Complex64::new(-c, 0.0), v, v, Complex64::new(1.0, 0.0));
                }
            }
        }
        for k in 0..d {
            out[(k, k)] += Complex64::new(total, 0.0);
        }
        out
    }
}

fn project(m: &CMatrix, parity: bool) -> CMatrix {
    let mut x = linalg::hermitize(m);
    if parity {
        crate::fock::symmetrize_parity(&mut x);
    }
    let mut p = linalg::project_density(&x);
    if parity {
        crate::fock::symmetrize_parity(&mut p);
    }
    p
}

/// Minimizes Σᵢⱼ (S̃_j(V_i) − c_j S_j(D ρ D†))² over density matrices (and
/// parity-symmetric ones if requested) with an accelerated projected
/// gradient method using adaptive restart.
pub fn reconstruct_state(
    dataset: &TomographyDataset,
    cal: &CalibrationResult,
    options: &ReconstructionOptions,
) -> Result<ReconstructionResult> {
    dataset.validate()?;
    cal.validate()?;
    if cal.n_bins() != dataset.n_bins {
        return Err(Error::Dataset(format!(
            "calibration has {} gains but the dataset {} bins",
            cal.n_bins(),
            dataset.n_bins
        )));
    }
    let measurements = dataset.len() * dataset.n_bins;
    let dim = match options.dim {
        Some(d) => d,
        None => (1..=DEFAULT_ESTIMATOR_DIM)
            .rev()
            .find(|&d| free_parameters(d, options.parity) <= measurements)
            .unwrap_or(1),
    };
    let space = FockSpace::new(dim)?;
    let unknowns = free_parameters(dim, options.parity);
    if measurements < unknowns {
        return Err(Error::Dataset(format!(
            "{measurements} measurements cannot determine {unknowns} parameters at dim {dim}{}",
            if options.parity { "" } else { " (consider the parity constraint or a smaller dim)" }
        )));
    }
    let model = MeasurementModel::new(&dataset.voltages, cal, dim, options.phase_offset)?;
    let data = &dataset.bin_powers;
    let lambda = options.regularization;

    let residuals = |rho: &CMatrix| -> Vec<Vec<f64>> {
        let pred = model.forward(rho);
        pred.iter()
            .zip(data)
            .map(|(p, y)| p.iter().zip(y).map(|(a, b)| b - a).collect())
            .collect()
    };
    let loss_of = |rho: &CMatrix, r: &[Vec<f64>]| -> f64 {
        let fit: f64 = r.iter().flatten().map(|x| x * x).sum();
        fit + lambda * linalg::frobenius(rho).powi(2)
    };
    let gradient = |rho: &CMatrix, r: &[Vec<f64>]| -> CMatrix {
        let neg: Vec<Vec<f64>> = r.iter().map(|row| row.iter().map(|x| -2.0 * x).collect()).collect();
        model.adjoint(&neg) + rho * Complex64::new(2.0 * lambda, 0.0)
    };

    let lipschitz = 2.0 * operator_norm_sq(&model, options.parity) * 1.02 + 2.0 * lambda;
    if !(lipschitz > 0.0) {
        return Err(Error::Dataset("measurement map is identically zero".into()));
    }
    let step = 1.0 / lipschitz;

    let mut x = match &options.initial {
        Some(init) => {
            if init.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: init.dim(),
                });
            }
            project(init.matrix(), options.parity)
        }
        None => CMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0),
    };
    let mut projections = 1usize;
    let mut r = residuals(&x);
    let mut f = loss_of(&x, &r);
    let mut best = (f, x.clone());
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut quiet = 0usize;

    while iterations < options.max_iterations {
        iterations += 1;
        let ry = residuals(&y);
        let g = gradient(&y, &ry);
        let x_new = project(&(&y - g * Complex64::new(step, 0.0)), options.parity);
        projections += 1;
        grad_norm = linalg::frobenius(&(&y - &x_new)) * lipschitz;
        let r_new = residuals(&x_new);
        let f_new = loss_of(&x_new, &r_new);
        if f_new < best.0 {
            best = (f_new, x_new.clone());
        }
        // adaptive restart when the momentum direction opposes descent
        let restart = f_new > f;
        let t_new = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        y = if restart {
            x_new.clone()
        } else {
            &x_new + (&x_new - &x) * Complex64::new((t - 1.0) / t_new, 0.0)
        };
        let decrease = f - f_new;
        x = x_new;
        r = r_new;
        t = t_new;
        let rel_small = decrease >= 0.0 && decrease <= options.relative_tolerance * f.max(1e-300);
        f = f_new;
        quiet = if rel_small { quiet + 1 } else { 0 };
        if grad_norm < options.gradient_tolerance || quiet >= 20 {
            converged = true;
            break;
        }
    }
    let _ = r;
    let mut warnings = Vec::new();
    if !converged {
        let msg = format!("iteration cap {} reached; returning best iterate", options.max_iterations);
        warn!("{msg}");
        warnings.push(msg);
    }
    let rho = DensityMatrix::sanitized(space, best.1)?;
    let rho = if options.parity { rho.parity_symmetrized() } else { rho };
    Ok(ReconstructionResult {
        loss: best.0,
        rho,
        iterations,
        gradient_norm: grad_norm,
        projections,
        converged,
        parity: options.parity,
        warnings,
    })
}

/// Largest eigenvalue of A*A by power iteration on Hermitian matrices.
fn operator_norm_sq(model: &MeasurementModel, parity: bool) -> f64 {
    let d = model.dim;
    let mut x = CMatrix::from_fn(d, d, |i, j| {
        let s = ((i * 7 + j * 13) % 11) as f64 / 11.0 + 0.1;
        Complex64::new(s, if i == j { 0.0 } else { 0.3 * s })
    });
    x = linalg::hermitize(&x);
    if parity {
        crate::fock::symmetrize_parity(&mut x);
    }
    let mut lambda = 0.0;
    for _ in 0..200 {
        let nrm = linalg::frobenius(&x);
        if nrm == 0.0 {
            return 0.0;
        }
        x /= Complex64::new(nrm, 0.0);
        let ax = model.forward(&x);
        let mut next = model.adjoint(&ax);
        if parity {
            crate::fock::symmetrize_parity(&mut next);
        }
        let new_lambda = linalg::trace_product(&x, &next).re;
        x = linalg::hermitize(&next);
        if (new_lambda - lambda).abs() <= 1e-10 * new_lambda.abs() {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

/// Antipodal-pair comparison S̃_j(+V) vs S̃_j(−V).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiscrepancy {
    pub plus: usize,
    pub minus: usize,
    /// max_j |S̃_j(+V) − S̃_j(−V)| / scale
    pub max: f64,
    /// RMS over bins, same normalization
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    /// Largest measured power; discrepancies are divided by it.
    pub scale: f64,
    pub pairs: Vec<PairDiscrepancy>,
}

impl ParityReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.pairs.iter().map(|p| p.max).fold(0.0, f64::max)
    }

    pub fn rms_discrepancy(&self) -> f64 {
        let n = self.pairs.len().max(1) as f64;
        (self.pairs.iter().map(|p| p.rms * p.rms).sum::<f64>() / n).sqrt()
    }
}

pub fn parity_symmetry_check(dataset: &TomographyDataset) -> Result<ParityReport> {
    dataset.validate()?;
    let v = &dataset.voltages;
    let mut pairs = Vec::new();
    let scale = dataset
        .bin_powers
        .iter()
        .flatten()
        .cloned()
        .fold(0.0, f64::max);
    let norm = if scale > 0.0 { scale } else { 1.0 };
    for i in 0..v.len() {
        if v[i].norm() == 0.0 {
            continue;
        }
        for k in i + 1..v.len() {
            if (v[i] + v[k]).norm() <= 1e-9 * v[i].norm() {
                let diffs: Vec<f64> = (0..dataset.n_bins)
                    .map(|j| (dataset.bin_powers[j][i] - dataset.bin_powers[j][k]) / norm)
                    .collect();
                let max = diffs.iter().map(|x| x.abs()).fold(0.0, f64::max);
                let rms = (diffs.iter().map(|x| x * x).sum::<f64>() / diffs.len() as f64).sqrt();
                pairs.push(PairDiscrepancy {
                    plus: i,
                    minus: k,
                    max,
                    rms,
                });
                break;
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Dataset("no antipodal voltage pairs in the grid".into()));
    }
    Ok(ParityReport { scale, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{cat_state, coherent_state, fock_state};

    fn cal() -> CalibrationResult {
        CalibrationResult::new(Complex64::new(0.12, 0.0), vec![1.0, 0.9, 1.1, 0.8]).unwrap()
    }

    #[test]
    fn vacuum_without_displacement_is_dark() {
        let space = FockSpace::new(12).unwrap();
        let p = predict_bin_powers(&DensityMatrix::vacuum(space), Complex64::new(0.0, 0.0), &cal()).unwrap();
        assert!(p.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn displaced_vacuum_gives_poisson_tails() {
        let space = FockSpace::new(14).unwrap();
        let c = cal();
        let v = Complex64::new(0.0, 1.0) / c.k; // |kV| = 1
        let p = predict_bin_powers(&DensityMatrix::vacuum(space), v, &c).unwrap();
        let e = (-1.0f64).exp();
        let expected = [1.0 - e, 1.0 - 2.0 * e, 1.0 - 2.5 * e, 1.0 - (8.0 / 3.0) * e];
        for j in 0..4 {
            assert!((p[j] - c.c[j] * expected[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_voltage_reproduces_theory() {
        let space = FockSpace::new(14).unwrap();
        let rho = coherent_state(space, Complex64::new(0.7, 0.2)).to_density();
        let c = cal();
        let p = predict_bin_powers(&rho, Complex64::new(0.0, 0.0), &c).unwrap();
        let theory = crate::spectral::bin_powers_of_state(&rho, 4);
        for j in 0..4 {
            assert!((p[j] - c.c[j] * theory.powers[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_consistent_with_forward() {
        let space = FockSpace::new(6).unwrap();
        let volts = voltages_for(&default_displacements(), cal().k);
        let model = MeasurementModel::new(&volts, &cal(), 6, 0.3).unwrap();
        let x = cat_state(space, Complex64::new(0.8, 0.1), true).unwrap().to_density();
        let w: Vec<Vec<f64>> = (0..4).map(|j| (0..32).map(|i| ((i * 3 + j) % 5) as f64 - 2.0).collect()).collect();
        let lhs: f64 = model.forward(x.matrix()).iter().flatten().zip(w.iter().flatten()).map(|(a, b)| a * b).sum();
        let rhs = linalg::trace_product(&model.adjoint(&w), x.matrix()).re;
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn deterministic_synthesis() {
        let space = FockSpace::new(12).unwrap();
        let rho = fock_state(space, 1).unwrap().to_density();
        let volts = voltages_for(&default_displacements(), cal().k);
        let a = synthesize_dataset(&rho, &volts, &cal(), 0.01, 7).unwrap();
        let b = synthesize_dataset(&rho, &volts, &cal(), 0.01, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        let c = synthesize_dataset(&rho, &volts, &cal(), 0.01, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let space = FockSpace::new(12).unwrap();
        let rho = coherent_state(space, Complex64::new(0.3, -0.4)).to_density();
        let volts = voltages_for(&default_displacements(), cal().k);
        let ds = synthesize_dataset(&rho, &volts, &cal(), 0.003, 1).unwrap();
        let text = ds.to_json().unwrap();
        assert!(text.contains("\"voltages\""));
        let back = TomographyDataset::from_json(&text).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn calibration_needs_several_amplitudes() {
        let space = FockSpace::new(12).unwrap();
        let volts: Vec<Complex64> = (0..8).map(|q| Complex64::from_polar(5.0, q as f64)).collect();
        let ds = synthesize_dataset(&DensityMatrix::vacuum(space), &volts, &cal(), 0.0, 0).unwrap();
        assert!(calibrate_pulses(&ds).is_err());
    }

    #[test]
    fn underdetermined_reconstruction_refused() {
        let space = FockSpace::new(12).unwrap();
        let volts = voltages_for(&default_displacements(), cal().k);
        let ds = synthesize_dataset(&DensityMatrix::vacuum(space), &volts, &cal(), 0.0, 0).unwrap();
        let opts = ReconstructionOptions {
            dim: Some(12),
            ..Default::default()
        };
        assert!(reconstruct_state(&ds, &cal(), &opts).is_err());
        let opts = ReconstructionOptions {
            dim: Some(12),
            parity: true,
            ..Default::default()
        };
        assert_eq!(reconstruct_state(&ds, &cal(), &opts).unwrap().rho.dim(), 12);
        let auto = reconstruct_state(&ds, &cal(), &ReconstructionOptions::default()).unwrap();
        assert_eq!(auto.rho.dim(), 11);
    }

    #[test]
    fn zero_data_reconstructs_vacuum() {
        let volts = voltages_for(&default_displacements(), cal().k);
        let ds = TomographyDataset {
            voltages: volts,
            bin_powers: vec![vec![0.0; 32]; 4],
            n_bins: 4,
            noise_sigma: 0.0,
            seed: None,
            calibration: None,
        };
        let opts = ReconstructionOptions {
            dim: Some(8),
            ..Default::default()
        };
        let r = reconstruct_state(&ds, &cal(), &opts).unwrap();
        assert!(r.rho.populations()[0] > 0.99, "{:?}", r.rho.populations());
        assert!(r.rho.matrix()[(0, 0)].re > 0.99);
    }

    #[test]
    fn parity_check_on_symmetric_state() {
        let space = FockSpace::new(12).unwrap();
        let rho = fock_state(space, 2).unwrap().to_density();
        let volts = voltages_for(&default_displacements(), cal().k);
        let ds = synthesize_dataset(&rho, &volts, &cal(), 0.0, 0).unwrap();
        let rep = parity_symmetry_check(&ds).unwrap();
        assert_eq!(rep.pairs.len(), 16);
        assert!(rep.max_discrepancy() <= 1e-12);
    }
}
