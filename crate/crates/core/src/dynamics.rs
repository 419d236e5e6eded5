//! Open-system dynamics of the driven KPO: Lindblad propagation, the
//! vectorized Liouvillian, steady states, two-time correlations and the
//! steady-state emission spectrum.
//!
//! Density matrices are flattened column-major (index m + n·dim), matching
//! nalgebra storage, so vec(AXB) = (Bᵀ ⊗ A) vec(X).

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, number_op, DensityMatrix, FockSpace, Operator};
use crate::linalg::{self, CMatrix, CVector, I, ONE, ZERO};
use crate::ode::{integrate, OdeOptions};
use crate::params::{kpo_hamiltonian, DriveProfile, KpoParams};

/// −i[H,ρ] + κ(aρa† − ½{a†a, ρ}) for an arbitrary square matrix ρ.
pub fn lindblad_rhs_matrix(rho: &CMatrix, h: &Operator, kappa: f64) -> Result<CMatrix> {
    let n = h.dim();
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rho.nrows(),
        });
    }
    let hm = h.matrix();
    let a = annihilation_op(h.space()).into_matrix();
    let num = number_op(h.space()).into_matrix();
    let comm = hm * rho - rho * hm;
    let jump = &a * rho * a.adjoint();
    let anti = &num * rho + rho * &num;
    Ok(comm * (-I) + (jump - anti * Complex64::new(0.5, 0.0)) * Complex64::new(kappa, 0.0))
}

pub fn lindblad_rhs(rho: &DensityMatrix, h: &Operator, kappa: f64) -> Result<CMatrix> {
    lindblad_rhs_matrix(rho.matrix(), h, kappa)
}

/// Banded O(dim²) evaluation of the KPO Lindbladian, used inside the
/// integrator. The drive amplitude is supplied per call so the same
/// generator serves time-dependent drives.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    dim: usize,
    energies: Vec<f64>,
    // pair[k] = √(k(k−1)) = ⟨k−2|a²|k⟩
    pair: Vec<f64>,
    kappa: f64,
}

impl LindbladGenerator {
    pub fn new(space: FockSpace, params: &KpoParams) -> Self {
        let dim = space.dim();
        LindbladGenerator {
            dim,
            energies: (0..dim).map(|k| params.bare_energy(k)).collect(),
            pair: (0..dim).map(|k| ((k * k.saturating_sub(1)) as f64).sqrt()).collect(),
            kappa: params.kappa,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes L(ρ) into `out`; both are column-major dim² slices.
    pub fn apply(&self, beta: f64, rho: &[Complex64], out: &mut [Complex64]) {
        self.apply_terms(beta, rho, out, true);
    }

    /// L(ρ) without the diagonal-energy commutator when `energies` is false.
    fn apply_terms(&self, beta: f64, rho: &[Complex64], out: &mut [Complex64], energies: bool) {
        let d = self.dim;
        let s = &self.pair;
        let half_kappa = 0.5 * self.kappa;
        for n in 0..d {
            let col = n * d;
            for m in 0..d {
                let r = rho[col + m];
                let mut comm = if energies {
                    r * (self.energies[m] - self.energies[n])
                } else {
                    ZERO
                };
                if beta != 0.0 {
                    let mut acc = ZERO;
                    if m + 2 < d {
                        acc += rho[col + m + 2] * s[m + 2];
                    }
                    if m >= 2 {
                        acc += rho[col + m - 2] * s[m];
                    }
                    if n >= 2 {
                        acc -= rho[col - 2 * d + m] * s[n];
                    }
                    if n + 2 < d {
                        acc -= rho[col + 2 * d + m] * s[n + 2];
                    }
                    comm += acc * beta;
                }
                let mut diss = -r * (half_kappa * (m + n) as f64);
                if m + 1 < d && n + 1 < d {
                    diss += rho[col + d + m + 1] * (self.kappa * (((m + 1) * (n + 1)) as f64).sqrt());
                }
                out[col + m] = Complex64::new(comm.im, -comm.re) + diss;
            }
        }
    }
}

/// Interaction picture with respect to the diagonal part H₀ of the
/// Hamiltonian: ρ̃ = e^{iH₀t} ρ e^{−iH₀t}. Removing the fast diagonal phase
/// rotation keeps the explicit integrator away from its stability boundary
/// on weakly damped high-lying coherences.
struct Rotating<'a> {
    generator: &'a LindbladGenerator,
    u: Vec<Complex64>,
    lab: Vec<Complex64>,
}

impl<'a> Rotating<'a> {
    fn new(generator: &'a LindbladGenerator) -> Self {
        let d = generator.dim;
        Rotating {
            generator,
            u: vec![ONE; d],
            lab: vec![ZERO; d * d],
        }
    }

    fn set_time(&mut self, t: f64) {
        for (u, e) in self.u.iter_mut().zip(&self.generator.energies) {
            *u = Complex64::from_polar(1.0, -e * t);
        }
    }

    /// ρ = e^{−iH₀t} ρ̃ e^{iH₀t}.
    fn to_lab(&mut self, t: f64, y: &[Complex64]) -> &[Complex64] {
        self.set_time(t);
        let d = self.generator.dim;
        for n in 0..d {
            let un = self.u[n].conj();
            for m in 0..d {
                self.lab[n * d + m] = self.u[m] * y[n * d + m] * un;
            }
        }
        &self.lab
    }

    fn rhs(&mut self, t: f64, beta: f64, y: &[Complex64], out: &mut [Complex64]) {
        self.to_lab(t, y);
        self.generator.apply_terms(beta, &self.lab, out, false);
        let d = self.generator.dim;
        for n in 0..d {
            let un = self.u[n];
            for m in 0..d {
                out[n * d + m] *= self.u[m].conj() * un;
            }
        }
    }
}

/// (aρ) for a column-major dim² slice.
fn apply_annihilation(d: usize, rho: &[Complex64], out: &mut [Complex64]) {
    for n in 0..d {
        for m in 0..d {
            out[n * d + m] = if m + 1 < d {
                rho[n * d + m + 1] * ((m + 1) as f64).sqrt()
            } else {
                ZERO
            };
        }
    }
}

/// Tr[a† X] = Σ_k √(k+1) X_{k,k+1}.
fn trace_adag(d: usize, x: &[Complex64]) -> Complex64 {
    (0..d - 1).map(|k| x[(k + 1) * d + k] * ((k + 1) as f64).sqrt()).sum()
}

fn to_matrix(d: usize, v: &[Complex64]) -> CMatrix {
    CMatrix::from_column_slice(d, d, v)
}

/// Output sampling for [`propagate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// `count` equally spaced snapshots including t = 0 and t_final.
    Uniform { count: usize },
    /// Explicit strictly increasing times within [0, t_final].
    Times { times: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub mean_photon_number: f64,
    pub parity: f64,
    pub purity: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub observables: Vec<Observables>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectories hold at least one snapshot")
    }

    pub fn mean_photon_numbers(&self) -> Vec<f64> {
        self.observables.iter().map(|o| o.mean_photon_number).collect()
    }
}

fn sample_times(t_final: f64, record: &Sampling) -> Result<Vec<f64>> {
    let times = match record {
        Sampling::Uniform { count } => {
            if *count < 2 {
                return Err(Error::param("record", "uniform sampling needs at least 2 points"));
            }
            (0..*count)
                .map(|k| t_final * k as f64 / (*count - 1) as f64)
                .collect()
        }
        Sampling::Times { times } => times.clone(),
    };
    if times.is_empty() {
        return Err(Error::param("record", "no sampling times"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("record", "sampling times must be strictly increasing"));
    }
    if times[0] < 0.0 || *times.last().unwrap() > t_final * (1.0 + 1e-12) {
        return Err(Error::param("record", "sampling times must lie within [0, t_final]"));
    }
    Ok(times)
}

/// Solves the master equation with drive β(t) from t = 0 to `t_final` (µs).
pub fn propagate(
    rho0: &DensityMatrix,
    params: &KpoParams,
    drive: &DriveProfile,
    t_final: f64,
    record: &Sampling,
) -> Result<Trajectory> {
    propagate_with(rho0, params, drive, t_final, record, &OdeOptions::default())
}

pub fn propagate_with(
    rho0: &DensityMatrix,
    params: &KpoParams,
    drive: &DriveProfile,
    t_final: f64,
    record: &Sampling,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    params.validate()?;
    drive.validate()?;
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::param("t_final", "must be finite and non-negative"));
    }
    let times = sample_times(t_final, record)?;
    let space = rho0.space();
    let d = space.dim();
    let generator = LindbladGenerator::new(space, params);
    let y0: Vec<Complex64> = rho0.matrix().as_slice().to_vec();
    let mut frame = Rotating::new(&generator);
    let mut output_frame = Rotating::new(&generator);

    let mut states = Vec::with_capacity(times.len());
    let mut observables = Vec::with_capacity(times.len());
    let mut warnings: Vec<String> = Vec::new();
    let mut warned_truncation = false;
    integrate(
        |t, y, dy| frame.rhs(t, drive.beta(t), y, dy),
        0.0,
        &y0,
        &times,
        opts,
        |t, y| {
            let state = DensityMatrix::sanitized(space, to_matrix(d, output_frame.to_lab(t, y)))?;
            if !warned_truncation {
                if let Some(w) = state.truncation_warning() {
                    warn!("t = {t:.4} us: {w}");
                    warnings.push(format!("t = {t:.6} us: {w}"));
                    warned_truncation = true;
                }
            }
            observables.push(Observables {
                mean_photon_number: state.mean_photon_number(),
                parity: state.parity(),
                purity: state.purity(),
            });
            states.push(state);
            Ok(())
        },
    )?;
    Ok(Trajectory {
        times,
        states,
        observables,
        warnings,
    })
}

/// Dense superoperator L with vec(L̂ρ) = L·vec(ρ), size dim² × dim².
pub fn liouvillian_matrix(space: FockSpace, params: &KpoParams, beta: f64) -> CMatrix {
    let d = space.dim();
    let id = CMatrix::identity(d, d);
    let h = kpo_hamiltonian(space, params, beta).into_matrix();
    let a = annihilation_op(space).into_matrix();
    let num = number_op(space).into_matrix();
    let k = Complex64::new(params.kappa, 0.0);
    let half = Complex64::new(0.5, 0.0);
    let coherent = (id.kronecker(&h) - h.transpose().kronecker(&id)) * (-I);
    let jump = a.conjugate().kronecker(&a);
    let anti = id.kronecker(&num) + num.transpose().kronecker(&id);
    coherent + (jump - anti * half) * k
}

/// Flattened indices (m + n·dim) with (m + n) of the given parity. The
/// Liouvillian never couples the two sets.
pub(crate) fn sector_indices(dim: usize, even: bool) -> Vec<usize> {
    let mut idx = Vec::new();
    for n in 0..dim {
        for m in 0..dim {
            if ((m + n) % 2 == 0) == even {
                idx.push(m + n * dim);
            }
        }
    }
    idx
}

fn select_block(full: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(idx.len(), idx.len(), |i, j| full[(idx[i], idx[j])])
}

/// Unique stationary state of the Liouvillian.
pub fn steady_state(space: FockSpace, params: &KpoParams, beta: f64) -> Result<DensityMatrix> {
    params.validate()?;
    if params.kappa <= 0.0 {
        return Err(Error::param("kappa", "steady state requires kappa > 0"));
    }
    let d = space.dim();
    let full = liouvillian_matrix(space, params, beta);
    let idx = sector_indices(d, true);
    let block = select_block(&full, &idx);
    let n = idx.len();

    // Replace one balance equation by the trace condition.
    let mut sys = block.clone();
    for (j, &flat) in idx.iter().enumerate() {
        let diag = flat % d == flat / d;
        sys[(0, j)] = if diag { ONE } else { ZERO };
    }
    let mut rhs = CVector::zeros(n);
    rhs[0] = ONE;
    let lu = sys.lu();
    let pivots = lu.u().diagonal();
    let max_pivot = pivots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let min_pivot = pivots.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-13 * max_pivot {
        return Err(Error::DegenerateSteadyState(format!(
            "pivot ratio {:.2e} in the trace-constrained system",
            min_pivot / max_pivot
        )));
    }
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateSteadyState("singular trace-constrained system".into()))?;
    let residual = (&block * &x).norm();
    if residual > 1e-8 {
        return Err(Error::DegenerateSteadyState(format!(
            "stationarity residual {residual:.2e} after imposing the trace condition"
        )));
    }
    let mut flat = vec![ZERO; d * d];
    for (j, &f) in idx.iter().enumerate() {
        flat[f] = x[j];
    }
    let rho = linalg::hermitize(&to_matrix(d, &flat));
    let state = DensityMatrix::sanitized(space, rho)?;
    if let Some(w) = state.truncation_warning() {
        warn!("steady state at beta = {beta}: {w}");
    }
    Ok(state)
}

/// ‖L(ρ)‖_F for a state under constant drive.
pub fn stationarity_residual(rho: &DensityMatrix, params: &KpoParams, beta: f64) -> f64 {
    let g = LindbladGenerator::new(rho.space(), params);
    let mut out = vec![ZERO; rho.dim() * rho.dim()];
    g.apply(beta, rho.matrix().as_slice(), &mut out);
    out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// g(τ) = ∫₀^∞ dt ⟨a†(t+τ)a(t)⟩ for a relaxing initial state.
    Transient,
    /// ⟨a†(τ)a(0)⟩ in the steady state.
    Steady,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationOptions {
    /// Lag spacing (µs).
    pub lag_step: f64,
    /// Sampling stops once an upper bound on |g(τ)| drops below this
    /// fraction of its value at τ = 0.
    pub decay_tolerance: f64,
    /// Initial t-integration horizon in units of 1/κ.
    pub horizon: f64,
    /// Largest horizon (t and τ) in units of 1/κ before giving up.
    pub horizon_cap: f64,
    /// Relative size of the neglected t-integral tail.
    pub tail_tolerance: f64,
    pub ode: OdeOptions,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            lag_step: 1e-3,
            decay_tolerance: 1e-7,
            horizon: 12.0,
            horizon_cap: 120.0,
            tail_tolerance: 1e-4,
            ode: OdeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub mode: CorrelationMode,
    /// Uniformly spaced lags starting at 0 (µs).
    pub lags: Vec<f64>,
    pub values: Vec<Complex64>,
    /// t-integration horizon actually used (transient mode only).
    pub horizon: Option<f64>,
}

impl CorrelationRecord {
    pub fn lag_step(&self) -> f64 {
        if self.lags.len() > 1 {
            self.lags[1] - self.lags[0]
        } else {
            0.0
        }
    }
}

/// Two-time correlation. In steady mode `rho0` only fixes the Hilbert space.
pub fn two_time_correlation(
    rho0: &DensityMatrix,
    params: &KpoParams,
    beta: f64,
    mode: CorrelationMode,
) -> Result<CorrelationRecord> {
    two_time_correlation_with(rho0, params, beta, mode, &CorrelationOptions::default())
}

pub fn two_time_correlation_with(
    rho0: &DensityMatrix,
    params: &KpoParams,
    beta: f64,
    mode: CorrelationMode,
    opts: &CorrelationOptions,
) -> Result<CorrelationRecord> {
    params.validate()?;
    if params.kappa <= 0.0 {
        return Err(Error::param("kappa", "correlations require kappa > 0"));
    }
    if !(opts.lag_step > 0.0) {
        return Err(Error::param("lag_step", "must be positive"));
    }
    let space = rho0.space();
    let d = space.dim();
    let generator = LindbladGenerator::new(space, params);
    match mode {
        CorrelationMode::Transient => {
            if beta != 0.0 {
                return Err(Error::param(
                    "beta",
                    "transient correlations need the drive off (the integral over t diverges otherwise)",
                ));
            }
            // With the drive off the Liouvillian preserves every band m − n,
            // and only the (k, k+1) band of W enters Tr[a†·].
            let (w, horizon) = integrated_field(&generator, rho0, params.kappa, opts)?;
            let mut band = vec![ZERO; d * d];
            for (k, wk) in w.iter().enumerate() {
                band[(k + 1) * d + k] = *wk;
            }
            let (lags, values) = regression(&generator, 0.0, band, params.kappa, opts)?;
            Ok(CorrelationRecord {
                mode,
                lags,
                values,
                horizon: Some(horizon),
            })
        }
        CorrelationMode::Steady => {
            let ss = steady_state(space, params, beta)?;
            let mut x = vec![ZERO; d * d];
            apply_annihilation(d, ss.matrix().as_slice(), &mut x);
            let (lags, values) = regression(&generator, beta, x, params.kappa, opts)?;
            Ok(CorrelationRecord {
                mode,
                lags,
                values,
                horizon: None,
            })
        }
    }
}

/// The (k, k+1) band of W = ∫₀^T a ρ(t) dt, i.e. ∫ √(k+1) ρ_{k+1,k+1} dt,
/// integrated alongside ρ(t) with the horizon T extended until the
/// neglected tail ∫_T^∞ ⟨n⟩ dt = ⟨n(T)⟩/κ is below tolerance.
fn integrated_field(
    generator: &LindbladGenerator,
    rho0: &DensityMatrix,
    kappa: f64,
    opts: &CorrelationOptions,
) -> Result<(Vec<Complex64>, f64)> {
    let d = generator.dim();
    let dd = d * d;
    let mut state = vec![ZERO; dd + d - 1];
    state[..dd].copy_from_slice(rho0.matrix().as_slice());
    let mut frame = Rotating::new(generator);
    let mut t = 0.0;
    let mut horizon = opts.horizon / kappa;
    let cap = opts.horizon_cap / kappa;
    loop {
        let mut next = state.clone();
        integrate(
            |t, y, dy| {
                let (rho, _) = y.split_at(dd);
                let (drho, dw) = dy.split_at_mut(dd);
                frame.rhs(t, 0.0, rho, drho);
                // populations are frame independent
                for (k, w) in dw.iter_mut().enumerate() {
                    *w = rho[(k + 1) * (d + 1)] * ((k + 1) as f64).sqrt();
                }
            },
            t,
            &state,
            &[horizon],
            &opts.ode,
            |_, y| {
                next.copy_from_slice(y);
                Ok(())
            },
        )?;
        state = next;
        t = horizon;
        let n_t: f64 = (1..d).map(|k| k as f64 * state[k * (d + 1)].re).sum();
        let total: f64 = state[dd..].iter().map(|z| z.norm()).sum();
        if n_t / kappa <= opts.tail_tolerance * total || total == 0.0 {
            return Ok((state[dd..].to_vec(), horizon));
        }
        if horizon >= cap {
            return Err(Error::InsufficientDecay { horizon });
        }
        horizon = (horizon * 1.5).min(cap);
    }
}

/// Samples Tr[a† e^{Lτ} X] on a uniform lag grid until it has decayed.
fn regression(
    generator: &LindbladGenerator,
    beta: f64,
    x0: Vec<Complex64>,
    kappa: f64,
    opts: &CorrelationOptions,
) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let d = generator.dim();
    let bound = |x: &[Complex64]| -> f64 {
        (0..d - 1)
            .map(|k| x[(k + 1) * d + k].norm() * ((k + 1) as f64).sqrt())
            .sum()
    };
    let mut lags = vec![0.0];
    let mut values = vec![trace_adag(d, &x0)];
    let scale = bound(&x0).max(norm(&x0));
    if scale == 0.0 {
        return Ok((lags, values));
    }
    let cap = opts.horizon_cap / kappa;
    let mut frame = Rotating::new(generator);
    let mut output_frame = Rotating::new(generator);
    // Integrate in chunks so the stopping rule can be checked as we go; the
    // state stays in the rotating frame throughout (identity at τ = 0).
    let chunk = 256usize;
    let mut x = x0;
    let mut k0 = 0usize;
    loop {
        let outputs: Vec<f64> = (1..=chunk).map(|j| (k0 + j) as f64 * opts.lag_step).collect();
        let t_start = k0 as f64 * opts.lag_step;
        let mut done = false;
        let mut last = x.clone();
        let result = integrate(
            |t, y, dy| frame.rhs(t, beta, y, dy),
            t_start,
            &x,
            &outputs,
            &opts.ode,
            |t, y| {
                if done {
                    return Ok(());
                }
                lags.push(t);
                values.push(trace_adag(d, output_frame.to_lab(t, y)));
                if bound(y).max(norm(y) * 1e-3) <= opts.decay_tolerance * scale {
                    done = true;
                }
                last.copy_from_slice(y);
                Ok(())
            },
        );
        result?;
        if done {
            return Ok((lags, values));
        }
        x = last;
        k0 += chunk;
        if k0 as f64 * opts.lag_step > cap {
            return Err(Error::InsufficientDecay {
                horizon: k0 as f64 * opts.lag_step,
            });
        }
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// 2κ Re Σ_k w_k g(τ_k) e^{−iωτ_k} with trapezoid weights on a uniform lag
/// grid. On a grid of M equally spaced frequencies spanning exactly 2π/Δτ
/// with M > number of lags, (1/2π)Σ S Δω = κ g(0) holds exactly.
pub fn correlation_spectrum(record: &CorrelationRecord, kappa: f64, frequencies: &[f64]) -> Vec<f64> {
    let h = record.lag_step();
    let g = &record.values;
    if g.len() < 2 {
        return vec![0.0; frequencies.len()];
    }
    let weights: Vec<f64> = (0..g.len())
        .map(|k| if k == 0 || k == g.len() - 1 { 0.5 * h } else { h })
        .collect();
    let t0 = record.lags[0];
    frequencies
        .iter()
        .map(|&w| {
            let step = Complex64::from_polar(1.0, -w * h);
            let mut phase = Complex64::from_polar(1.0, -w * t0);
            let mut acc = ZERO;
            for (gk, wk) in g.iter().zip(&weights) {
                acc += gk * phase * *wk;
                phase *= step;
            }
            2.0 * kappa * acc.re
        })
        .collect()
}

/// Steady-state emission spectrum S(ω) = 2κ Re Tr[a† (iω − L)⁻¹ (a ρ_ss)],
/// ω measured from half the pump frequency.
pub fn steady_psd(space: FockSpace, params: &KpoParams, beta: f64, frequencies: &[f64]) -> Result<Vec<f64>> {
    let ss = steady_state(space, params, beta)?;
    steady_psd_for(&ss, params, beta, frequencies)
}

/// [`steady_psd`] with a precomputed steady state.
pub fn steady_psd_for(
    ss: &DensityMatrix,
    params: &KpoParams,
    beta: f64,
    frequencies: &[f64],
) -> Result<Vec<f64>> {
    let space = ss.space();
    let d = space.dim();
    let full = liouvillian_matrix(space, params, beta);
    let idx = sector_indices(d, false);
    let block = select_block(&full, &idx);
    let mut a_rho = vec![ZERO; d * d];
    apply_annihilation(d, ss.matrix().as_slice(), &mut a_rho);
    let a = annihilation_op(space).into_matrix();
    let b = CVector::from_iterator(idx.len(), idx.iter().map(|&f| a_rho[f]));
    let c = CVector::from_iterator(idx.len(), idx.iter().map(|&f| a.as_slice()[f]));
    if b.norm() == 0.0 {
        return Ok(vec![0.0; frequencies.len()]);
    }
    let (q, h) = block.hessenberg().unpack();
    let qb = q.adjoint() * &b;
    let qc = q.adjoint() * &c;
    let kappa = params.kappa;
    frequencies
        .iter()
        .map(|&w| {
            // (iω − H) y = Q†b  ⇔  (H − iω) y = −Q†b
            let y = linalg::solve_shifted_hessenberg(&h, Complex64::new(0.0, w), &(-&qb))?;
            let g = qc.dotc(&y);
            Ok(2.0 * kappa * g.re)
        })
        .collect()
}

/// Uniform frequency grid covering one full period 2π/Δτ of a lag grid,
/// starting at `start` with spacing at most `max_step`.
pub fn periodic_frequency_grid(lag_step: f64, start: f64, max_step: f64, min_points: usize) -> Vec<f64> {
    let band = 2.0 * std::f64::consts::PI / lag_step;
    let m = ((band / max_step).ceil() as usize).max(min_points + 1);
    let dw = band / m as f64;
    (0..m).map(|j| start + j as f64 * dw).collect()
}

/// Spectrum integral (1/2π)∫S dω using cell widths of the sample grid.
pub fn spectral_integral(frequencies: &[f64], values: &[f64]) -> f64 {
    let widths = cell_widths(frequencies);
    values.iter().zip(&widths).map(|(v, w)| v * w).sum::<f64>() / (2.0 * std::f64::consts::PI)
}

/// Width attributed to each sample: half the distance between its
/// neighbours, and the adjacent spacing at the two ends (so a uniform grid
/// gives every sample the same width).
pub fn cell_widths(frequencies: &[f64]) -> Vec<f64> {
    let n = frequencies.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    frequencies[1] - frequencies[0]
                } else if i == n - 1 {
                    frequencies[n - 1] - frequencies[n - 2]
                } else {
                    0.5 * (frequencies[i + 1] - frequencies[i - 1])
                }
            })
            .collect(),
    }
}

/// Liouvillian eigenvalues (dense; intended for small dimensions).
pub fn liouvillian_spectrum(space: FockSpace, params: &KpoParams, beta: f64) -> Vec<Complex64> {
    let l = liouvillian_matrix(space, params, beta);
    let (_, t) = l.schur().unpack();
    t.diagonal().iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, fock_state};
    use crate::params::mhz_to_angular;

    fn random_matrix(d: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(d, d, |_, _| Complex64::new(next(), next()))
    }

    fn small() -> (FockSpace, KpoParams) {
        (FockSpace::new(8).unwrap(), KpoParams::new(2.0, 3.0, 0.7).unwrap())
    }

    #[test]
    fn vacuum_is_dark() {
        let (space, p) = small();
        let h = Operator::zeros(space);
        let r = lindblad_rhs(&DensityMatrix::vacuum(space), &h, p.kappa).unwrap();
        assert!(linalg::frobenius(&r) == 0.0);
    }

    #[test]
    fn rhs_is_traceless() {
        let (space, p) = small();
        let h = kpo_hamiltonian(space, &p, 0.9);
        for seed in 0..5 {
            let rho = linalg::hermitize(&random_matrix(8, seed));
            let r = lindblad_rhs_matrix(&rho, &h, p.kappa).unwrap();
            assert!(linalg::trace(&r).norm() < 1e-12);
        }
    }

    #[test]
    fn photon_number_rate_without_drive() {
        // Tr[n L(ρ)] = −κ Tr[n ρ] when [H, n] = 0
        let (space, p) = small();
        let h = kpo_hamiltonian(space, &p, 0.0);
        let num = number_op(space).into_matrix();
        for seed in 10..15 {
            let rho = linalg::hermitize(&random_matrix(8, seed));
            let r = lindblad_rhs_matrix(&rho, &h, p.kappa).unwrap();
            let lhs = linalg::trace_product(&num, &r);
            let rhs = linalg::trace_product(&num, &rho) * (-p.kappa);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn banded_generator_matches_dense() {
        let (space, p) = small();
        let beta = 1.3;
        let g = LindbladGenerator::new(space, &p);
        let h = kpo_hamiltonian(space, &p, beta);
        for seed in 20..25 {
            let rho = random_matrix(8, seed);
            let dense = lindblad_rhs_matrix(&rho, &h, p.kappa).unwrap();
            let mut out = vec![ZERO; 64];
            g.apply(beta, rho.as_slice(), &mut out);
            assert!(linalg::frobenius(&(to_matrix(8, &out) - dense)) < 1e-12);
        }
    }

    #[test]
    fn liouvillian_matches_rhs() {
        let (space, p) = small();
        let beta = 0.8;
        let l = liouvillian_matrix(space, &p, beta);
        let h = kpo_hamiltonian(space, &p, beta);
        for seed in 30..40 {
            let rho = random_matrix(8, seed);
            let v = CVector::from_column_slice(rho.as_slice());
            let lv = to_matrix(8, (&l * v).as_slice());
            let direct = lindblad_rhs_matrix(&rho, &h, p.kappa).unwrap();
            assert!(linalg::frobenius(&(lv - direct)) < 1e-10);
        }
    }

    #[test]
    fn undriven_liouvillian_has_single_dark_state() {
        let space = FockSpace::new(5).unwrap();
        let p = KpoParams::new(1.0, 2.0, 0.5).unwrap();
        let eig = liouvillian_spectrum(space, &p, 0.0);
        let zeros = eig.iter().filter(|z| z.norm() < 1e-10).count();
        assert_eq!(zeros, 1);
        assert!(eig.iter().all(|z| z.re <= 1e-10));
        let ss = steady_state(space, &p, 0.0).unwrap();
        assert!((ss.populations()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_residual_and_parity() {
        let space = FockSpace::new(14).unwrap();
        let p = KpoParams::device(25.3);
        let beta = mhz_to_angular(8.0);
        let ss = steady_state(space, &p, beta).unwrap();
        assert!(stationarity_residual(&ss, &p, beta) < 1e-8);
        assert!(ss.parity_asymmetry() < 1e-6);
    }

    #[test]
    fn steady_state_requires_loss() {
        let space = FockSpace::new(6).unwrap();
        let p = KpoParams::new(1.0, 2.0, 0.0).unwrap();
        assert!(steady_state(space, &p, 0.3).is_err());
    }

    #[test]
    fn kerr_revival() {
        let space = FockSpace::new(16).unwrap();
        let p = KpoParams::new(0.0, mhz_to_angular(17.3), 0.0).unwrap();
        let psi = coherent_state(space, Complex64::new(1.0, 0.0));
        let rho0 = psi.to_density();
        let t = 2.0 * std::f64::consts::PI / p.kerr;
        let traj = propagate(&rho0, &p, &DriveProfile::constant(0.0), t, &Sampling::Uniform { count: 2 }).unwrap();
        let f = rho0.matrix().iter().zip(traj.final_state().matrix().iter());
        // ⟨ψ|ρ(t)|ψ⟩ via Tr[ρ0 ρ(t)] for pure ρ0
        let overlap: Complex64 = f.map(|(a, b)| a.conj() * b).sum();
        assert!(overlap.re >= 1.0 - 1e-6, "revival overlap {}", overlap.re);
    }

    #[test]
    fn photon_number_decays_exponentially() {
        let space = FockSpace::new(12).unwrap();
        let p = KpoParams::device(3.0);
        let rho0 = coherent_state(space, Complex64::new(0.9, 0.4)).to_density();
        let n0 = rho0.mean_photon_number();
        let traj = propagate(&rho0, &p, &DriveProfile::constant(0.0), 0.3, &Sampling::Uniform { count: 7 }).unwrap();
        for (t, o) in traj.times.iter().zip(&traj.observables) {
            let exact = n0 * (-p.kappa * t).exp();
            assert!((o.mean_photon_number - exact).abs() <= 1e-6 * exact);
        }
    }

    #[test]
    fn transient_single_photon_correlation() {
        // g(τ) = e^{−κτ/2}/κ for |1⟩ without drive
        let space = FockSpace::new(4).unwrap();
        let p = KpoParams::device(0.0);
        let rho0 = fock_state(space, 1).unwrap().to_density();
        let rec = two_time_correlation(&rho0, &p, 0.0, CorrelationMode::Transient).unwrap();
        let horizon = rec.horizon.unwrap();
        let captured = 1.0 - (-p.kappa * horizon).exp();
        for (tau, g) in rec.lags.iter().zip(&rec.values).step_by(97) {
            let exact = (-0.5 * p.kappa * tau).exp() / p.kappa;
            assert!((g - Complex64::new(exact, 0.0)).norm() < 1e-4 * exact, "tau {tau}");
            // the finite t-horizon accounts for the remaining difference
            assert!((g.re - exact * captured).abs() < 1e-8 * exact, "tau {tau}");
            assert!(g.im.abs() < 1e-10 * exact);
        }
        assert!(rec.lags.len() > 100);
    }

    #[test]
    fn steady_correlation_vanishes_without_drive() {
        let space = FockSpace::new(6).unwrap();
        let p = KpoParams::device(5.0);
        let rec = two_time_correlation(&DensityMatrix::vacuum(space), &p, 0.0, CorrelationMode::Steady).unwrap();
        assert!(rec.values.iter().all(|g| g.norm() < 1e-12));
    }

    #[test]
    fn transient_mode_rejects_drive() {
        let space = FockSpace::new(6).unwrap();
        let p = KpoParams::device(5.0);
        let r = two_time_correlation(&DensityMatrix::vacuum(space), &p, 1.0, CorrelationMode::Transient);
        assert!(r.is_err());
    }

    #[test]
    fn cell_widths_uniform() {
        let w = cell_widths(&[0.0, 0.5, 1.0, 1.5]);
        assert!(w.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }
}
