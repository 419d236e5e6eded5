//! Transient emission spectra of a relaxing state and per-transition bin
//! powers.
//!
//! Spectra are functions of the detuning ω from the dressed resonator
//! frequency, so the n → n−1 line sits at ω = −(n−1)χ. The drive is off
//! during relaxation; Δ plays no role.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    cell_widths, correlation_spectrum, periodic_frequency_grid, spectral_integral,
    two_time_correlation_with, CorrelationMode, CorrelationOptions,
};
use crate::error::{Error, Result};
use crate::fock::DensityMatrix;
use crate::params::KpoParams;

pub const DEFAULT_BINS: usize = 4;
pub const MIN_SAMPLES_PER_BIN: usize = 20;
/// Below this χ/κ the Lorentzian decomposition is flagged.
pub const LORENTZIAN_MIN_RATIO: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdMethod {
    Numeric,
    Analytic,
    AnalyticPrinted,
    Lorentzian,
}

/// Linewidth of the k-th term in the closed-form double sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinewidthForm {
    /// (2k+1)κ/2, the decay rate of the (k, k+1) coherence.
    Coherence,
    /// (k+1)κ as the formula is commonly printed. Kept for comparison only;
    /// it disagrees with the master-equation result.
    Printed,
}

/// (1/2π)∫S dω compared with ⟨n(0)⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumRule {
    pub target: f64,
    pub integral: f64,
    pub tolerance: f64,
}

impl SumRule {
    pub fn relative_error(&self) -> f64 {
        if self.target == 0.0 {
            self.integral.abs()
        } else {
            (self.integral - self.target).abs() / self.target
        }
    }

    pub fn satisfied(&self) -> bool {
        self.relative_error() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientPsd {
    pub method: PsdMethod,
    pub params: KpoParams,
    /// Detuning from ω_c (rad/µs).
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization: SumRule,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub frequency: f64,
    pub value: f64,
}

impl TransientPsd {
    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn integral(&self) -> f64 {
        spectral_integral(&self.frequencies, &self.values)
    }

    /// Local maxima above `min_fraction` of the global maximum that are
    /// separated from every higher neighbouring maximum by a dip below half
    /// of their own height. Locations are refined by parabolic interpolation.
    /// Sorted by descending frequency (0, −χ, −2χ, …).
    pub fn peaks(&self, min_fraction: f64) -> Vec<Peak> {
        let v = &self.values;
        let f = &self.frequencies;
        let n = v.len();
        let max = self.max_value();
        if n < 3 || max <= 0.0 {
            return vec![];
        }
        let candidates: Vec<usize> = (1..n - 1)
            .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] >= min_fraction * max)
            .collect();
        let mut peaks = Vec::new();
        for (c, &i) in candidates.iter().enumerate() {
            let resolved_from = |j: usize| {
                let (lo, hi) = if j < i { (j, i) } else { (i, j) };
                let dip = v[lo..=hi].iter().cloned().fold(f64::INFINITY, f64::min);
                v[j] <= v[i] || dip < 0.5 * v[i]
            };
            let ok = (c == 0 || resolved_from(candidates[c - 1]))
                && (c + 1 == candidates.len() || resolved_from(candidates[c + 1]));
            if !ok {
                continue;
            }
            let (y0, y1, y2) = (v[i - 1], v[i], v[i + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            let shift = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
            let step = 0.5 * (f[i + 1] - f[i - 1]);
            peaks.push(Peak {
                frequency: f[i] + shift * step,
                value: y1 - 0.25 * (y0 - y2) * shift,
            });
        }
        peaks.sort_by(|a, b| b.frequency.total_cmp(&a.frequency));
        peaks
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency_rad_per_us,frequency_mhz,psd\n");
        for (w, s) in self.frequencies.iter().zip(&self.values) {
            let _ = writeln!(out, "{w},{},{s}", w / (2.0 * PI));
        }
        out
    }
}

fn sum_rule(frequencies: &[f64], values: &[f64], target: f64) -> SumRule {
    SumRule {
        target,
        integral: spectral_integral(frequencies, values),
        tolerance: 0.01,
    }
}

/// Options for [`transient_psd_numeric_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct NumericPsdOptions {
    pub correlation: CorrelationOptions,
    /// Explicit grid; `None` selects one full period of the lag grid.
    pub frequencies: Option<Vec<f64>>,
    /// Start of the default band as a fraction of 2π/Δτ (negative).
    pub band_start: f64,
    /// Default frequency spacing in units of κ.
    pub step_in_kappa: f64,
}

impl Default for NumericPsdOptions {
    fn default() -> Self {
        NumericPsdOptions {
            correlation: CorrelationOptions::default(),
            frequencies: None,
            band_start: -0.8,
            step_in_kappa: 0.05,
        }
    }
}

/// Default grid for closed-form evaluators: the band the numerical route
/// uses with its default lag step.
pub fn default_frequency_grid(params: &KpoParams) -> Vec<f64> {
    let opts = NumericPsdOptions::default();
    let h = opts.correlation.lag_step;
    periodic_frequency_grid(h, opts.band_start * 2.0 * PI / h, opts.step_in_kappa * params.kappa, 0)
}

/// Spectrum from the transient correlation g(τ) = ∫dt ⟨a†(t+τ)a(t)⟩:
/// S(ω) = 2κ Re ∫₀^∞ dτ e^{−iωτ} g(τ).
pub fn transient_psd_numeric(rho0: &DensityMatrix, params: &KpoParams) -> Result<TransientPsd> {
    transient_psd_numeric_with(rho0, params, &NumericPsdOptions::default())
}

pub fn transient_psd_numeric_with(
    rho0: &DensityMatrix,
    params: &KpoParams,
    opts: &NumericPsdOptions,
) -> Result<TransientPsd> {
    params.validate()?;
    if params.kappa <= 0.0 {
        return Err(Error::param("kappa", "transient spectra require kappa > 0"));
    }
    let frame = params.with_detuning(0.0);
    let record = two_time_correlation_with(rho0, &frame, 0.0, CorrelationMode::Transient, &opts.correlation)?;
    let h = opts.correlation.lag_step;
    let frequencies = match &opts.frequencies {
        Some(f) => f.clone(),
        None => periodic_frequency_grid(
            h,
            opts.band_start * 2.0 * PI / h,
            opts.step_in_kappa * params.kappa,
            record.lags.len(),
        ),
    };
    let values = correlation_spectrum(&record, params.kappa, &frequencies);
    let mut warnings = Vec::new();
    if let Some(w) = rho0.truncation_warning() {
        warnings.push(w);
    }
    let normalization = sum_rule(&frequencies, &values, rho0.mean_photon_number());
    Ok(TransientPsd {
        method: PsdMethod::Numeric,
        params: *params,
        frequencies,
        values,
        normalization,
        warnings,
    })
}

fn check_populations(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::param("populations", "empty"));
    }
    if p.iter().any(|&x| !(x.is_finite() && x >= -1e-12)) {
        return Err(Error::param("populations", "must be finite and non-negative"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::param("populations", format!("must sum to 1, got {total}")));
    }
    Ok(())
}

fn mean_number(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(n, x)| n as f64 * x).sum()
}

/// Closed-form double sum with u = iχ/κ:
/// S(ω) = 2 Re Σ_n p_n Σ_{j<n} Σ_{k≤m} C(m,k) u^k (1+u)^{−m} / (i(ω+kχ) + γ_k),
/// m = n − j − 1. Only the populations enter.
pub fn transient_psd_analytic(p: &[f64], params: &KpoParams, frequencies: &[f64]) -> Result<TransientPsd> {
    transient_psd_analytic_form(p, params, frequencies, LinewidthForm::Coherence)
}

pub fn transient_psd_analytic_form(
    p: &[f64],
    params: &KpoParams,
    frequencies: &[f64],
    form: LinewidthForm,
) -> Result<TransientPsd> {
    params.validate()?;
    if params.kappa <= 0.0 {
        return Err(Error::param("kappa", "transient spectra require kappa > 0"));
    }
    check_populations(p)?;
    let coeffs = analytic_coefficients(p, params);
    let kappa = params.kappa;
    let chi = params.kerr;
    let values = frequencies
        .iter()
        .map(|&w| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, c) in coeffs.iter().enumerate() {
                let gamma = match form {
                    LinewidthForm::Coherence => (2 * k + 1) as f64 * kappa / 2.0,
                    LinewidthForm::Printed => (k + 1) as f64 * kappa,
                };
                acc += c / Complex64::new(gamma, w + k as f64 * chi);
            }
            2.0 * acc.re
        })
        .collect::<Vec<_>>();
    let normalization = sum_rule(frequencies, &values, mean_number(p));
    Ok(TransientPsd {
        method: match form {
            LinewidthForm::Coherence => PsdMethod::Analytic,
            LinewidthForm::Printed => PsdMethod::AnalyticPrinted,
        },
        params: *params,
        frequencies: frequencies.to_vec(),
        values,
        normalization,
        warnings: vec![],
    })
}

/// A_k = Σ_n p_n Σ_{m=k}^{n−1} C(m,k) u^k (1+u)^{−m}.
fn analytic_coefficients(p: &[f64], params: &KpoParams) -> Vec<Complex64> {
    let d = p.len();
    let u = Complex64::new(0.0, params.kerr / params.kappa);
    let inv = (Complex64::new(1.0, 0.0) + u).inv();
    // term[m][k] = C(m,k) u^k (1+u)^{−m}, built by Pascal recursion
    let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    for m in 0..d.saturating_sub(1) {
        let row = if m == 0 {
            vec![Complex64::new(1.0, 0.0)]
        } else {
            let prev: &Vec<Complex64> = &rows[m - 1];
            (0..=m)
                .map(|k| {
                    let left = if k < m { prev[k] } else { Complex64::new(0.0, 0.0) };
                    let right = if k > 0 { prev[k - 1] * u } else { Complex64::new(0.0, 0.0) };
                    (left + right) * inv
                })
                .collect()
        };
        rows.push(row);
    }
    let mut coeffs = vec![Complex64::new(0.0, 0.0); d.saturating_sub(1)];
    for (n, &pn) in p.iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        for row in rows.iter().take(n) {
            for (k, t) in row.iter().enumerate() {
                coeffs[k] += t * pn;
            }
        }
    }
    coeffs
}

/// Sum of Lorentzians at ω = −jχ with full width (2j+1)κ and weight
/// Σ_{n>j} p_n, valid for χ ≫ κ.
pub fn transient_psd_lorentzian(p: &[f64], params: &KpoParams, frequencies: &[f64]) -> Result<TransientPsd> {
    params.validate()?;
    if params.kappa <= 0.0 {
        return Err(Error::param("kappa", "transient spectra require kappa > 0"));
    }
    check_populations(p)?;
    let mut warnings = Vec::new();
    let ratio = params.kerr / params.kappa;
    if ratio < LORENTZIAN_MIN_RATIO {
        let msg = format!("chi/kappa = {ratio:.2} is below {LORENTZIAN_MIN_RATIO}; Lorentzian peaks overlap");
        warn!("{msg}");
        warnings.push(msg);
    }
    let weights = tail_sums(p, p.len().saturating_sub(1), 1);
    let values = frequencies
        .iter()
        .map(|&w| {
            weights
                .iter()
                .enumerate()
                .map(|(j, &wt)| {
                    let width = (2 * j + 1) as f64 * params.kappa;
                    let x = w + j as f64 * params.kerr;
                    wt * width / (x * x + 0.25 * width * width)
                })
                .sum()
        })
        .collect::<Vec<f64>>();
    let normalization = sum_rule(frequencies, &values, mean_number(p));
    Ok(TransientPsd {
        method: PsdMethod::Lorentzian,
        params: *params,
        frequencies: frequencies.to_vec(),
        values,
        normalization,
        warnings,
    })
}

/// Σ_{n≥j} p_n for j = first .. first+count−1.
fn tail_sums(p: &[f64], count: usize, first: usize) -> Vec<f64> {
    (first..first + count)
        .map(|j| p.iter().skip(j).sum::<f64>())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPowers {
    /// Power in bin j = 1..n (index j−1).
    pub powers: Vec<f64>,
    /// Frequency window of each bin; empty for theory values.
    pub edges: Vec<[f64; 2]>,
}

impl BinPowers {
    pub fn n_bins(&self) -> usize {
        self.powers.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,power,lower_rad_per_us,upper_rad_per_us\n");
        for (j, s) in self.powers.iter().enumerate() {
            match self.edges.get(j) {
                Some([lo, hi]) => {
                    let _ = writeln!(out, "{},{s},{lo},{hi}", j + 1);
                }
                None => {
                    let _ = writeln!(out, "{},{s},,", j + 1);
                }
            }
        }
        out
    }
}

/// S_j = Σ_{n≥j} p_n for j = 1..n_bins.
pub fn bin_powers_theory(p: &[f64], n_bins: usize) -> BinPowers {
    BinPowers {
        powers: tail_sums(p, n_bins, 1),
        edges: vec![],
    }
}

pub fn bin_powers_of_state(rho: &DensityMatrix, n_bins: usize) -> BinPowers {
    bin_powers_theory(&rho.populations(), n_bins)
}

/// Window of bin j (1-based): [−(j−1)χ − χ/2, −(j−1)χ + χ/2).
pub fn bin_edges(kerr: f64, n_bins: usize) -> Vec<[f64; 2]> {
    (0..n_bins)
        .map(|j| {
            let centre = -(j as f64) * kerr;
            [centre - 0.5 * kerr, centre + 0.5 * kerr]
        })
        .collect()
}

/// Integrates a sampled spectrum, (1/2π)∫S dω, over χ-wide windows centred
/// on each transition.
pub fn bin_integrate(psd: &TransientPsd, n_bins: usize) -> Result<BinPowers> {
    if n_bins == 0 {
        return Err(Error::param("n_bins", "must be at least 1"));
    }
    let f = &psd.frequencies;
    if f.len() < 2 || f.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("frequencies", "grid must be strictly increasing"));
    }
    let edges = bin_edges(psd.params.kerr, n_bins);
    let (lo_all, hi_all) = (edges[n_bins - 1][0], edges[0][1]);
    let widths = cell_widths(f);
    let step = widths.iter().cloned().fold(0.0, f64::max);
    if f[0] > lo_all + step || *f.last().unwrap() < hi_all - step {
        return Err(Error::param(
            "frequencies",
            format!("grid [{}, {}] does not cover the bins [{lo_all}, {hi_all})", f[0], f.last().unwrap()),
        ));
    }
    let mut powers = Vec::with_capacity(n_bins);
    for &[lo, hi] in &edges {
        let mut count = 0;
        let mut acc = 0.0;
        for ((w, s), dw) in f.iter().zip(&psd.values).zip(&widths) {
            if *w >= lo && *w < hi {
                acc += s * dw;
                count += 1;
            }
        }
        if count < MIN_SAMPLES_PER_BIN {
            return Err(Error::param(
                "frequencies",
                format!("only {count} samples in bin [{lo}, {hi}); need {MIN_SAMPLES_PER_BIN}"),
            ));
        }
        powers.push(acc / (2.0 * PI));
    }
    Ok(BinPowers { powers, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::mhz_to_angular;

    fn params() -> KpoParams {
        KpoParams::device(0.0)
    }

    fn poisson(mean: f64, d: usize) -> Vec<f64> {
        let mut p = vec![0.0; d];
        let mut term = (-mean).exp();
        for (n, x) in p.iter_mut().enumerate() {
            if n > 0 {
                term *= mean / n as f64;
            }
            *x = term;
        }
        let total: f64 = p.iter().sum();
        p.iter().map(|x| x / total).collect()
    }

    #[test]
    fn theory_bins_for_coherent_state() {
        let b = bin_powers_theory(&poisson(1.0, 40), 4);
        let e = (-1.0f64).exp();
        assert!((b.powers[0] - (1.0 - e)).abs() < 1e-12);
        assert!((b.powers[1] - (1.0 - 2.0 * e)).abs() < 1e-12);
        let vac = bin_powers_theory(&[1.0, 0.0, 0.0], 4);
        assert!(vac.powers.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_photon_gives_single_line() {
        let p = params();
        let grid = default_frequency_grid(&p);
        let psd = transient_psd_analytic(&[0.0, 1.0, 0.0, 0.0], &p, &grid).unwrap();
        let peaks = psd.peaks(1e-3);
        assert_eq!(peaks.len(), 1);
        assert!(peaks[0].frequency.abs() < 0.05 * p.kappa);
        // Lorentzian of HWHM κ/2 and unit area: peak 4/κ
        let at_zero = transient_psd_analytic(&[0.0, 1.0], &p, &[0.0]).unwrap().values[0];
        assert!((at_zero - 4.0 / p.kappa).abs() < 1e-12 * 4.0 / p.kappa);
    }

    #[test]
    fn vacuum_is_silent() {
        let p = params();
        let grid = default_frequency_grid(&p);
        let psd = transient_psd_analytic(&[1.0, 0.0], &p, &grid).unwrap();
        assert!(psd.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lorentzian_widths_and_weights() {
        let p = params();
        let grid = default_frequency_grid(&p);
        let pops = poisson(1.0, 30);
        let psd = transient_psd_lorentzian(&pops, &p, &grid).unwrap();
        // j = 0 peak: value at the half-width point is half the peak (other
        // peaks contribute a small background)
        let w0 = 1.0 - pops[0];
        let peak = w0 * 4.0 / p.kappa;
        let at = |w: f64| transient_psd_lorentzian(&pops, &p, &[w]).unwrap().values[0];
        let bg = at(0.0) - peak;
        assert!(((at(0.5 * p.kappa) - bg) / peak - 0.5).abs() < 1e-3);
        assert!(psd.normalization.relative_error() < 0.01);
    }

    #[test]
    fn lorentzian_flags_small_ratio() {
        let p = KpoParams::new(0.0, 2.0, 1.0).unwrap();
        let psd = transient_psd_lorentzian(&[0.5, 0.5], &p, &[0.0]).unwrap();
        assert_eq!(psd.warnings.len(), 1);
    }

    #[test]
    fn coherence_form_matches_lorentzians_at_large_ratio() {
        let p = params();
        let grid = default_frequency_grid(&p);
        let pops = poisson(1.0, 30);
        let exact = transient_psd_analytic(&pops, &p, &grid).unwrap();
        let lor = transient_psd_lorentzian(&pops, &p, &grid).unwrap();
        let max = exact.max_value();
        let dev = exact
            .values
            .iter()
            .zip(&lor.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.05 * max, "deviation {}", dev / max);
    }

    #[test]
    fn bins_of_lorentzian_spectrum() {
        let p = params();
        let grid = default_frequency_grid(&p);
        let pops = poisson(1.0, 30);
        let psd = transient_psd_lorentzian(&pops, &p, &grid).unwrap();
        let bins = bin_integrate(&psd, 4).unwrap();
        let theory = bin_powers_theory(&pops, 4);
        for (a, b) in bins.powers.iter().zip(&theory.powers) {
            assert!((a - b).abs() < 0.03, "{a} vs {b}");
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let p = params();
        let grid: Vec<f64> = (0..50).map(|k| -5.0 * p.kerr + k as f64 * 0.12 * p.kerr).collect();
        let psd = transient_psd_lorentzian(&poisson(1.0, 10), &p, &grid).unwrap();
        assert!(bin_integrate(&psd, 4).is_err());
    }

    #[test]
    fn invalid_populations_rejected() {
        let p = params();
        assert!(transient_psd_analytic(&[0.5, 0.2], &p, &[0.0]).is_err());
        let bad = KpoParams::new(0.0, mhz_to_angular(17.3), 0.0).unwrap();
        assert!(transient_psd_analytic(&[1.0], &bad, &[0.0]).is_err());
    }
}
