//! Phase-space and spectral diagnostics, adiabatic cat preparation and
//! drive-parameter fitting.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate, Sampling};
use crate::error::{Error, Result};
use crate::fock::{cat_state, displacement_elements, DensityMatrix, FockSpace, StateVector};
use crate::linalg::{self, CVector, ZERO};
use crate::params::{DriveProfile, KpoParams};

// ---------------------------------------------------------------------------
// Wigner function and fidelity

/// Square lattice of phase-space points α = x + iy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PhaseGrid {
    /// `points` × `points` lattice spanning [−extent, extent] on both axes.
    pub fn square(extent: f64, points: usize) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::param("extent", "must be positive"));
        }
        if points < 2 {
            return Err(Error::param("points", "need at least 2 points per axis"));
        }
        let axis: Vec<f64> = (0..points)
            .map(|k| -extent + 2.0 * extent * k as f64 / (points - 1) as f64)
            .collect();
        Ok(PhaseGrid {
            x: axis.clone(),
            y: axis,
        })
    }

    pub fn cell_area(&self) -> f64 {
        spacing(&self.x) * spacing(&self.y)
    }

    /// Smallest distance from the origin to the grid edge.
    pub fn extent(&self) -> f64 {
        let ends = [self.x[0], *self.x.last().unwrap(), self.y[0], *self.y.last().unwrap()];
        ends.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
    }
}

fn spacing(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        1.0
    } else {
        (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerMap {
    pub grid: PhaseGrid,
    /// `values[iy][ix]`
    pub values: Vec<Vec<f64>>,
    /// Whether the grid reaches √⟨n⟩ + 2 in every direction.
    pub covers_state: bool,
}

impl WignerMap {
    /// ∫W d²α by the rectangle rule; 1 for a normalized state on an
    /// adequate grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.grid.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of |W| over the negative cells times the cell area.
    pub fn negative_volume(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .filter(|&&w| w < 0.0)
            .map(|w| -w)
            .sum::<f64>()
            * self.grid.cell_area()
    }

    /// Rows of `re,im,w`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,w\n");
        for (iy, row) in self.values.iter().enumerate() {
            for (ix, w) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", self.grid.x[ix], self.grid.y[iy], w);
            }
        }
        out
    }
}

/// Wigner function in the displaced-parity convention,
/// W(α) = (2/π) Tr[D(−α) ρ D(α) P], so the vacuum peaks at 2/π.
///
/// Uses D(α) P D(α)† = D(2α) P with exact displacement matrix elements, so no
/// truncation of D enters.
pub fn wigner(rho: &DensityMatrix, grid: &PhaseGrid) -> WignerMap {
    let d = rho.dim();
    let m = rho.matrix();
    let values = grid
        .y
        .iter()
        .map(|&y| {
            grid.x
                .iter()
                .map(|&x| {
                    let dd = displacement_elements(Complex64::new(2.0 * x, 2.0 * y), d, d);
                    let mut acc = ZERO;
                    for n in 0..d {
                        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                        for k in 0..d {
                            acc += m[(n, k)] * dd[(k, n)] * sign;
                        }
                    }
                    2.0 / PI * acc.re
                })
                .collect()
        })
        .collect();
    let needed = rho.mean_photon_number().max(0.0).sqrt() + 2.0;
    let covers_state = grid.extent() >= needed;
    if !covers_state {
        warn!(
            "Wigner grid extent {:.2} is below sqrt(<n>) + 2 = {:.2}; the map is cropped",
            grid.extent(),
            needed
        );
    }
    WignerMap {
        grid: grid.clone(),
        values,
        covers_state,
    }
}

/// Uhlmann fidelity (Tr√(√ρ σ √ρ))², clamped to [0, 1].
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    rho.space().check(sigma.space())?;
    let s = linalg::psd_sqrt(rho.matrix());
    let inner = &s * sigma.matrix() * &s;
    let (values, _) = linalg::hermitian_eigen(&inner);
    let root: f64 = values.iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok((root * root).clamp(0.0, 1.0))
}

/// ⟨ψ|ρ|ψ⟩.
pub fn fidelity_pure(rho: &DensityMatrix, psi: &StateVector) -> Result<f64> {
    rho.space().check(psi.space())?;
    let v = psi.amplitudes();
    Ok(v.dotc(&(rho.matrix() * v)).re.clamp(0.0, 1.0))
}

/// Largest ⟨ψ|R(θ)ρR(θ)†|ψ⟩ over phase-space rotations R(θ) = e^{−iθn}.
/// Returns (θ, fidelity).
pub fn best_rotation_fidelity(rho: &DensityMatrix, psi: &StateVector) -> Result<(f64, f64)> {
    rho.space().check(psi.space())?;
    let d = rho.dim();
    let v = psi.amplitudes();
    let m = rho.matrix();
    // ⟨ψ|R ρ R†|ψ⟩ = Σ_q c_q e^{−iqθ}, q = j − k
    let mut coeffs = vec![ZERO; 2 * d - 1];
    for j in 0..d {
        for k in 0..d {
            coeffs[j + d - 1 - k] += v[j].conj() * m[(j, k)] * v[k];
        }
    }
    let eval = |theta: f64| -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (c * Complex64::from_polar(1.0, -(i as f64 - (d - 1) as f64) * theta)).re)
            .sum()
    };
    let n = 720;
    let step = 2.0 * PI / n as f64;
    let best = (0..n)
        .map(|k| k as f64 * step)
        .max_by(|a, b| eval(*a).total_cmp(&eval(*b)))
        .unwrap();
    let theta = golden_max(eval, best - step, best + step, 1e-12);
    let theta = theta.rem_euclid(2.0 * PI);
    Ok((theta, eval(theta).clamp(0.0, 1.0)))
}

fn golden_max(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 >= f2 {
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
    0.5 * (a + b)
}

// ---------------------------------------------------------------------------
// Effective potential

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialShape {
    /// The origin is an extremum of V (for Δ < 0 the unique maximum).
    SingleMax,
    /// The origin is a saddle between two symmetric maxima at θ ∈ {0, π}.
    DoubleWell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryKind {
    Maximum,
    Minimum,
    Saddle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub alpha: Complex64,
    pub value: f64,
    pub kind: StationaryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialLandscape {
    pub beta: f64,
    pub grid: PhaseGrid,
    /// `values[iy][ix]`
    pub values: Vec<Vec<f64>>,
    pub shape: PotentialShape,
    pub stationary: Vec<StationaryPoint>,
}

impl PotentialLandscape {
    pub fn maxima(&self) -> impl Iterator<Item = &StationaryPoint> {
        self.stationary.iter().filter(|p| p.kind == StationaryKind::Maximum)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,v\n");
        for (iy, row) in self.values.iter().enumerate() {
            for (ix, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", self.grid.x[ix], self.grid.y[iy], v);
            }
        }
        out
    }
}

/// V(α) = ⟨α|H|α⟩ = Δ|α|² − (χ/2)|α|⁴ + 2β|α|² cos 2θ.
pub fn potential_value(params: &KpoParams, beta: f64, alpha: Complex64) -> f64 {
    let r2 = alpha.norm_sqr();
    let cos2 = if r2 == 0.0 { 0.0 } else { (alpha * alpha).re / r2 };
    params.detuning * r2 - 0.5 * params.kerr * r2 * r2 + 2.0 * beta * r2 * cos2
}

/// Shape from the curvature of V at the origin, measured by central
/// differences along both quadratures.
pub fn potential_shape(params: &KpoParams, beta: f64) -> PotentialShape {
    let h = 1e-5;
    let v0 = potential_value(params, beta, ZERO);
    let curv = |dir: Complex64| {
        (potential_value(params, beta, dir * h) - 2.0 * v0 + potential_value(params, beta, -dir * h)) / (h * h)
    };
    let cx = curv(Complex64::new(1.0, 0.0));
    let cy = curv(Complex64::new(0.0, 1.0));
    if cx * cy < 0.0 {
        PotentialShape::DoubleWell
    } else {
        PotentialShape::SingleMax
    }
}

pub fn effective_potential(params: &KpoParams, beta: f64, grid: &PhaseGrid) -> Result<PotentialLandscape> {
    params.validate()?;
    if !beta.is_finite() {
        return Err(Error::param("beta", "must be finite"));
    }
    let values = grid
        .y
        .iter()
        .map(|&y| grid.x.iter().map(|&x| potential_value(params, beta, Complex64::new(x, y))).collect())
        .collect();

    let (delta, chi) = (params.detuning, params.kerr);
    let mut stationary = Vec::new();
    // Hessian eigenvalues at the origin: 2(Δ ± 2β)
    let (hx, hy) = (delta + 2.0 * beta, delta - 2.0 * beta);
    let origin_kind = if hx < 0.0 && hy < 0.0 {
        StationaryKind::Maximum
    } else if hx > 0.0 && hy > 0.0 {
        StationaryKind::Minimum
    } else {
        StationaryKind::Saddle
    };
    stationary.push(StationaryPoint {
        alpha: ZERO,
        value: 0.0,
        kind: origin_kind,
    });
    // radial condition |α|² = (Δ + 2β cos 2θ)/χ on the two axes
    for (axis, dir, along) in [(hx, Complex64::new(1.0, 0.0), beta), (hy, Complex64::new(0.0, 1.0), -beta)] {
        if chi > 0.0 && axis > 0.0 {
            let r = (axis / chi).sqrt();
            // radial maximum; angular curvature ∝ −along
            let kind = if along > 0.0 {
                StationaryKind::Maximum
            } else if along < 0.0 {
                StationaryKind::Saddle
            } else {
                StationaryKind::Maximum
            };
            for s in [1.0, -1.0] {
                let a = dir * (s * r);
                stationary.push(StationaryPoint {
                    alpha: a,
                    value: potential_value(params, beta, a),
                    kind,
                });
            }
        }
    }
    Ok(PotentialLandscape {
        beta,
        grid: grid.clone(),
        values,
        shape: potential_shape(params, beta),
        stationary,
    })
}

// ---------------------------------------------------------------------------
// Eigenstructure versus drive

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> i32 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenTrack {
    pub parity: Parity,
    /// Dominant Fock level at the first drive value.
    pub fock_level: usize,
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumVsDrive {
    pub betas: Vec<f64>,
    pub tracks: Vec<EigenTrack>,
    pub warnings: Vec<String>,
}

impl SpectrumVsDrive {
    pub fn tracks_of(&self, parity: Parity) -> impl Iterator<Item = &EigenTrack> {
        self.tracks.iter().filter(move |t| t.parity == parity)
    }

    /// Rows of `beta,level,parity,energy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,level,parity,energy\n");
        for (k, beta) in self.betas.iter().enumerate() {
            for t in &self.tracks {
                let _ = writeln!(out, "{},{},{},{}", beta, t.fock_level, t.parity.sign(), t.energies[k]);
            }
        }
        out
    }
}

/// Fock levels belonging to one parity sector.
fn sector_levels(dim: usize, parity: Parity) -> Vec<usize> {
    let start = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    (start..dim).step_by(2).collect()
}

/// Eigenvalues (ascending) and eigenvectors of the Hamiltonian restricted to
/// one parity sector. The matrix is real symmetric and tridiagonal in the
/// sector basis.
pub fn sector_eigen(dim: usize, params: &KpoParams, beta: f64, parity: Parity) -> (Vec<f64>, DMatrix<f64>) {
    let levels = sector_levels(dim, parity);
    let n = levels.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for (i, &l) in levels.iter().enumerate() {
        h[(i, i)] = params.bare_energy(l);
        if i + 1 < n {
            let c = beta * (((l + 1) * (l + 2)) as f64).sqrt();
            h[(i, i + 1)] = c;
            h[(i + 1, i)] = c;
        }
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Embeds a sector eigenvector into the full Fock space.
pub fn sector_state(space: FockSpace, parity: Parity, v: &[f64]) -> Result<StateVector> {
    let levels = sector_levels(space.dim(), parity);
    let mut amps = CVector::zeros(space.dim());
    for (i, &l) in levels.iter().enumerate() {
        amps[l] = Complex64::new(v[i], 0.0);
    }
    StateVector::new(space, amps)
}

/// Highest-energy eigenstate of the given parity. For Δ < 0 this is the
/// state adiabatically connected to the vacuum (even) or to |1⟩ (odd).
pub fn top_eigenstate(space: FockSpace, params: &KpoParams, beta: f64, parity: Parity) -> Result<(f64, StateVector)> {
    let (values, vectors) = sector_eigen(space.dim(), params, beta, parity);
    let k = values.len() - 1;
    let v: Vec<f64> = vectors.column(k).iter().cloned().collect();
    Ok((values[k], sector_state(space, parity, &v)?))
}

/// |E_even − E_odd| of the two highest levels of opposite parity.
pub fn top_pair_splitting(dim: usize, params: &KpoParams, beta: f64) -> f64 {
    let (e, _) = sector_eigen(dim, params, beta, Parity::Even);
    let (o, _) = sector_eigen(dim, params, beta, Parity::Odd);
    (e[e.len() - 1] - o[o.len() - 1]).abs()
}

const MATCH_DEPTH: usize = 14;
const MATCH_MIN_OVERLAP: f64 = 0.5;

/// Assignment perm[i] = column at the right end matching column i at the
/// left end, by largest overlap with ties broken by energy proximity.
fn overlap_assignment(e0: &[f64], v0: &DMatrix<f64>, e1: &[f64], v1: &DMatrix<f64>) -> (Vec<usize>, f64) {
    let n = e0.len();
    let overlaps = (v0.transpose() * v1).map(f64::abs);
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    pairs.sort_by(|&(a, b), &(c, d)| {
        overlaps[(c, d)]
            .total_cmp(&overlaps[(a, b)])
            .then(((e0[a] - e1[b]).abs()).total_cmp(&(e0[c] - e1[d]).abs()))
    });
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    let mut worst = f64::INFINITY;
    for (i, j) in pairs {
        if perm[i] == usize::MAX && !taken[j] {
            perm[i] = j;
            taken[j] = true;
            worst = worst.min(overlaps[(i, j)]);
        }
    }
    (perm, worst)
}

fn match_interval(
    dim: usize,
    params: &KpoParams,
    parity: Parity,
    (b0, e0, v0): (f64, &[f64], &DMatrix<f64>),
    (b1, e1, v1): (f64, &[f64], &DMatrix<f64>),
    depth: usize,
) -> Vec<usize> {
    let (perm, worst) = overlap_assignment(e0, v0, e1, v1);
    let identity = perm.iter().enumerate().all(|(i, &j)| i == j);
    if depth == 0 || (identity && worst >= MATCH_MIN_OVERLAP) {
        return perm;
    }
    let mid = 0.5 * (b0 + b1);
    let (em, vm) = sector_eigen(dim, params, mid, parity);
    let left = match_interval(dim, params, parity, (b0, e0, v0), (mid, &em, &vm), depth - 1);
    let right = match_interval(dim, params, parity, (mid, &em, &vm), (b1, e1, v1), depth - 1);
    left.iter().map(|&k| right[k]).collect()
}

/// Parity-resolved eigenvalues of the closed-system Hamiltonian along a
/// drive grid. Tracks are continued by eigenvector overlap; intervals where
/// the overlap assignment is ambiguous are bisected before matching.
pub fn eigenspectrum_vs_beta(space: FockSpace, params: &KpoParams, betas: &[f64]) -> Result<SpectrumVsDrive> {
    params.validate()?;
    if betas.is_empty() {
        return Err(Error::param("betas", "empty drive grid"));
    }
    if betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::param("betas", "drive values must be finite"));
    }
    let dim = space.dim();
    let mut tracks = Vec::new();
    let mut warnings = Vec::new();
    let mut edge_weight: f64 = 0.0;
    for parity in [Parity::Even, Parity::Odd] {
        let levels = sector_levels(dim, parity);
        let n = levels.len();
        let (mut e_prev, mut v_prev) = sector_eigen(dim, params, betas[0], parity);
        // position[t] = current column index of track t
        let mut position: Vec<usize> = (0..n).collect();
        let fock_level: Vec<usize> = (0..n)
            .map(|c| {
                let col = v_prev.column(c);
                let k = (0..n).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap();
                levels[k]
            })
            .collect();
        let mut energies: Vec<Vec<f64>> = (0..n).map(|t| vec![e_prev[t]]).collect();
        let mut check_edges = |values: &DMatrix<f64>, position: &[usize]| {
            for (t, &c) in position.iter().enumerate() {
                if fock_level[t] < dim / 2 {
                    let col = values.column(c);
                    let w = col[n - 1].powi(2) + if n >= 2 { col[n - 2].powi(2) } else { 0.0 };
                    edge_weight = edge_weight.max(w);
                }
            }
        };
        check_edges(&v_prev, &position);
        for w in betas.windows(2) {
            let (e_next, v_next) = sector_eigen(dim, params, w[1], parity);
            let perm = match_interval(
                dim,
                params,
                parity,
                (w[0], &e_prev, &v_prev),
                (w[1], &e_next, &v_next),
                MATCH_DEPTH,
            );
            for (t, p) in position.iter_mut().enumerate() {
                *p = perm[*p];
                energies[t].push(e_next[*p]);
            }
            check_edges(&v_next, &position);
            e_prev = e_next;
            v_prev = v_next;
        }
        for (t, e) in energies.into_iter().enumerate() {
            tracks.push(EigenTrack {
                parity,
                fock_level: fock_level[t],
                energies: e,
            });
        }
    }
    tracks.sort_by_key(|t| t.fock_level);
    if edge_weight > 1e-6 {
        let msg = format!(
            "eigenvectors of low tracks carry weight {edge_weight:.2e} on the two highest Fock levels; increase dim"
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(SpectrumVsDrive {
        betas: betas.to_vec(),
        tracks,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Classical versus quantum threshold

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub betas: Vec<f64>,
    pub quantum: Vec<f64>,
    pub classical: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ThresholdCurve {
    /// Rows of `beta,quantum,classical`, β in rad/µs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,quantum,classical\n");
        for k in 0..self.betas.len() {
            let _ = writeln!(out, "{},{},{}", self.betas[k], self.quantum[k], self.classical[k]);
        }
        out
    }
}

/// `points` log-spaced drive values over [0.1, 2] × the classical threshold.
pub fn default_beta_grid(params: &KpoParams, points: usize) -> Vec<f64> {
    let thr = params.classical_threshold();
    if points == 1 {
        return vec![thr];
    }
    (0..points)
        .map(|k| thr * 0.1 * 20f64.powf(k as f64 / (points - 1) as f64))
        .collect()
}

/// Steady-state ⟨n⟩ next to the stable classical fixed point for each β.
pub fn threshold_curve(space: FockSpace, params: &KpoParams, betas: &[f64]) -> Result<ThresholdCurve> {
    let mut quantum = Vec::with_capacity(betas.len());
    let mut warnings = Vec::new();
    for &beta in betas {
        let ss = crate::dynamics::steady_state(space, params, beta)?;
        if let Some(w) = ss.truncation_warning() {
            warnings.push(format!("beta = {beta}: {w}"));
        }
        quantum.push(ss.mean_photon_number());
    }
    Ok(ThresholdCurve {
        betas: betas.to_vec(),
        classical: betas.iter().map(|&b| params.classical_photon_number(b)).collect(),
        quantum,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Adiabatic cat preparation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatPrepProtocol {
    pub beta_max: f64,
    /// Ramp duration (µs).
    pub t_max: f64,
    /// Free evolution after the ramp (µs).
    pub t_delay: f64,
}

#[derive(Debug, Clone)]
pub struct CatPrepResult {
    pub protocol: CatPrepProtocol,
    pub final_state: DensityMatrix,
    pub target: StateVector,
    /// Lobe amplitude of the target, √((Δ + 2β_max)/χ).
    pub alpha: f64,
    pub fidelity: f64,
    /// Phase-space rotation maximizing the fidelity and the fidelity there.
    pub rotation: f64,
    pub rotated_fidelity: f64,
    pub warnings: Vec<String>,
}

impl CatPrepResult {
    /// 4|α|².
    pub fn cat_size(&self) -> f64 {
        4.0 * self.alpha * self.alpha
    }
}

/// Lobe amplitude at the effective-potential maximum, √((Δ + 2β)/χ).
pub fn potential_lobe_amplitude(params: &KpoParams, beta: f64) -> Result<f64> {
    let r2 = (params.detuning + 2.0 * beta) / params.kerr;
    if !(r2 > 0.0) {
        return Err(Error::param("beta_max", "drive too weak for a double-well (Δ + 2β ≤ 0)"));
    }
    Ok(r2.sqrt())
}

/// β giving lobe amplitude α, (χα² − Δ)/2.
pub fn beta_for_lobe_amplitude(params: &KpoParams, alpha: f64) -> f64 {
    0.5 * (params.kerr * alpha * alpha - params.detuning)
}

/// Normalized U₀(t)(|α⟩ + |−α⟩) with U₀ the undriven evolution.
pub fn cat_target(space: FockSpace, params: &KpoParams, alpha: f64, t_delay: f64) -> Result<StateVector> {
    let cat = cat_state(space, Complex64::new(alpha, 0.0), true)?;
    let amps = CVector::from_iterator(
        space.dim(),
        cat.amplitudes()
            .iter()
            .enumerate()
            .map(|(n, a)| a * Complex64::from_polar(1.0, -params.bare_energy(n) * t_delay)),
    );
    StateVector::new(space, amps)
}

/// Propagates the vacuum under β(t) = β_max sin²(πt/2t_max), then lets it
/// evolve freely for `t_delay`, and compares with the cat target whose
/// amplitude follows from the potential maximum at β_max.
pub fn adiabatic_cat_prep(space: FockSpace, params: &KpoParams, protocol: &CatPrepProtocol) -> Result<CatPrepResult> {
    let mut warnings = Vec::new();
    if params.detuning >= 0.0 {
        let msg = "non-negative detuning: the vacuum need not follow the cat branch".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    if !(protocol.t_delay >= 0.0 && protocol.t_delay.is_finite()) {
        return Err(Error::param("t_delay", "must be finite and non-negative"));
    }
    let final_state = if protocol.beta_max == 0.0 {
        let idle = propagate(
            &DensityMatrix::vacuum(space),
            params,
            &DriveProfile::constant(0.0),
            protocol.t_max + protocol.t_delay,
            &Sampling::Uniform { count: 2 },
        )?;
        idle.final_state().clone()
    } else {
        let ramp = DriveProfile::SinSquaredRamp {
            beta_max: protocol.beta_max,
            t_max: protocol.t_max,
        };
        let up = propagate(
            &DensityMatrix::vacuum(space),
            params,
            &ramp,
            protocol.t_max,
            &Sampling::Uniform { count: 2 },
        )?;
        warnings.extend(up.warnings.iter().cloned());
        if protocol.t_delay > 0.0 {
            let free = propagate(
                up.final_state(),
                params,
                &DriveProfile::constant(0.0),
                protocol.t_delay,
                &Sampling::Uniform { count: 2 },
            )?;
            warnings.extend(free.warnings.iter().cloned());
            free.final_state().clone()
        } else {
            up.final_state().clone()
        }
    };
    let alpha = if protocol.beta_max == 0.0 {
        0.0
    } else {
        potential_lobe_amplitude(params, protocol.beta_max)?
    };
    let target = if alpha == 0.0 {
        crate::fock::fock_state(space, 0)?
    } else {
        cat_target(space, params, alpha, protocol.t_delay)?
    };
    let fid = fidelity_pure(&final_state, &target)?;
    let (rotation, rotated_fidelity) = best_rotation_fidelity(&final_state, &target)?;
    if rotated_fidelity < 0.8 {
        let msg = format!("cat fidelity {rotated_fidelity:.3} below 0.8; ramp too fast or too slow for the loss rate");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(CatPrepResult {
        protocol: protocol.clone(),
        final_state,
        target,
        alpha,
        fidelity: fid,
        rotation,
        rotated_fidelity,
        warnings,
    })
}

/// Chooses β_max so that the prepared state best matches the cat of lobe
/// amplitude `alpha` (rotation included), mirroring a fit of the drive
/// conversion. The target amplitude stays fixed at `alpha`.
pub fn tune_cat_drive(
    space: FockSpace,
    params: &KpoParams,
    alpha: f64,
    t_max: f64,
    t_delay: f64,
) -> Result<CatPrepResult> {
    let target = cat_target(space, params, alpha, t_delay)?;
    let nominal = beta_for_lobe_amplitude(params, alpha);
    if !(nominal > 0.0) {
        return Err(Error::param("alpha", "no positive drive produces this lobe amplitude"));
    }
    let run = |beta: f64| -> Result<(DensityMatrix, f64)> {
        let protocol = CatPrepProtocol {
            beta_max: beta,
            t_max,
            t_delay,
        };
        let r = adiabatic_cat_prep(space, params, &protocol)?;
        let (_, f) = best_rotation_fidelity(&r.final_state, &target)?;
        Ok((r.final_state, f))
    };
    // the target amplitude needs Δ + 2β > 0 at the end of the ramp
    let floor = 0.51 * (-params.detuning).max(0.0);
    let (lo, hi) = ((0.3 * nominal).max(floor), 1.5 * nominal);
    let scan: Vec<f64> = (0..17).map(|k| lo + (hi - lo) * k as f64 / 16.0).collect();
    let mut scores = Vec::with_capacity(scan.len());
    for &b in &scan {
        scores.push(run(b)?.1);
    }
    let k = (0..scan.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    let lo = scan[k.saturating_sub(1)];
    let hi = scan[(k + 1).min(scan.len() - 1)];
    let mut err = None;
    let beta = golden_max(
        |b| match run(b) {
            Ok((_, f)) => f,
            Err(e) => {
                err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        1e-6 * nominal,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let protocol = CatPrepProtocol {
        beta_max: beta,
        t_max,
        t_delay,
    };
    let mut result = adiabatic_cat_prep(space, params, &protocol)?;
    result.alpha = alpha;
    result.target = target;
    result.fidelity = fidelity_pure(&result.final_state, &result.target)?;
    let (rotation, rotated) = best_rotation_fidelity(&result.final_state, &result.target)?;
    result.rotation = rotation;
    result.rotated_fidelity = rotated;
    result.warnings.retain(|w| !w.starts_with("cat fidelity"));
    Ok(result)
}

// ---------------------------------------------------------------------------
// Drive-parameter fitting

/// Observed ⟨n⟩(t) from the vacuum under a constant drive set by `voltage`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCurve {
    pub voltage: f64,
    pub times: Vec<f64>,
    pub photon_numbers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub detuning: f64,
    pub kappa: f64,
    /// β per unit voltage.
    pub beta_per_volt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub dim: usize,
    pub fix_kappa: bool,
    /// Search box: guess ± `box_fraction` × |guess| in each parameter.
    pub box_fraction: f64,
    pub max_evaluations: usize,
    /// Simplex size (relative) at which the search stops.
    pub x_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            dim: 16,
            fix_kappa: false,
            box_fraction: 0.5,
            max_evaluations: 2000,
            x_tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveFit {
    pub params: DriveParams,
    /// Mean squared residual per sample.
    pub loss: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub flags: Vec<String>,
}

/// Simulated ⟨n⟩(t) curves for the given parameters.
pub fn simulate_drive_curves(
    space: FockSpace,
    kerr: f64,
    p: &DriveParams,
    voltages: &[f64],
    times: &[f64],
) -> Result<Vec<DriveCurve>> {
    let params = KpoParams::new(p.detuning, kerr, p.kappa)?;
    let t_final = times.last().copied().ok_or_else(|| Error::param("times", "empty time grid"))?;
    voltages
        .iter()
        .map(|&v| {
            let traj = propagate(
                &DensityMatrix::vacuum(space),
                &params,
                &DriveProfile::constant(p.beta_per_volt * v),
                t_final,
                &Sampling::Times { times: times.to_vec() },
            )?;
            Ok(DriveCurve {
                voltage: v,
                times: times.to_vec(),
                photon_numbers: traj.mean_photon_numbers(),
            })
        })
        .collect()
}

/// Fits (Δ, κ, β/V) to several ⟨n⟩(t) curves at once with a Nelder–Mead
/// search started from `guess`. χ is held fixed.
pub fn fit_drive_params(curves: &[DriveCurve], kerr: f64, guess: &DriveParams, options: &FitOptions) -> Result<DriveFit> {
    let mut voltages: Vec<f64> = curves.iter().map(|c| c.voltage).collect();
    voltages.sort_by(f64::total_cmp);
    voltages.dedup();
    if voltages.len() < 2 && !options.fix_kappa {
        return Err(Error::param("curves", "need at least 2 distinct drive voltages"));
    }
    let times = &curves
        .first()
        .ok_or_else(|| Error::param("curves", "no curves"))?
        .times;
    if curves.iter().any(|c| c.times != *times || c.photon_numbers.len() != times.len()) {
        return Err(Error::param("curves", "curves must share one time grid"));
    }
    let space = FockSpace::new(options.dim)?;
    let scale = [
        guess.detuning.abs().max(1e-9),
        guess.kappa.abs().max(1e-9),
        guess.beta_per_volt.abs().max(1e-9),
    ];
    let base = [guess.detuning, guess.kappa, guess.beta_per_volt];
    let free: Vec<usize> = if options.fix_kappa { vec![0, 2] } else { vec![0, 1, 2] };
    let to_params = |x: &[f64]| -> DriveParams {
        let mut p = base;
        for (slot, &i) in free.iter().enumerate() {
            p[i] = base[i] + x[slot] * scale[i];
        }
        DriveParams {
            detuning: p[0],
            kappa: p[1],
            beta_per_volt: p[2],
        }
    };
    let voltages_in: Vec<f64> = curves.iter().map(|c| c.voltage).collect();
    let samples = (curves.len() * times.len()) as f64;
    let mut last_err = None;
    let mut objective = |x: &[f64]| -> f64 {
        if x.iter().any(|v| v.abs() > options.box_fraction) {
            return f64::INFINITY;
        }
        let p = to_params(x);
        if p.kappa < 0.0 {
            return f64::INFINITY;
        }
        match simulate_drive_curves(space, kerr, &p, &voltages_in, times) {
            Ok(sim) => {
                sim.iter()
                    .zip(curves)
                    .map(|(s, c)| {
                        s.photon_numbers
                            .iter()
                            .zip(&c.photon_numbers)
                            .map(|(a, b)| (a - b).powi(2))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / samples
            }
            Err(e) => {
                last_err = Some(e);
                f64::INFINITY
            }
        }
    };
    let x0 = vec![0.0; free.len()];
    let nm = nelder_mead(&mut objective, &x0, 0.05, options.max_evaluations, options.x_tolerance);
    if !nm.value.is_finite() {
        return Err(last_err.unwrap_or_else(|| Error::NotConverged("drive fit found no finite loss".into())));
    }
    let mut flags = Vec::new();
    for (slot, &i) in free.iter().enumerate() {
        if (nm.x[slot].abs() - options.box_fraction).abs() < 1e-3 {
            let name = ["detuning", "kappa", "beta_per_volt"][i];
            let msg = format!("{name} at the search-box boundary");
            warn!("{msg}");
            flags.push(msg);
        }
    }
    if !nm.converged {
        flags.push(format!("evaluation cap {} reached", options.max_evaluations));
    }
    Ok(DriveFit {
        params: to_params(&nm.x),
        loss: nm.value,
        evaluations: nm.evaluations,
        converged: nm.converged,
        flags,
    })
}

struct SimplexResult {
    x: Vec<f64>,
    value: f64,
    evaluations: usize,
    converged: bool,
}

/// Nelder–Mead with standard coefficients; stops when every vertex lies
/// within `x_tol` of the best one.
fn nelder_mead(f: &mut impl FnMut(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize, x_tol: f64) -> SimplexResult {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = n + 1;
    let mut converged = false;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let size = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < x_tol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = f(&simplex[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    SimplexResult {
        x: simplex[best].clone(),
        value: values[best],
        evaluations: evals,
        converged,
    }
}
