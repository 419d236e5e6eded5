//! Truncated Fock-space states and operators.
//!
//! Level 0 is the vacuum. Every operator and state remembers the dimension
//! of the space it was built for, and binary operations reject mismatches.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, ONE, ZERO};

/// Default number of retained Fock levels.
pub const DEFAULT_DIM: usize = 30;

/// Population above this level index counts as touching the truncation edge.
pub const TRUNCATION_MARGIN: usize = 3;
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::param("dim", format!("need at least 2 levels, got {dim}")));
        }
        Ok(FockSpace { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check(&self, other: FockSpace) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

impl Default for FockSpace {
    fn default() -> Self {
        FockSpace { dim: DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: FockSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: FockSpace, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim || matrix.ncols() != space.dim {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Operator { space, matrix })
    }

    pub fn identity(space: FockSpace) -> Self {
        Operator {
            space,
            matrix: CMatrix::identity(space.dim, space.dim),
        }
    }

    pub fn zeros(space: FockSpace) -> Self {
        Operator {
            space,
            matrix: CMatrix::zeros(space.dim, space.dim),
        }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            space: self.space,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn compose(&self, rhs: &Operator) -> Result<Operator> {
        self.space.check(rhs.space)?;
        Ok(Operator {
            space: self.space,
            matrix: &self.matrix * &rhs.matrix,
        })
    }

    pub fn add(&self, rhs: &Operator) -> Result<Operator> {
        self.space.check(rhs.space)?;
        Ok(Operator {
            space: self.space,
            matrix: &self.matrix + &rhs.matrix,
        })
    }

    pub fn scale(&self, s: Complex64) -> Operator {
        Operator {
            space: self.space,
            matrix: &self.matrix * s,
        }
    }

    /// ‖A − A†‖_F / ‖A‖_F (0 for the zero operator).
    pub fn hermiticity_error(&self) -> f64 {
        let norm = linalg::frobenius(&self.matrix);
        if norm == 0.0 {
            return 0.0;
        }
        linalg::frobenius(&(&self.matrix - self.matrix.adjoint())) / norm
    }

    /// ‖A†A − I‖_F.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.space.dim;
        linalg::frobenius(&(self.matrix.adjoint() * &self.matrix - CMatrix::identity(n, n)))
    }

    pub fn apply(&self, psi: &StateVector) -> Result<CVector> {
        self.space.check(psi.space)?;
        Ok(&self.matrix * &psi.amplitudes)
    }

    /// Tr(A ρ).
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<Complex64> {
        self.space.check(rho.space)?;
        Ok(linalg::trace_product(&self.matrix, &rho.matrix))
    }
}

pub fn annihilation_op(space: FockSpace) -> Operator {
    let n = space.dim;
    let mut m = CMatrix::zeros(n, n);
    for k in 1..n {
        m[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    Operator { space, matrix: m }
}

pub fn creation_op(space: FockSpace) -> Operator {
    annihilation_op(space).dagger()
}

pub fn number_op(space: FockSpace) -> Operator {
    let n = space.dim;
    Operator {
        space,
        matrix: CMatrix::from_diagonal(&DVector::from_fn(n, |k, _| Complex64::new(k as f64, 0.0))),
    }
}

/// P = exp(iπ a†a), diagonal with entries (−1)^n.
pub fn parity_op(space: FockSpace) -> Operator {
    let n = space.dim;
    Operator {
        space,
        matrix: CMatrix::from_diagonal(&DVector::from_fn(n, |k, _| {
            Complex64::new(parity_sign(k), 0.0)
        })),
    }
}

pub(crate) fn parity_sign(level: usize) -> f64 {
    if level % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Largest tolerated loss of norm on the low columns of the displacement.
pub const DISPLACEMENT_LEAKAGE_TOLERANCE: f64 = 1e-6;

/// D(α) = exp(α a† − α* a) computed in the truncated space.
///
/// The truncated generator is anti-Hermitian, so the result is unitary to
/// rounding. Truncation validity is judged on the exact operator: the
/// lowest ⌈dim/2⌉ columns of the infinite-dimensional D(α), restricted to
/// the retained levels, must keep their norm to within
/// [`DISPLACEMENT_LEAKAGE_TOLERANCE`].
pub fn displacement_op(space: FockSpace, alpha: Complex64) -> Result<Operator> {
    let columns = space.dim.div_ceil(2);
    let leak = displacement_leakage(space.dim, alpha, columns);
    if leak > DISPLACEMENT_LEAKAGE_TOLERANCE {
        return Err(Error::Truncation(format!(
            "displacement |alpha| = {:.3} leaks {:.2e} of the norm out of {} levels",
            alpha.norm(),
            leak,
            space.dim
        )));
    }
    Ok(displacement_op_unchecked(space, alpha))
}

pub fn displacement_op_unchecked(space: FockSpace, alpha: Complex64) -> Operator {
    let a = annihilation_op(space);
    let generator = a.matrix.adjoint() * alpha - &a.matrix * alpha.conj();
    Operator {
        space,
        matrix: linalg::expm(&generator),
    }
}

/// Largest norm deficit among the first `columns` columns of the exact D(α)
/// restricted to `dim` levels.
pub fn displacement_leakage(dim: usize, alpha: Complex64, columns: usize) -> f64 {
    let block = displacement_elements(alpha, dim, columns.min(dim));
    (0..block.ncols())
        .map(|j| 1.0 - block.column(j).norm_squared())
        .fold(0.0, f64::max)
}

/// Exact matrix elements ⟨m|D(α)|n⟩ for m < rows, n < cols, from the
/// associated-Laguerre closed form. Free of truncation error.
pub fn displacement_elements(alpha: Complex64, rows: usize, cols: usize) -> CMatrix {
    let size = rows.max(cols);
    let x = alpha.norm_sqr();
    let mut out = CMatrix::zeros(rows, cols);
    if x == 0.0 {
        for k in 0..rows.min(cols) {
            out[(k, k)] = ONE;
        }
        return out;
    }
    let r = alpha.norm();
    let unit_up = alpha / r; // phase for m > n
    let unit_down = -alpha.conj() / r; // phase for m < n
    let ln_fact = ln_factorials(size + 1);
    for k in 0..size {
        // lower index l runs while l + k < size
        let lmax = size - k;
        let laguerre = laguerre_sequence(lmax, k, x);
        let phase_up = unit_up.powu(k as u32);
        let phase_down = unit_down.powu(k as u32);
        for (l, &lag) in laguerre.iter().enumerate() {
            let log_mag = 0.5 * (ln_fact[l] - ln_fact[l + k]) + k as f64 * r.ln() - 0.5 * x;
            let mag = log_mag.exp() * lag;
            let (m_up, n_up) = (l + k, l);
            if m_up < rows && n_up < cols {
                out[(m_up, n_up)] = phase_up * mag;
            }
            if k > 0 {
                let (m_dn, n_dn) = (l, l + k);
                if m_dn < rows && n_dn < cols {
                    out[(m_dn, n_dn)] = phase_down * mag;
                }
            }
        }
    }
    out
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n + 1];
    for i in 1..=n {
        v[i] = v[i - 1] + (i as f64).ln();
    }
    v
}

/// L_l^{(k)}(x) for l = 0..len.
fn laguerre_sequence(len: usize, k: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    let kf = k as f64;
    out.push(1.0);
    if len > 1 {
        out.push(1.0 + kf - x);
    }
    for l in 1..len.saturating_sub(1) {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0 + kf - x) * out[l] - (lf + kf) * out[l - 1]) / (lf + 1.0);
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: FockSpace,
    amplitudes: CVector,
}

impl StateVector {
    /// Normalizes the amplitudes; rejects the zero vector.
    pub fn new(space: FockSpace, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.dim {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                found: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidState("state vector has zero or non-finite norm".into()));
        }
        Ok(StateVector {
            space,
            amplitudes: amplitudes.unscale(norm),
        })
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.space.check(other.space)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn expectation(&self, op: &Operator) -> Result<Complex64> {
        self.space.check(op.space)?;
        Ok(self.amplitudes.dotc(&(&op.matrix * &self.amplitudes)))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            space: self.space,
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    /// Applies an operator and renormalizes.
    pub fn evolve(&self, op: &Operator) -> Result<StateVector> {
        StateVector::new(self.space, op.apply(self)?)
    }
}

pub fn fock_state(space: FockSpace, n: usize) -> Result<StateVector> {
    if n >= space.dim {
        return Err(Error::LevelOutOfRange {
            level: n,
            dim: space.dim,
        });
    }
    let mut v = CVector::zeros(space.dim);
    v[n] = ONE;
    Ok(StateVector {
        space,
        amplitudes: v,
    })
}

/// |α⟩ from the closed-form amplitudes e^{−|α|²/2} αⁿ/√n!, renormalized
/// within the truncated space.
pub fn coherent_state(space: FockSpace, alpha: Complex64) -> StateVector {
    let mut v = CVector::zeros(space.dim);
    let mut term = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    v[0] = term;
    for n in 1..space.dim {
        term = term * alpha / (n as f64).sqrt();
        v[n] = term;
    }
    StateVector::new(space, v).expect("coherent amplitudes are never all zero")
}

/// Normalized (|α⟩ + s|−α⟩) for s = ±1.
pub fn cat_state(space: FockSpace, alpha: Complex64, even: bool) -> Result<StateVector> {
    let plus = coherent_state(space, alpha);
    let minus = coherent_state(space, -alpha);
    let sign = if even { ONE } else { -ONE };
    StateVector::new(space, &plus.amplitudes + &minus.amplitudes * sign)
}

/// Tolerances used when validating user-supplied density matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: FockSpace,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(space: FockSpace, matrix: CMatrix) -> Result<Self> {
        let op = Operator::new(space, matrix)?;
        let matrix = op.matrix;
        let herm = linalg::frobenius(&(&matrix - matrix.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.2e})")));
        }
        let tr = linalg::trace(&matrix);
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let (values, _) = linalg::hermitian_eigen(&matrix);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.2e}")));
        }
        Ok(DensityMatrix { space, matrix })
    }

    /// Hermitizes, clips eigenvalues below −[`POSITIVITY_TOL`] and
    /// renormalizes. Used where a numerical result must satisfy the type
    /// invariants.
    pub fn sanitized(space: FockSpace, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim || matrix.ncols() != space.dim {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                found: matrix.nrows(),
            });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let mut m = linalg::hermitize(&matrix);
        let (values, vectors) = linalg::hermitian_eigen(&m);
        if values[0] < -POSITIVITY_TOL {
            m = linalg::spectral_map(&values, &vectors, |x| x.max(0.0));
        }
        let tr = linalg::trace(&m).re;
        if tr <= 0.0 {
            return Err(Error::InvalidState("non-positive trace".into()));
        }
        m.unscale_mut(tr);
        Ok(DensityMatrix { space, matrix: m })
    }

    pub fn vacuum(space: FockSpace) -> Self {
        let mut m = CMatrix::zeros(space.dim, space.dim);
        m[(0, 0)] = ONE;
        DensityMatrix { space, matrix: m }
    }

    /// Diagonal state with the given Fock populations (normalized).
    pub fn from_populations(space: FockSpace, populations: &[f64]) -> Result<Self> {
        if populations.len() > space.dim {
            return Err(Error::DimensionMismatch {
                expected: space.dim,
                found: populations.len(),
            });
        }
        if populations.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidState("populations must be finite and non-negative".into()));
        }
        let total: f64 = populations.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidState("populations sum to zero".into()));
        }
        let mut m = CMatrix::zeros(space.dim, space.dim);
        for (k, &p) in populations.iter().enumerate() {
            m[(k, k)] = Complex64::new(p / total, 0.0);
        }
        Ok(DensityMatrix { space, matrix: m })
    }

    /// Convex combination w·self + (1−w)·other.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> Result<Self> {
        self.space.check(other.space)?;
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::param("w", "mixing weight must lie in [0, 1]"));
        }
        Ok(DensityMatrix {
            space: self.space,
            matrix: &self.matrix * Complex64::new(w, 0.0) + &other.matrix * Complex64::new(1.0 - w, 0.0),
        })
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.matrix, &self.matrix).re
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.matrix
            .diagonal()
            .iter()
            .enumerate()
            .map(|(n, z)| n as f64 * z.re)
            .sum()
    }

    pub fn parity(&self) -> f64 {
        self.matrix
            .diagonal()
            .iter()
            .enumerate()
            .map(|(n, z)| parity_sign(n) * z.re)
            .sum()
    }

    pub fn expectation(&self, op: &Operator) -> Result<Complex64> {
        op.expectation(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (values, _) = linalg::hermitian_eigen(&self.matrix);
        values[0]
    }

    /// Population in the top `levels` Fock levels.
    pub fn tail_population(&self, levels: usize) -> f64 {
        let n = self.space.dim;
        self.populations()[n.saturating_sub(levels)..].iter().sum()
    }

    /// Whether the state touches the truncation edge (population above
    /// level dim − [`TRUNCATION_MARGIN`] exceeding [`TRUNCATION_TOLERANCE`]).
    pub fn truncation_warning(&self) -> Option<String> {
        let tail = self.tail_population(TRUNCATION_MARGIN);
        (tail > TRUNCATION_TOLERANCE).then(|| {
            format!(
                "population {tail:.2e} in the top {TRUNCATION_MARGIN} of {} Fock levels",
                self.space.dim
            )
        })
    }

    /// ‖PρP† − ρ‖_F.
    pub fn parity_asymmetry(&self) -> f64 {
        let n = self.space.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if (i + j) % 2 == 1 {
                    acc += 4.0 * self.matrix[(i, j)].norm_sqr();
                }
            }
        }
        acc.sqrt()
    }

    /// (ρ + PρP†)/2, which zeroes the coherences between parity sectors.
    pub fn parity_symmetrized(&self) -> DensityMatrix {
        let mut m = self.matrix.clone();
        symmetrize_parity(&mut m);
        DensityMatrix {
            space: self.space,
            matrix: m,
        }
    }

    /// U ρ U†.
    pub fn conjugate_by(&self, u: &Operator) -> Result<DensityMatrix> {
        self.space.check(u.space)?;
        Ok(DensityMatrix {
            space: self.space,
            matrix: &u.matrix * &self.matrix * u.matrix.adjoint(),
        })
    }

    /// Rotation e^{−iθn} ρ e^{iθn} in phase space.
    pub fn rotated(&self, theta: f64) -> DensityMatrix {
        let n = self.space.dim;
        let m = CMatrix::from_fn(n, n, |i, j| {
            self.matrix[(i, j)] * Complex64::from_polar(1.0, -theta * (i as f64 - j as f64))
        });
        DensityMatrix {
            space: self.space,
            matrix: m,
        }
    }

    /// Embeds into a space with a different dimension; truncating renormalizes.
    pub fn resized(&self, space: FockSpace) -> Result<DensityMatrix> {
        let n = self.space.dim.min(space.dim);
        let mut m = CMatrix::zeros(space.dim, space.dim);
        m.view_mut((0, 0), (n, n)).copy_from(&self.matrix.view((0, 0), (n, n)));
        let tr = linalg::trace(&m).re;
        if tr <= 0.0 {
            return Err(Error::InvalidState("no population survives resizing".into()));
        }
        m.unscale_mut(tr);
        Ok(DensityMatrix { space, matrix: m })
    }
}

pub(crate) fn symmetrize_parity(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            if (i + j) % 2 == 1 {
                m[(i, j)] = ZERO;
            }
        }
    }
}
