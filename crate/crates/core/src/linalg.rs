//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let h = hermitize(m);
    let eig = SymmetricEigen::new(h);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Rebuild V diag(f(λ)) V†.
pub fn spectral_map(values: &DVector<f64>, vectors: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let s = f(values[j]);
        scaled.column_mut(j).scale_mut(s);
    }
    &scaled * vectors.adjoint()
}

/// Principal square root of a positive semidefinite Hermitian matrix
/// (negative eigenvalues clipped to zero).
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    spectral_map(&values, &vectors, |x| x.max(0.0).sqrt())
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Tr(A B) without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Euclidean projection of a real vector onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projection onto {ρ ⪰ 0, Tr ρ = 1} in Frobenius norm.
pub fn project_density(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let projected = project_simplex(values.as_slice());
    let p = DVector::from_vec(projected);
    hermitize(&spectral_map(&p, &vectors, |x| x))
}

/// Matrix exponential (scaling and squaring with a Padé approximant).
pub fn expm(m: &CMatrix) -> CMatrix {
    m.clone().exp()
}

/// Solve A x = b with partial-pivot LU.
pub fn solve(a: CMatrix, b: &CVector) -> Result<CVector> {
    let lu = a.lu();
    lu.solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))
}

/// Solve (H - shift·I) x = b for an upper-Hessenberg H in O(n²) using
/// Gaussian elimination with pivoting between adjacent rows.
pub fn solve_shifted_hessenberg(h: &CMatrix, shift: Complex64, b: &CVector) -> Result<CVector> {
    let n = h.nrows();
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let mut rhs = b.clone();
    for k in 0..n.saturating_sub(1) {
        if a[(k + 1, k)].norm() > a[(k, k)].norm() {
            a.swap_rows(k, k + 1);
            rhs.swap_rows(k, k + 1);
        }
        let pivot = a[(k, k)];
        if pivot.norm() == 0.0 {
            continue;
        }
        let factor = a[(k + 1, k)] / pivot;
        if factor.norm() != 0.0 {
            for j in k..n {
                let v = a[(k, j)];
                a[(k + 1, j)] -= factor * v;
            }
            let v = rhs[k];
            rhs[k + 1] -= factor * v;
        }
    }
    let mut x = CVector::zeros(n);
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= a[(i, j)] * x[j];
        }
        let d = a[(i, i)];
        if d.norm() == 0.0 {
            return Err(Error::Numerical("singular shifted Hessenberg system".into()));
        }
        x[i] = acc / d;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = CMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()));
        hermitize(&m)
    }

    #[test]
    fn simplex_projection_sums_to_one() {
        let p = project_simplex(&[0.3, -0.2, 1.4, 0.1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(p.iter().all(|&x| x >= 0.0));
        // already feasible points are fixed
        let q = project_simplex(&[0.25, 0.25, 0.5]);
        assert!((q[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eigen_reconstructs() {
        let m = random_hermitian(6, 3);
        let (v, u) = hermitian_eigen(&m);
        let back = spectral_map(&v, &u, |x| x);
        assert!(frobenius(&(back - &m)) < 1e-12);
        assert!(v.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn hessenberg_solver_matches_lu() {
        let m = random_hermitian(8, 11) + CMatrix::identity(8, 8) * Complex64::new(0.0, 2.0);
        let hess = m.clone().hessenberg();
        let (q, h) = hess.unpack();
        let b = CVector::from_fn(8, |i, _| Complex64::new(i as f64, 1.0));
        let shift = Complex64::new(0.3, -0.7);
        let y = solve_shifted_hessenberg(&h, shift, &(q.adjoint() * &b)).unwrap();
        let x = &q * y;
        let direct = solve(m - CMatrix::identity(8, 8) * shift, &b).unwrap();
        assert!((x - direct).norm() < 1e-10);
    }
}
