use kpo::linalg::{frobenius, project_density, CMatrix};
use kpo::tomography::{
    default_displacements, reconstruct_state, synthesize_dataset, voltages_for, CalibrationResult,
    ReconstructionOptions,
};
use kpo::{Complex64, DensityMatrix, FockSpace};
use proptest::prelude::*;

const DIM: usize = 4;

fn hermitian(w: &[(f64, f64)], d: usize) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |i, j| Complex64::new(w[i * d + j].0, w[i * d + j].1));
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

fn state(w: &[(f64, f64)], d: usize) -> DensityMatrix {
    let g = CMatrix::from_fn(d, d, |i, j| Complex64::new(w[i * d + j].0, w[i * d + j].1));
    DensityMatrix::sanitized(FockSpace::new(d).unwrap(), &g * g.adjoint() + CMatrix::identity(d, d) * Complex64::new(1e-3, 0.0)).unwrap()
}

fn entries(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
}

fn options(initial: Option<DensityMatrix>) -> ReconstructionOptions {
    ReconstructionOptions {
        dim: Some(DIM),
        initial,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    fn projection_is_idempotent_and_non_expansive(a in entries(36), b in entries(36), d in 2usize..7) {
        let x = hermitian(&a, d);
        let y = hermitian(&b, d);
        let px = project_density(&x);
        let py = project_density(&y);
        prop_assert!(frobenius(&(project_density(&px) - &px)) < 1e-10);
        prop_assert!(frobenius(&(&px - &py)) <= frobenius(&(&x - &y)) + 1e-10);
        let tr: Complex64 = px.trace();
        prop_assert!((tr.re - 1.0).abs() < 1e-10);
        prop_assert!(DensityMatrix::new(FockSpace::new(d).unwrap(), px).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The least-squares objective is convex, so restarts from different
    /// feasible points reach the same loss.
    fn restarts_agree_on_the_loss(truth in entries(16), s1 in entries(16), s2 in entries(16), sigma in 0.0..0.02f64, seed in 0u64..1000) {
        let rho = state(&truth, DIM);
        let cal = CalibrationResult::ideal(3);
        let voltages = voltages_for(&default_displacements(), Complex64::new(1.0, 0.0));
        let data = synthesize_dataset(&rho, &voltages, &cal, sigma, seed).unwrap();
        let a = reconstruct_state(&data, &cal, &options(Some(state(&s1, DIM)))).unwrap();
        let b = reconstruct_state(&data, &cal, &options(Some(state(&s2, DIM)))).unwrap();
        let c = reconstruct_state(&data, &cal, &options(None)).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-8, "{} vs {}", a.loss, b.loss);
        prop_assert!((a.loss - c.loss).abs() <= 1e-8, "{} vs {}", a.loss, c.loss);
    }

    /// Scaling every bin power and every gain by the same factor leaves the
    /// estimate unchanged.
    fn gain_scale_covariance(truth in entries(16), scale in 0.2..5.0f64) {
        let rho = state(&truth, DIM);
        let cal = CalibrationResult::new(Complex64::new(1.0, 0.0), vec![1.0, 0.9, 1.1]).unwrap();
        let voltages = voltages_for(&default_displacements(), cal.k);
        let data = synthesize_dataset(&rho, &voltages, &cal, 0.0, 0).unwrap();
        let scaled_cal = CalibrationResult::new(cal.k, cal.c.iter().map(|c| c * scale).collect()).unwrap();
        let a = reconstruct_state(&data, &cal, &options(None)).unwrap();
        let b = reconstruct_state(&data.rescaled(scale), &scaled_cal, &options(None)).unwrap();
        prop_assert!(frobenius(&(a.rho.matrix() - b.rho.matrix())) < 1e-5);
    }
}

/// Every property of this suite by name.
pub const PROPERTIES: &[(&str, fn())] = &[
    ("projection_is_idempotent_and_non_expansive", projection_is_idempotent_and_non_expansive),
    ("restarts_agree_on_the_loss", restarts_agree_on_the_loss),
    ("gain_scale_covariance", gain_scale_covariance),
];

pub fn run(name: &str) {
    let (_, f) = PROPERTIES.iter().find(|(n, _)| *n == name).expect("known property");
    f();
}
