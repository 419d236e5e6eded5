use kpo::dynamics::{propagate, steady_state, stationarity_residual, Sampling};
use kpo::linalg::{project_density, CMatrix};
use kpo::{parity_op, Complex64, DensityMatrix, DriveProfile, FockSpace, KpoParams};
use proptest::prelude::*;

fn random_state(dim: usize, entries: &[(f64, f64)]) -> DensityMatrix {
    let g = CMatrix::from_fn(dim, dim, |i, j| {
        let (re, im) = entries[(i * dim + j) % entries.len()];
        Complex64::new(re, im)
    });
    let m = &g * g.adjoint() + CMatrix::identity(dim, dim) * Complex64::new(1e-3, 0.0);
    DensityMatrix::sanitized(FockSpace::new(dim).unwrap(), project_density(&m)).unwrap()
}

fn params() -> impl Strategy<Value = KpoParams> {
    (-20.0..20.0f64, 5.0..25.0f64, 0.0..3.0f64).prop_map(|(d, k, g)| KpoParams::from_mhz(d, k, g).unwrap())
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 36)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    fn evolution_keeps_trace_and_positivity(
        dim in 3usize..6,
        e in entries(),
        p in params(),
        beta_mhz in 0.0..15.0f64,
        t_ns in 1.0..40.0f64,
    ) {
        let rho0 = random_state(dim, &e);
        let drive = DriveProfile::SinSquaredRamp { beta_max: 2.0 * std::f64::consts::PI * beta_mhz, t_max: 0.02 };
        let traj = propagate(&rho0, &p, &drive, t_ns * 1e-3, &Sampling::Uniform { count: 4 }).unwrap();
        for s in &traj.states {
            prop_assert!((s.trace() - 1.0).abs() < 1e-8, "trace {}", s.trace());
            prop_assert!(s.min_eigenvalue() > -1e-7, "eigenvalue {}", s.min_eigenvalue());
            prop_assert!(s.purity() <= 1.0 + 1e-8);
        }
    }

    fn closed_evolution_conserves_parity(
        dim in 3usize..7,
        e in entries(),
        d in -20.0..20.0f64,
        k in 5.0..25.0f64,
        beta_mhz in 0.0..15.0f64,
    ) {
        let p = KpoParams::from_mhz(d, k, 0.0).unwrap();
        let rho0 = random_state(dim, &e);
        let pop = parity_op(rho0.space());
        let before = rho0.expectation(&pop).unwrap().re;
        let drive = DriveProfile::constant(2.0 * std::f64::consts::PI * beta_mhz);
        let traj = propagate(&rho0, &p, &drive, 0.03, &Sampling::Uniform { count: 3 }).unwrap();
        for s in &traj.states {
            prop_assert!((s.expectation(&pop).unwrap().re - before).abs() < 1e-7);
        }
    }

    fn lossy_evolution_keeps_parity_blocks(
        dim in 3usize..7,
        e in entries(),
        p in params(),
        beta_mhz in 0.0..15.0f64,
    ) {
        let rho0 = random_state(dim, &e).parity_symmetrized();
        let rho0 = DensityMatrix::sanitized(rho0.space(), rho0.into_matrix()).unwrap();
        let drive = DriveProfile::constant(2.0 * std::f64::consts::PI * beta_mhz);
        let traj = propagate(&rho0, &p, &drive, 0.05, &Sampling::Uniform { count: 3 }).unwrap();
        for s in &traj.states {
            prop_assert!(s.parity_asymmetry() < 1e-9, "asymmetry {}", s.parity_asymmetry());
        }
    }

    fn steady_state_is_stationary(
        dim in 4usize..10,
        d in -20.0..20.0f64,
        k in 5.0..25.0f64,
        g in 0.3..3.0f64,
        beta_mhz in 0.0..15.0f64,
    ) {
        let p = KpoParams::from_mhz(d, k, g).unwrap();
        let beta = 2.0 * std::f64::consts::PI * beta_mhz;
        let ss = steady_state(FockSpace::new(dim).unwrap(), &p, beta).unwrap();
        prop_assert!((ss.trace() - 1.0).abs() < 1e-9);
        prop_assert!(ss.min_eigenvalue() > -1e-8);
        prop_assert!(ss.parity_asymmetry() < 1e-9);
        let scale = p.kappa.max(beta).max(p.kerr);
        prop_assert!(stationarity_residual(&ss, &p, beta) < 1e-8 * scale);
    }
}

/// Every property of this suite by name.
pub const PROPERTIES: &[(&str, fn())] = &[
    ("evolution_keeps_trace_and_positivity", evolution_keeps_trace_and_positivity),
    ("closed_evolution_conserves_parity", closed_evolution_conserves_parity),
    ("lossy_evolution_keeps_parity_blocks", lossy_evolution_keeps_parity_blocks),
    ("steady_state_is_stationary", steady_state_is_stationary),
];

pub fn run(name: &str) {
    let (_, f) = PROPERTIES.iter().find(|(n, _)| *n == name).expect("known property");
    f();
}
