use kpo::dynamics::CorrelationOptions;
use kpo::linalg::CMatrix;
use kpo::spectral::{bin_powers_theory, transient_psd_analytic, transient_psd_numeric_with, NumericPsdOptions};
use kpo::{Complex64, DensityMatrix, FockSpace, KpoParams};
use proptest::prelude::*;

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn populations(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, len).prop_map(|w| normalized(&w))
}

fn grid(kerr: f64) -> Vec<f64> {
    (0..400).map(|k| -4.5 * kerr + 5.5 * kerr * k as f64 / 399.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    fn analytic_psd_is_linear_in_populations(
        p in populations(6),
        q in populations(6),
        w in 0.0..1.0f64,
        k in 5.0..25.0f64,
        g in 0.5..3.0f64,
    ) {
        let params = KpoParams::from_mhz(0.0, k, g).unwrap();
        let f = grid(params.kerr);
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| w * a + (1.0 - w) * b).collect();
        let sp = transient_psd_analytic(&p, &params, &f).unwrap();
        let sq = transient_psd_analytic(&q, &params, &f).unwrap();
        let sm = transient_psd_analytic(&mix, &params, &f).unwrap();
        let scale = sp.max_value().max(sq.max_value());
        for i in 0..f.len() {
            let lin = w * sp.values[i] + (1.0 - w) * sq.values[i];
            prop_assert!((sm.values[i] - lin).abs() <= 1e-10 * scale);
        }
    }

    fn bin_powers_are_linear_tail_sums(p in populations(7), q in populations(7), w in 0.0..1.0f64) {
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| w * a + (1.0 - w) * b).collect();
        let (bp, bq, bm) = (bin_powers_theory(&p, 4), bin_powers_theory(&q, 4), bin_powers_theory(&mix, 4));
        for j in 0..4 {
            prop_assert!((bm.powers[j] - (w * bp.powers[j] + (1.0 - w) * bq.powers[j])).abs() < 1e-14);
            let direct: f64 = p[j + 1..].iter().sum();
            prop_assert!((bp.powers[j] - direct).abs() < 1e-14);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// The undriven transient spectrum ignores coherences: a state and its
    /// dephased copy emit the same spectrum.
    fn numeric_psd_depends_only_on_the_diagonal(
        w in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16),
        k in 8.0..25.0f64,
    ) {
        let space = FockSpace::new(4).unwrap();
        let g = CMatrix::from_fn(4, 4, |i, j| Complex64::new(w[i * 4 + j].0, w[i * 4 + j].1));
        let rho = DensityMatrix::sanitized(space, &g * g.adjoint() + CMatrix::identity(4, 4) * Complex64::new(1e-3, 0.0)).unwrap();
        let diag = DensityMatrix::from_populations(space, &rho.populations()).unwrap();
        let params = KpoParams::from_mhz(0.0, k, 4.0).unwrap();
        let opts = NumericPsdOptions {
            correlation: CorrelationOptions { lag_step: 2e-3, decay_tolerance: 1e-6, ..Default::default() },
            frequencies: Some(grid(params.kerr)),
            ..Default::default()
        };
        let a = transient_psd_numeric_with(&rho, &params, &opts).unwrap();
        let b = transient_psd_numeric_with(&diag, &params, &opts).unwrap();
        let scale = a.max_value();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-6 * scale, "{x} vs {y}");
        }
    }
}

/// Every property of this suite by name.
pub const PROPERTIES: &[(&str, fn())] = &[
    ("analytic_psd_is_linear_in_populations", analytic_psd_is_linear_in_populations),
    ("bin_powers_are_linear_tail_sums", bin_powers_are_linear_tail_sums),
    ("numeric_psd_depends_only_on_the_diagonal", numeric_psd_depends_only_on_the_diagonal),
];

pub fn run(name: &str) {
    let (_, f) = PROPERTIES.iter().find(|(n, _)| *n == name).expect("known property");
    f();
}
