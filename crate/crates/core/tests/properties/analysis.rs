use kpo::analysis::{
    eigenspectrum_vs_beta, fidelity, potential_shape, top_pair_splitting, Parity, PotentialShape,
};
use kpo::linalg::CMatrix;
use kpo::{Complex64, DensityMatrix, FockSpace, KpoParams};
use proptest::prelude::*;

fn state(w: &[(f64, f64)], d: usize, rank: usize) -> DensityMatrix {
    let g = CMatrix::from_fn(d, rank, |i, j| Complex64::new(w[i * rank + j].0, w[i * rank + j].1));
    DensityMatrix::sanitized(FockSpace::new(d).unwrap(), &g * g.adjoint() + CMatrix::identity(d, d) * Complex64::new(1e-3, 0.0)).unwrap()
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 25)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Levels of equal parity never cross: the energy order of the tracks in
    /// each sector is the same at every drive value.
    fn tracks_of_one_parity_never_cross(
        d in -20.0..20.0f64,
        k in 5.0..25.0f64,
        beta_max in 5.0..60.0f64,
        dim in 8usize..16,
    ) {
        let p = KpoParams::from_mhz(d, k, 0.0).unwrap();
        let betas: Vec<f64> = (0..25).map(|i| 2.0 * std::f64::consts::PI * beta_max * i as f64 / 24.0).collect();
        let s = eigenspectrum_vs_beta(FockSpace::new(dim).unwrap(), &p, &betas).unwrap();
        for parity in [Parity::Even, Parity::Odd] {
            let tracks: Vec<_> = s.tracks_of(parity).collect();
            let order = |i: usize| {
                let mut idx: Vec<usize> = (0..tracks.len()).collect();
                idx.sort_by(|&a, &b| tracks[a].energies[i].total_cmp(&tracks[b].energies[i]));
                idx
            };
            let first = order(0);
            for i in 1..betas.len() {
                prop_assert_eq!(&order(i), &first, "order changed at beta index {}", i);
            }
        }
    }

    /// Deep in the double well the even/odd splitting of the top pair shrinks
    /// roughly like exp(-2|α|²) as the drive grows (Δ ≠ 0; at Δ = 0 the pair is
    /// exactly degenerate).
    fn top_pair_splitting_decays(
        d in prop_oneof![-8.0..-1.0f64, 1.0..8.0f64],
        r1 in 3.0..4.0f64,
        gap in 0.5..1.0f64,
    ) {
        let k = 17.3;
        let p = KpoParams::from_mhz(d, k, 0.0).unwrap();
        let (b1, b2) = (r1 * p.kerr, (r1 + gap) * p.kerr);
        let (s1, s2) = (top_pair_splitting(60, &p, b1), top_pair_splitting(60, &p, b2));
        prop_assert!(s2 < s1, "{s2} !< {s1}");
        let n1 = (p.detuning + 2.0 * b1) / p.kerr;
        let n2 = (p.detuning + 2.0 * b2) / p.kerr;
        let slope = (s2.ln() - s1.ln()) / (n2 - n1);
        prop_assert!((-2.5..=-1.5).contains(&slope), "log-slope {slope}");
    }

    /// Bisection on the curvature classification recovers the classical
    /// threshold 2β = |Δ|.
    fn double_well_onset_is_at_half_detuning(d in prop_oneof![-30.0..-0.5f64, 0.5..30.0f64], k in 5.0..25.0f64) {
        let p = KpoParams::from_mhz(d, k, 1.1).unwrap();
        let (mut lo, mut hi) = (0.0, 2.0 * p.detuning.abs());
        prop_assert_eq!(potential_shape(&p, lo), PotentialShape::SingleMax);
        prop_assert_eq!(potential_shape(&p, hi), PotentialShape::DoubleWell);
        while hi - lo > 1e-9 * p.detuning.abs() {
            let mid = 0.5 * (lo + hi);
            if potential_shape(&p, mid) == PotentialShape::DoubleWell { hi = mid } else { lo = mid }
        }
        let onset = 0.5 * (lo + hi);
        prop_assert!((onset - 0.5 * p.detuning.abs()).abs() <= 1e-6 * p.detuning.abs());
    }

    fn fidelity_is_symmetric_and_bounded(a in entries(), b in entries(), r1 in 1usize..5, r2 in 1usize..5) {
        let x = state(&a, 5, r1);
        let y = state(&b, 5, r2);
        let fxy = fidelity(&x, &y).unwrap();
        let fyx = fidelity(&y, &x).unwrap();
        prop_assert!((0.0..=1.0).contains(&fxy));
        prop_assert!((fxy - fyx).abs() < 1e-8, "{fxy} vs {fyx}");
        prop_assert!((fidelity(&x, &x).unwrap() - 1.0).abs() < 1e-7);
    }

    /// Mixing towards the reference never lowers the fidelity with it.
    fn fidelity_grows_along_a_mixing_path(a in entries(), b in entries(), w1 in 0.0..1.0f64, w2 in 0.0..1.0f64) {
        let x = state(&a, 5, 2);
        let y = state(&b, 5, 3);
        let (lo, hi) = if w1 < w2 { (w1, w2) } else { (w2, w1) };
        let f_lo = fidelity(&x.mix(&y, lo).unwrap(), &y).unwrap();
        let f_hi = fidelity(&x.mix(&y, hi).unwrap(), &y).unwrap();
        // mix(y, w) = w·x + (1−w)·y, so a smaller w is closer to y
        prop_assert!(f_lo >= f_hi - 1e-8, "{f_lo} < {f_hi}");
    }
}

/// Every property of this suite by name.
pub const PROPERTIES: &[(&str, fn())] = &[
    ("tracks_of_one_parity_never_cross", tracks_of_one_parity_never_cross),
    ("top_pair_splitting_decays", top_pair_splitting_decays),
    ("double_well_onset_is_at_half_detuning", double_well_onset_is_at_half_detuning),
    ("fidelity_is_symmetric_and_bounded", fidelity_is_symmetric_and_bounded),
    ("fidelity_grows_along_a_mixing_path", fidelity_grows_along_a_mixing_path),
];

pub fn run(name: &str) {
    let (_, f) = PROPERTIES.iter().find(|(n, _)| *n == name).expect("known property");
    f();
}
