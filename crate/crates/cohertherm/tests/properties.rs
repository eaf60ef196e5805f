//! Property tests: algebraic invariants that must hold for arbitrary inputs.

use cohertherm::density::DensityMatrix;
use cohertherm::fluctuation::{
    classical_ratio, quantum_ratio_from_sums, structured_ratio, von_neumann_entropy,
    StructuredCoherenceModel,
};
use cohertherm::opensystem::evolve_von_neumann;
use cohertherm::purification::{self, MixedState};
use cohertherm::rng::SplitMix64;
use cohertherm::semiclassics::free_particle_kernel;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

fn normalized_probs(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classical_detailed_balance(ds in -20.0..20.0f64, kb in 0.1..5.0f64) {
        let forward = classical_ratio(ds, kb);
        let backward = classical_ratio(-ds, kb);
        prop_assert!((forward * backward - 1.0).abs() < 1e-12 * forward.max(backward));
    }

    #[test]
    fn quantum_ratio_reduces_to_classical(
        ds in -5.0..5.0f64,
        kb in 0.2..3.0f64,
        diag_f in 0.1..10.0f64,
        diag_b in 0.1..10.0f64,
    ) {
        let q = quantum_ratio_from_sums((diag_f, 0.0), (diag_b, 0.0), ds, kb).unwrap();
        let c = classical_ratio(ds, kb);
        prop_assert!((q - c).abs() <= 4.0 * f64::EPSILON * c);
    }

    #[test]
    fn quantum_ratio_interference_bound(
        ds in -3.0..3.0f64,
        diag_f in 0.5..5.0f64,
        diag_b in 0.5..5.0f64,
        // Interference cannot exceed the diagonal sum in magnitude for a
        // physical decomposition; ratios stay positive and finite.
        frac_f in -0.9..0.9f64,
        frac_b in -0.9..0.9f64,
    ) {
        let q = quantum_ratio_from_sums(
            (diag_f, frac_f * diag_f),
            (diag_b, frac_b * diag_b),
            ds,
            1.0,
        )
        .unwrap();
        prop_assert!(q.is_finite() && q > 0.0);
        let c = classical_ratio(ds, 1.0);
        let upper = (1.0 + frac_f.abs()) / (1.0 - frac_b.abs());
        let lower = (1.0 - frac_f.abs()) / (1.0 + frac_b.abs());
        prop_assert!(q <= c * upper * (1.0 + 1e-12));
        prop_assert!(q >= c * lower * (1.0 - 1e-12));
    }

    #[test]
    fn structured_curve_envelope(
        ds in -6.0..6.0f64,
        c in 0.0..5.0f64,
        ds0 in -3.0..3.0f64,
        sigma in 0.05..2.0f64,
        kb in 0.3..2.0f64,
    ) {
        let model = StructuredCoherenceModel::new(c, ds0, sigma).unwrap();
        let s = structured_ratio(ds, &model, kb);
        let base = classical_ratio(ds, kb);
        prop_assert!(s >= base * (1.0 - 1e-12));
        prop_assert!(s <= base * (1.0 + c) * (1.0 + 1e-12));
    }

    #[test]
    fn free_kernel_modulus(
        mass in 0.2..5.0f64,
        hbar in 0.05..2.0f64,
        dq in -4.0..4.0f64,
        t in 0.1..5.0f64,
    ) {
        let k = free_particle_kernel(mass, hbar, dq, t);
        let expected = (mass / (TAU * hbar * t)).sqrt();
        prop_assert!((k.norm() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn purification_reduced_state_invariance(
        raw in proptest::collection::vec(0.05..1.0f64, 1..5),
        seed in any::<u64>(),
    ) {
        let p = normalized_probs(raw);
        let components = p.len();
        let mixed = MixedState::new(p, components).unwrap();
        let state = purification::purify(&mixed, components).unwrap();
        let mut rng = SplitMix64::new(seed);
        let phases: Vec<f64> = (0..components).map(|_| rng.uniform(-PI, PI)).collect();
        let twisted = purification::apply_phases(&state, &phases).unwrap();
        let reduced = twisted.reduced_system_state();
        let expected = mixed.density_matrix();
        let dev = (reduced.entries() - expected.entries())
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()));
        prop_assert!(dev < 1e-12);
    }

    #[test]
    fn purity_of_diagonal_state(raw in proptest::collection::vec(0.05..1.0f64, 1..7)) {
        let p = normalized_probs(raw);
        let rho = DensityMatrix::from_probabilities(&p).unwrap();
        let expected: f64 = p.iter().map(|x| x * x).sum();
        prop_assert!((rho.purity() - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_invariant_under_unitary_evolution(
        seed in any::<u64>(),
        d in 2usize..=8,
        t in 0.1..2.0f64,
    ) {
        let mut rng = SplitMix64::new(seed);
        let a = DMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.next_normal(), rng.next_normal())
        });
        let h = (&a + a.adjoint()).scale(0.5);
        let b = DMatrix::from_fn(d, d, |_, _| {
            Complex64::new(rng.next_normal(), rng.next_normal())
        });
        let pos = &b * b.adjoint();
        let rho = DensityMatrix::new(pos.scale(1.0 / pos.trace().re)).unwrap();
        let out = evolve_von_neumann(&rho, &h, t, 1.0).unwrap();
        let s0 = von_neumann_entropy(&rho, 1.0).unwrap();
        let s1 = von_neumann_entropy(&out, 1.0).unwrap();
        prop_assert!((s0 - s1).abs() < 1e-8 * s0.abs().max(1.0));
    }

    #[test]
    fn splitmix_uniform_stays_in_range(seed in any::<u64>(), lo in -10.0..0.0f64, hi in 0.1..10.0f64) {
        let mut rng = SplitMix64::new(seed);
        for _ in 0..64 {
            let x = rng.uniform(lo, hi);
            prop_assert!((lo..hi).contains(&x));
            prop_assert!(rng.next_normal().is_finite());
        }
    }
}
