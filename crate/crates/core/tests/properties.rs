use proptest::prelude::*;

use rmt_core::harness::{estimate_mean_var, ks_two_sample, EnsembleSpec};
use rmt_core::rng::SeedSequence;
use rmt_core::semicircle::{cdf, quantile};
use rmt_core::spectra::{eigen_symmetric, SymmetricMatrix};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_inverts_cdf(u in 1e-9f64..1.0 - 1e-9) {
        prop_assert!((cdf(quantile(u).unwrap()) - u).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_preserve_trace_and_norm(n in 2usize..24, seed in any::<u64>()) {
        let mut state = seed;
        let m = SymmetricMatrix::from_lower(n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let s = eigen_symmetric(&m).unwrap();
        let sum: f64 = s.values().iter().sum();
        let sq: f64 = s.values().iter().map(|x| x * x).sum();
        prop_assert!((sum - m.trace()).abs() < 1e-10 * n as f64);
        prop_assert!((sq.sqrt() - m.frobenius_norm()).abs() < 1e-10 * n as f64);
    }

    #[test]
    fn variance_is_shift_invariant(xs in prop::collection::vec(-1e3f64..1e3, 3..60), c in -1e3f64..1e3) {
        let a = estimate_mean_var(&xs).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let b = estimate_mean_var(&shifted).unwrap();
        prop_assert!((a.mean + c - b.mean).abs() < 1e-9 * (1.0 + c.abs()));
        prop_assert!((a.variance - b.variance).abs() <= 1e-7 * (1.0 + a.variance));
    }

    #[test]
    fn two_sample_ks_is_symmetric(a in prop::collection::vec(-5f64..5.0, 2..40),
                                  b in prop::collection::vec(-5f64..5.0, 2..40)) {
        let (d1, _) = ks_two_sample(&a, &b).unwrap();
        let (d2, _) = ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(d1, d2);
        prop_assert!((0.0..=1.0).contains(&d1));
    }

    #[test]
    fn spectra_are_pure_functions_of_the_stream(seed in any::<u64>(), trial in 0u64..1000) {
        let draw = || {
            let mut rng = SeedSequence::new(seed).named("spectrum/n=12", trial);
            EnsembleSpec::Goe.sample_spectrum(12, 0.2, &mut rng).unwrap().into_values()
        };
        prop_assert_eq!(draw(), draw());
    }
}
