use gammalab::models::overlap::OverlapDistribution;
use gammalab::models::{
    chatterjee_ir_bound, rem_chatterjee_low_temp_bound, sk_chatterjee_ir_bound, sk_logn_bound, sk_variance_bound,
    ModelKind, ModelManifest, RemNormalization, SkInstance,
};
use gammalab::{BetaParam, RngStream};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn beta(v: f64) -> BetaParam {
    BetaParam::new(v).unwrap()
}

#[test]
fn bound_evaluators_are_bit_deterministic() {
    let a = (
        sk_variance_bound(14, beta(0.3)).unwrap(),
        sk_logn_bound(14, beta(2.0), 0.2).unwrap(),
        rem_chatterjee_low_temp_bound(9, beta(2.5)).unwrap(),
        sk_chatterjee_ir_bound(11, beta(0.7), 2, 0.4).unwrap(),
    );
    let b = (
        sk_variance_bound(14, beta(0.3)).unwrap(),
        sk_logn_bound(14, beta(2.0), 0.2).unwrap(),
        rem_chatterjee_low_temp_bound(9, beta(2.5)).unwrap(),
        sk_chatterjee_ir_bound(11, beta(0.7), 2, 0.4).unwrap(),
    );
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert_eq!(a.3.to_bits(), b.3.to_bits());
}

#[test]
fn capacity_is_enforced() {
    let err = SkInstance::sample(25, beta(1.0), &RngStream::from_seed(1)).unwrap_err();
    assert!(err.to_string().contains("24"), "{err}");
    let m = ModelManifest {
        model: ModelKind::Rem,
        n_sites: 30,
        beta: beta(1.0),
        seed: 0,
        normalization: Some(RemNormalization::Rem2nScaled),
    };
    assert!(m.instantiate(0).is_err());
}

#[test]
fn sk_free_energy_is_monotone_in_the_sandwich() {
    for seed in 0..8 {
        let inst = SkInstance::sample(9, beta(0.8), &RngStream::from_seed(seed)).unwrap();
        let s = inst.exact_sums();
        assert!(s.free_energy >= s.max_energy);
        assert!(s.free_energy <= s.max_energy + s.log_count / 0.8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn overlap_law_is_symmetric(n in 1usize..=64) {
        let d = OverlapDistribution::new(n).unwrap();
        let w = d.weights();
        for (a, b) in w.iter().zip(w.iter().rev()) {
            prop_assert_eq!(a.0, -b.0);
            prop_assert_eq!(a.1, b.1);
        }
        prop_assert_eq!(d.total_count(), 1u128 << n);
        // E[S²] = n.
        prop_assert!((d.expect(|s| (s * s) as f64) - n as f64).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn chatterjee_bound_is_monotone_in_beta_and_decays_in_t(
        n in 2usize..=20,
        b in 0.05f64..1.5,
        t in 0.0f64..3.0,
        r in 1u32..=3,
    ) {
        let lo = sk_chatterjee_ir_bound(n, beta(b), r, t).unwrap();
        let hi = sk_chatterjee_ir_bound(n, beta(b * 1.1), r, t).unwrap();
        let later = sk_chatterjee_ir_bound(n, beta(b), r, t + 0.5).unwrap();
        prop_assert!(hi >= lo);
        prop_assert!(later <= lo);
    }

    #[test]
    fn chatterjee_bound_is_linear_in_nu_scale(
        m in proptest::collection::vec(0.0f64..2.0, 9),
        nu in proptest::collection::vec(0.0f64..1.0, 3),
        c in 0.1f64..4.0,
    ) {
        let m = DMatrix::from_vec(3, 3, m);
        let scaled: Vec<f64> = nu.iter().map(|v| v * c).collect();
        let a = chatterjee_ir_bound(&m, &nu, beta(0.5), 1, 0.2).unwrap();
        let b = chatterjee_ir_bound(&m, &scaled, beta(0.5), 1, 0.2).unwrap();
        prop_assert!((b - c * c * a).abs() <= 1e-12 * b.abs().max(1e-300));
    }

    #[test]
    fn gray_code_tracks_naive(seed in any::<u64>(), n in 1usize..=10, b in 0.05f64..4.0) {
        let inst = SkInstance::sample(n, beta(b), &RngStream::from_seed(seed)).unwrap();
        let fast = inst.gibbs_free_energy();
        let slow = inst.free_energy_naive();
        prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0));
    }
}
