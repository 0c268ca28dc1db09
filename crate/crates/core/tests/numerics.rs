//! Properties of the numerical core: LogSumExp, softmax cross-entropy and
//! the pooled encoder.

use nile::seed::rng;
use nile::textmodel::{
    f_encode, logsumexp, logsumexp_grad, softmax, softmax_cross_entropy, InitConfig, ScorerParams,
};
use proptest::prelude::*;

/// Independent reference: the textbook formula, fine for moderate inputs.
fn naive_lse(a: f64, b: f64) -> f64 {
    (a.exp() + b.exp()).ln()
}

#[test]
fn lse_fixed_points() {
    assert!((logsumexp(0.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(
        logsumexp(f64::NEG_INFINITY, f64::NEG_INFINITY),
        f64::NEG_INFINITY
    );
    assert_eq!(logsumexp(f64::NEG_INFINITY, 3.5), 3.5);
    // Large magnitudes stay finite where the naive formula overflows.
    assert!((logsumexp(1000.0, 1000.0) - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-9);
    assert!(naive_lse(1000.0, 1000.0).is_infinite());
}

#[test]
fn uniform_cross_entropy_is_ln3() {
    let (loss, grad) = softmax_cross_entropy(&[0.25, 0.25, 0.25], 1);
    assert!((loss - 3f64.ln()).abs() < 1e-12);
    let third = 1.0 / 3.0;
    assert!((grad[0] - third).abs() < 1e-15 && (grad[1] - (third - 1.0)).abs() < 1e-15);
}

proptest! {
    #[test]
    fn lse_matches_naive_formula(a in -30.0f64..30.0, b in -30.0f64..30.0) {
        prop_assert!((logsumexp(a, b) - naive_lse(a, b)).abs() < 1e-12);
    }

    #[test]
    fn lse_commutes(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        prop_assert_eq!(logsumexp(a, b), logsumexp(b, a));
    }

    #[test]
    fn lse_shift_invariance(a in -50.0f64..50.0, b in -50.0f64..50.0, c in -50.0f64..50.0) {
        prop_assert!((logsumexp(a + c, b + c) - (logsumexp(a, b) + c)).abs() < 1e-12);
    }

    #[test]
    fn lse_bounded_by_max(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        let m = a.max(b);
        let l = logsumexp(a, b);
        prop_assert!(l >= m && l <= m + std::f64::consts::LN_2 + 1e-12);
    }

    #[test]
    fn lse_monotone_in_each_argument(a in -100.0f64..100.0, b in -100.0f64..100.0, d in 1e-6f64..10.0) {
        prop_assert!(logsumexp(a + d, b) >= logsumexp(a, b));
        prop_assert!(logsumexp(a, b + d) >= logsumexp(a, b));
    }

    #[test]
    fn lse_gradient_is_softmax(a in -40.0f64..40.0, b in -40.0f64..40.0) {
        let (ga, gb) = logsumexp_grad(a, b);
        prop_assert!((ga + gb - 1.0).abs() < 1e-12);
        prop_assert!(ga >= 0.0 && gb >= 0.0);
        let s = softmax(&[a, b]);
        prop_assert!((ga - s[0]).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_properties(s in prop::collection::vec(-50.0f64..50.0, 2..6), gold_seed in 0usize..100) {
        let gold = gold_seed % s.len();
        let (loss, grad) = softmax_cross_entropy(&s, gold);
        prop_assert!(loss >= 0.0 && loss.is_finite());
        prop_assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(grad[gold] <= 0.0);
        // Reference: -log softmax[gold].
        let p = softmax(&s);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if p[gold] > 1e-300 {
            prop_assert!((loss + p[gold].ln()).abs() < 1e-9 * (1.0 + loss));
        }
    }

    #[test]
    fn encoder_output_is_bounded(ids in prop::collection::vec(10usize..40, 1..30), seed in 0u64..1000) {
        let p = ScorerParams::new(40, 6, &["h"], &InitConfig { embedding_scale: 3.0, projection_scale: 4.0, head_scale: 1.0 }, &mut rng(seed));
        let enc = f_encode(&p, &[&ids]).unwrap();
        prop_assert!(enc.h.iter().all(|x| x.abs() <= 1.0));
        prop_assert!(!enc.ids.contains(&0));
    }

    #[test]
    fn encoder_ignores_padding(ids in prop::collection::vec(10usize..40, 1..20), pads in 0usize..5) {
        let p = ScorerParams::new(40, 6, &["h"], &InitConfig::default(), &mut rng(1));
        let mut padded = ids.clone();
        padded.extend(std::iter::repeat_n(0, pads));
        prop_assert_eq!(f_encode(&p, &[&ids]).unwrap().h, f_encode(&p, &[&padded]).unwrap().h);
    }
}

#[test]
fn encoder_rejects_all_padding() {
    let p = ScorerParams::new(20, 4, &["h"], &InitConfig::default(), &mut rng(1));
    assert!(f_encode(&p, &[&[0, 0][..]]).is_err());
}
