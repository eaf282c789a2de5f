use fracinit::kernels::{
    classify_regime, critical_sigma, kernel, solve_preserved_order, Activation, MomentQuery, Regime,
};
use fracinit::lyapunov::{
    as_limit, log_moments, log_stats, mixture_variance, relu_log_stats, zero_output_probability,
    LimitVerdict,
};
use fracinit::specfn::{digamma, EvalBudget};
use proptest::prelude::*;

fn budget() -> EvalBudget {
    EvalBudget::new(1e-13, 2_000_000).unwrap()
}

// Reference values computed with mpmath at 30 digits.
#[test]
fn log_moments_reference() {
    let m = log_moments(3, 8, 0.01, 1e-14, 2_000_000).unwrap();
    assert!((m.mean - 0.730_126_660_346_4).abs() < 1e-11, "{m:?}");
    assert!((m.var - 0.932_999_442_261_36).abs() < 1e-11, "{m:?}");
}

#[test]
fn linear_drift_closed_form() {
    for d in [1u64, 5, 100] {
        let st = log_stats(0.3, d, Activation::LINEAR, &budget()).unwrap();
        let want = 0.3f64.ln() + 0.5 * (2f64.ln() + digamma(d as f64 / 2.0).unwrap());
        assert!((st.mu - want).abs() < 1e-12);
        assert!(!st.conditional_on_nonzero);
    }
    assert!(relu_log_stats(1.0, 4).unwrap().conditional_on_nonzero);
}

#[test]
fn first_moment_threshold_is_almost_sure() {
    let sigma = critical_sigma(&MomentQuery::new(64, 1.0, Activation::LINEAR).unwrap()).unwrap().0;
    let v = as_limit(sigma, 64, Activation::LINEAR, 1.0, &budget()).unwrap();
    assert!(matches!(v, LimitVerdict::ZeroLimit { almost_sure: true, .. }), "{v:?}");
}

#[test]
fn zero_probability_exact() {
    let p = zero_output_probability(4, 3).unwrap();
    assert!((p - (1.0 - (15.0f64 / 16.0).powi(3))).abs() < 1e-15);
    assert_eq!(zero_output_probability(4, 0).unwrap(), 0.0);
}

#[test]
fn randomized_slope_has_no_closed_form() {
    let act = Activation::rleaky(0.125, 1.0 / 3.0).unwrap();
    assert!(log_stats(1.0, 8, act, &budget()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixture_variance_permutation_invariant(
        parts in prop::collection::vec((0.01f64..1.0, -5.0f64..5.0, 0.0f64..3.0), 1..8),
        rot in 0usize..8,
    ) {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let w: Vec<f64> = parts.iter().map(|p| p.0 / total).collect();
        let m: Vec<f64> = parts.iter().map(|p| p.1).collect();
        let v: Vec<f64> = parts.iter().map(|p| p.2).collect();
        let base = mixture_variance(&w, &m, &v).unwrap();
        let r = rot % w.len();
        let rot_vec = |x: &[f64]| { let mut y = x.to_vec(); y.rotate_left(r); y.reverse(); y };
        let moved = mixture_variance(&rot_vec(&w), &rot_vec(&m), &rot_vec(&v)).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12 * base.max(1.0));
        let raw: f64 = w.iter().zip(&m).zip(&v).map(|((w, m), v)| w * (v + m * m)).sum::<f64>()
            - w.iter().zip(&m).map(|(w, m)| w * m).sum::<f64>().powi(2);
        prop_assert!((base - raw).abs() <= 1e-10 * base.max(1.0));
    }

    #[test]
    fn drift_is_kernel_slope_at_origin(d in 2u64..60, a in 0.2f64..1.0, sigma in 0.05f64..2.0) {
        let act = Activation::prelu(a).unwrap();
        let mu = log_stats(sigma, d, act, &budget()).unwrap().mu;
        let h = 1e-4;
        let g = |s: f64| {
            let q = MomentQuery::new(d, s, act).unwrap().with_budget(budget());
            s * sigma.ln() + kernel(&q).unwrap().log_i
        };
        // one-sided, second order: g(0) = 0
        let fd = (4.0 * g(h) - g(2.0 * h)) / (2.0 * h);
        prop_assert!((fd - mu).abs() < 1e-5 * mu.abs().max(1.0), "fd {fd} mu {mu}");
    }

    #[test]
    fn threshold_equivalence(d in 2u64..60, s in 0.2f64..2.0, a in 0.1f64..1.0) {
        let act = Activation::prelu(a).unwrap();
        let q = MomentQuery::new(d, s, act).unwrap().with_budget(budget());
        let (sigma, _) = critical_sigma(&q).unwrap();
        prop_assert_eq!(classify_regime(sigma, &q).unwrap().regime, Regime::Preserving(s));
        prop_assert_eq!(classify_regime(sigma * (1.0 - 1e-4), &q).unwrap().regime, Regime::Contracting);
        prop_assert_eq!(classify_regime(sigma * (1.0 + 1e-4), &q).unwrap().regime, Regime::Exploding);
        let root = solve_preserved_order(sigma, d, act, 1.0, &budget()).unwrap().unwrap();
        prop_assert!((root - s).abs() < 1e-6, "root {root} s {s}");
        match as_limit(sigma, d, act, 1.0, &budget()).unwrap() {
            LimitVerdict::ZeroLimit { s_star: Some(r), almost_sure } => {
                prop_assert!((r - s).abs() < 1e-6);
                prop_assert_eq!(almost_sure, s >= 1.0 - 1e-9);
            }
            other => prop_assert!(false, "unexpected {other:?}"),
        }
    }

    #[test]
    fn drift_sign_decides_limit(d in 1u64..200, sigma in 0.01f64..1.0) {
        let mu = log_stats(sigma, d, Activation::LINEAR, &budget()).unwrap().mu;
        let v = as_limit(sigma, d, Activation::LINEAR, 1.0, &budget()).unwrap();
        if mu < -1e-9 {
            let is_zero = matches!(v, LimitVerdict::ZeroLimit { .. });
            prop_assert!(is_zero);
        } else if mu > 1e-9 {
            prop_assert_eq!(v, LimitVerdict::InfinityLimit);
        }
    }
}
