use fracinit::kernels::{critical_sigma, Activation, MomentQuery};
use fracinit::lyapunov::log_stats;
use fracinit::simulate::{
    estimate_moment, noisy_linear_tail, run_ensemble, survival_slope, ForwardConfig, InputChoice,
    Sampler,
};
use fracinit::specfn::EvalBudget;
use fracinit::Error;
use proptest::prelude::*;

fn sigma_for(d: u64, s: f64, act: Activation) -> f64 {
    critical_sigma(&MomentQuery::new(d, s, act).unwrap()).unwrap().0
}

#[test]
fn deterministic_given_seed() {
    let cfg = ForwardConfig::new(8, 20, Activation::RELU, 0.5).trials(300).seed(9).checkpoints(vec![5, 20]);
    assert_eq!(run_ensemble(&cfg).unwrap(), run_ensemble(&cfg).unwrap());
    let other = run_ensemble(&cfg.clone().seed(10)).unwrap();
    assert_ne!(run_ensemble(&cfg).unwrap().checkpoints, other.checkpoints);
}

#[test]
fn input_direction_does_not_matter() {
    let d = 6;
    let act = Activation::prelu(0.2).unwrap();
    let sigma = sigma_for(d, 1.0, act);
    let base = ForwardConfig::new(d, 10, act, sigma).trials(20_000).seed(1);
    let dir = vec![0.3, -1.0, 0.0, 2.0, 0.5, -0.7];
    let runs = [
        base.clone().input(InputChoice::Basis1),
        base.clone().seed(2).input(InputChoice::RandomUnit),
        base.clone().seed(3).input(InputChoice::Vector(dir)),
    ];
    for cfg in runs {
        let (m, se) = estimate_moment(&run_ensemble(&cfg).unwrap(), 1.0, 10).unwrap();
        assert!((m - 1.0).abs() < 4.0 * se, "{:?}: {m} ± {se}", cfg.x0);
    }
}

#[test]
fn log_norm_drift_matches_lyapunov() {
    let d = 16;
    let sigma = sigma_for(d, 1.0, Activation::LINEAR);
    let k = 200;
    let cfg = ForwardConfig::new(d, k, Activation::LINEAR, sigma)
        .trials(4000)
        .seed(4)
        .sampler(Sampler::Projected);
    let stats = run_ensemble(&cfg).unwrap();
    let budget = EvalBudget::new(1e-13, 100_000).unwrap();
    let lyap = log_stats(sigma, d, Activation::LINEAR, &budget).unwrap();
    let cp = stats.checkpoint(k).unwrap();
    let n = cp.log_ratios.len() as f64;
    let mean = cp.log_ratios.iter().sum::<f64>() / n;
    let se = (lyap.s2 * k as f64 / n).sqrt();
    assert!(lyap.mu < 0.0);
    assert!((mean - lyap.mu * k as f64).abs() < 4.0 * se, "{mean} vs {}", lyap.mu * k as f64);
}

#[test]
fn tail_heavier_for_smaller_preserved_order() {
    let d = 16;
    let slope = |s: f64, seed| {
        let cfg = ForwardConfig::new(d, 1000, Activation::LINEAR, sigma_for(d, s, Activation::LINEAR))
            .trials(20_000)
            .seed(seed)
            .noise(1.0)
            .sampler(Sampler::Projected);
        survival_slope(&run_ensemble(&cfg).unwrap().checkpoint(1000).unwrap().log_ratios, 0.01)
    };
    let (light, heavy) = (slope(1.8, 5), slope(0.6, 6));
    assert!(light < heavy - 0.5, "{light} vs {heavy}");
    assert!((heavy + 0.6).abs() < 0.15, "{heavy}");
}

#[test]
fn scope_and_resource_errors() {
    let relu_noise = ForwardConfig::new(4, 3, Activation::RELU, 1.0).noise(1.0);
    assert!(matches!(run_ensemble(&relu_noise), Err(Error::Scope(_))));
    let quiet = ForwardConfig::new(4, 3, Activation::LINEAR, 1.0);
    assert!(matches!(noisy_linear_tail(&quiet, 1.0, 100, 1), Err(Error::Scope(_))));
    let huge = ForwardConfig::new(4096, 1000, Activation::RELU, 0.1).trials(100_000);
    assert!(matches!(run_ensemble(&huge), Err(Error::ResourceLimit { .. })));
    let few = ForwardConfig::new(4, 3, Activation::RELU, 1.0).trials(10);
    assert!(matches!(
        estimate_moment(&run_ensemble(&few).unwrap(), 1.0, 3),
        Err(Error::InsufficientSamples { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scale_equivariant(
        x in prop::collection::vec(-3.0f64..3.0, 5),
        c in 1e-3f64..1e3,
        a in 0.0f64..1.0,
        seed in 0u64..1000,
    ) {
        prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
        let act = Activation::prelu(a).unwrap();
        let cfg = |v: Vec<f64>| ForwardConfig::new(5, 8, act, 0.7).trials(20).seed(seed)
            .checkpoints(vec![1, 8]).input(InputChoice::Vector(v));
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let r1 = run_ensemble(&cfg(x)).unwrap();
        let r2 = run_ensemble(&cfg(scaled)).unwrap();
        prop_assert!((r2.ln_input_norm - r1.ln_input_norm - c.ln()).abs() < 1e-12);
        for (p, q) in r1.checkpoints.iter().zip(&r2.checkpoints) {
            prop_assert_eq!(p.zero_count, q.zero_count);
            for (u, v) in p.log_ratios.iter().zip(&q.log_ratios) {
                prop_assert!(u == v || (u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_counts_monotone(d in 1u64..6, seed in 0u64..1000) {
        let cfg = ForwardConfig::new(d, 12, Activation::RELU, 1.0).trials(200).seed(seed)
            .checkpoints(vec![1, 4, 12]);
        let r = run_ensemble(&cfg).unwrap();
        let z: Vec<usize> = r.checkpoints.iter().map(|c| c.zero_count).collect();
        prop_assert!(z.windows(2).all(|w| w[0] <= w[1]));
        for c in &r.checkpoints {
            prop_assert_eq!(c.zero_count, c.log_ratios.iter().filter(|v| v.is_infinite()).count());
        }
    }
}
