//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs with `cargo test -p fracinit-core --test acceptance`.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use fracinit::kernels::{
    asymptotic_sigma_sq, critical_sigma, kernel, solve_preserved_order, Activation, MomentQuery,
};
use fracinit::lyapunov::{log_moments, log_stats};
use fracinit::simulate::{
    dominance_check, empirical_zero_fraction, estimate_moment, ks_critical_1pct,
    log_norm_gaussian_test, noisy_linear_tail, run_ensemble, EnsembleStats, ForwardConfig,
    Sampler,
};
use fracinit::specfn::EvalBudget;

const SEED: u64 = 20_240_611;

fn budget() -> EvalBudget {
    EvalBudget::new(1e-12, 2_000_000).unwrap()
}

fn query(d: u64, s: f64, a: f64, q: f64) -> MomentQuery {
    MomentQuery::new(d, s, Activation::ParamRelu { a })
        .unwrap()
        .with_keep(q)
        .unwrap()
        .with_budget(budget())
}

fn sigma_bar(d: u64, s: f64, a: f64) -> f64 {
    critical_sigma(&query(d, s, a, 1.0)).unwrap().0
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// Depth-100 ensembles at d = 64, σ = σ̄_a(1, 64), shared by several criteria.
fn deep_run(a: f64) -> &'static EnsembleStats {
    static RUNS: [OnceLock<EnsembleStats>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = match a {
        0.0 => 0,
        0.01 => 1,
        _ => 2,
    };
    RUNS[slot].get_or_init(|| {
        let cfg = ForwardConfig::new(64, 100, Activation::ParamRelu { a }, sigma_bar(64, 1.0, a))
            .trials(10_000)
            .seed(SEED + slot as u64)
            .checkpoints(vec![10, 50, 100]);
        run_ensemble(&cfg).unwrap()
    })
}

fn c1_kaiming_lecun() -> Outcome {
    let worst = (1..=4096u64)
        .into_par_iter()
        .map(|d| {
            let df = d as f64;
            let relu = critical_sigma(&query(d, 2.0, 0.0, 1.0)).unwrap().1;
            let lin = critical_sigma(&query(d, 2.0, 1.0, 1.0)).unwrap().1;
            ((relu * df / 2.0 - 1.0).abs()).max((lin * df - 1.0).abs())
        })
        .reduce(|| 0.0, f64::max);
    outcome(worst <= 1e-12, format!("max rel err {worst:.2e} over d = 1..4096"))
}

fn c2_s_two() -> Outcome {
    let mut worst = 0.0f64;
    for a in [0.01, 0.2, 0.5, 0.9] {
        for d in [2u64, 8, 64] {
            let v = kernel(&query(d, 2.0 - 1e-9, a, 1.0)).unwrap();
            let closed = (1.0 + a * a) * d as f64 / 2.0;
            worst = worst.max((v.i / closed - 1.0).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max rel err {worst:.2e}"))
}

// Direct Monte Carlo of E‖φ_a(z⊙ε/q)‖^s for several s from one sample set.
fn oracle(a: f64, d: usize, q: f64, orders: &[f64], n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut sum = vec![0.0; orders.len()];
    let mut sum_sq = vec![0.0; orders.len()];
    for _ in 0..n {
        let mut sq = 0.0;
        for _ in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let kept = if q < 1.0 { rng.random::<f64>() < q } else { true };
            let y = if kept { z / q } else { 0.0 };
            let out = if y > 0.0 { y } else { a * y };
            sq += out * out;
        }
        for (i, s) in orders.iter().enumerate() {
            let v = sq.powf(s / 2.0);
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let nf = n as f64;
    sum.iter()
        .zip(&sum_sq)
        .map(|(s, ss)| {
            let mean = s / nf;
            let var = (ss / nf - mean * mean) * nf / (nf - 1.0);
            (mean, (var / nf).sqrt())
        })
        .collect()
}

fn c3_oracle() -> Outcome {
    let orders = [0.5, 1.0, 1.5];
    let mut cases = Vec::new();
    for (ai, a) in [0.0, 0.01, 0.5, 1.0].into_iter().enumerate() {
        for (di, d) in [4usize, 16, 64].into_iter().enumerate() {
            for (qi, q) in [1.0, 0.8].into_iter().enumerate() {
                cases.push((a, d, q, (ai * 100 + di * 10 + qi) as u64));
            }
        }
    }
    let results: Vec<(f64, String)> = cases
        .par_iter()
        .flat_map_iter(|&(a, d, q, tag)| {
            let mc = oracle(a, d, q, &orders, 1_000_000, SEED ^ (tag << 8));
            orders
                .iter()
                .zip(mc)
                .map(|(&s, (mean, se))| {
                    let k = kernel(&query(d as u64, s, a, q)).unwrap().i;
                    ((k - mean).abs() / se, format!("a={a} s={s} d={d} q={q}"))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (worst, at) = results
        .iter()
        .cloned()
        .fold((0.0, String::new()), |acc, r| if r.0 > acc.0 { r } else { acc });
    outcome(
        worst <= 4.0,
        format!("{} cases, worst deviation {worst:.2} SE at {at}", results.len()),
    )
}

fn c4_asymptotics() -> Outcome {
    let widths = [256u64, 512, 1024];
    let mut fails = Vec::new();
    let mut count = 0;
    for (label, a, q) in [
        ("relu", 0.0, 1.0),
        ("linear", 1.0, 1.0),
        ("relu+dropout", 0.0, 0.8),
        ("linear+dropout", 1.0, 0.8),
    ] {
        for s in [0.5, 1.0, 1.5] {
            let gaps: Vec<f64> = widths
                .iter()
                .map(|&d| {
                    let exact = critical_sigma(&query(d, s, a, q)).unwrap().1;
                    let approx = asymptotic_sigma_sq(s, d, a, q).unwrap();
                    (d * d) as f64 * (exact - approx).abs()
                })
                .collect();
            count += 1;
            if !gaps.windows(2).all(|w| w[1] < w[0]) {
                fails.push(format!("{label} s={s}: {gaps:?}"));
            }
        }
    }
    outcome(
        fails.is_empty(),
        if fails.is_empty() {
            format!("d²·gap decreasing in all {count} families")
        } else {
            fails.join("; ")
        },
    )
}

fn c5_preservation() -> Outcome {
    let mut worst = 0.0f64;
    let mut ok = true;
    for a in [0.0, 1.0, 0.01] {
        let st = deep_run(a);
        for k in [10, 50, 100] {
            let (est, se) = estimate_moment(st, 1.0, k).unwrap();
            let z = (est - 1.0).abs() / se;
            worst = worst.max(z);
            ok &= z <= 3.0;
        }
    }
    outcome(ok, format!("worst |ratio − 1| = {worst:.2} SE over 9 checkpoints"))
}

fn c6_regimes() -> Outcome {
    let sigma = sigma_bar(64, 1.0, 0.0);
    let run = |factor: f64, seed: u64| {
        let cfg = ForwardConfig::new(64, 100, Activation::RELU, factor * sigma)
            .trials(10_000)
            .seed(seed);
        estimate_moment(&run_ensemble(&cfg).unwrap(), 1.0, 100).unwrap().0
    };
    let low = run(0.95, SEED + 10);
    let high = run(1.05, SEED + 11);
    outcome(
        low < 0.1 && high > 10.0,
        format!("0.95σ̄ → {low:.4}, 1.05σ̄ → {high:.1}"),
    )
}

fn c7_lognormal() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for a in [0.0, 0.01, 1.0] {
        let act = Activation::ParamRelu { a };
        let predicted = log_stats(sigma_bar(64, 1.0, a), 64, act, &budget()).unwrap();
        let fit = log_norm_gaussian_test(deep_run(a), 100, &predicted).unwrap();
        let crit = ks_critical_1pct(fit.n);
        ok &= fit.ks_stat < crit;
        parts.push(format!("a={a} KS {:.4} (crit {crit:.4})", fit.ks_stat));
    }
    outcome(ok, parts.join(", "))
}

// 1 − (15/16)^k in exact integer arithmetic.
fn zero_law(k: u32) -> f64 {
    let den = 16u128.pow(k);
    (den - 15u128.pow(k)) as f64 / den as f64
}

fn c8_zero_law() -> Outcome {
    let cfg = |sigma: f64, seed: u64| {
        ForwardConfig::new(4, 10, Activation::RELU, sigma)
            .trials(100_000)
            .seed(seed)
            .checkpoints(vec![1, 5, 10])
    };
    let base = run_ensemble(&cfg(1.0, SEED + 20)).unwrap();
    let doubled = run_ensemble(&cfg(2.0, SEED + 21)).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [1u32, 5, 10] {
        let (f1, se1) = empirical_zero_fraction(&base, k as usize).unwrap();
        let (f2, se2) = empirical_zero_fraction(&doubled, k as usize).unwrap();
        let p = zero_law(k);
        ok &= (f1 - p).abs() <= 3.0 * se1;
        ok &= (f1 - f2).abs() <= 3.0 * (se1 * se1 + se2 * se2).sqrt();
        parts.push(format!("k={k}: {f1:.4}/{f2:.4} vs {p:.4}"));
    }
    outcome(ok, parts.join(", "))
}

fn c9_dominance() -> Outcome {
    let ours = deep_run(0.0);
    let cfg = ForwardConfig::new(64, 100, Activation::RELU, (2.0f64 / 64.0).sqrt())
        .trials(10_000)
        .seed(SEED + 30);
    let kaiming = run_ensemble(&cfg).unwrap();
    let dom = dominance_check(&ours.checkpoint(100).unwrap().cdf, &kaiming.checkpoint(100).unwrap().cdf)
        .unwrap();
    outcome(
        dom.dominant_fraction >= 0.99,
        format!(
            "dominant at {:.4} of {} grid points (band {:.4}, max violation {:.4})",
            dom.dominant_fraction, dom.points, dom.band, dom.max_violation
        ),
    )
}

fn c10_monotone() -> Outcome {
    let slopes = [0.0, 0.01, 0.2, 1.0];
    let orders = [0.5, 1.0, 1.5, 2.0];
    let widths: Vec<u64> = (1..=64).map(|i| 2 * i).collect();
    let table: Vec<Vec<Vec<f64>>> = slopes
        .iter()
        .map(|&a| {
            orders
                .iter()
                .map(|&s| widths.par_iter().map(|&d| sigma_bar(d, s, a)).collect())
                .collect()
        })
        .collect();
    let mut violations = 0;
    for ai in 0..slopes.len() {
        for si in 0..orders.len() {
            for di in 0..widths.len() {
                let v = table[ai][si][di];
                if di + 1 < widths.len() && table[ai][si][di + 1] >= v {
                    violations += 1;
                }
                if si + 1 < orders.len() && table[ai][si + 1][di] >= v {
                    violations += 1;
                }
                if ai + 1 < slopes.len() && table[ai + 1][si][di] >= v {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations on a {}×{}×{} grid", slopes.len(), orders.len(), widths.len()),
    )
}

fn c11_lyapunov() -> Outcome {
    let pairs: Vec<(f64, u64, u64)> = [0.01, 0.2, 0.9]
        .into_iter()
        .flat_map(|a| (1..=64u64).flat_map(move |d| (1..=d).map(move |n| (a, n, d))))
        .collect();
    let worst_norm = pairs
        .par_iter()
        .map(|&(a, n, d)| (log_moments(n, d, a, 1e-11, 5_000_000).unwrap().normalization - 1.0).abs())
        .reduce(|| 0.0, f64::max);

    let mut worst_mu = f64::NEG_INFINITY;
    for a in [0.0, 0.01, 0.2, 0.9, 1.0] {
        for s in [0.5, 1.0, 1.5, 2.0] {
            for d in [4u64, 16, 64] {
                let mu = log_stats(sigma_bar(d, s, a), d, Activation::ParamRelu { a }, &budget()).unwrap().mu;
                worst_mu = worst_mu.max(mu);
            }
        }
    }

    let mut flips = true;
    for a in [0.01, 0.2, 0.9, 1.0] {
        for d in [4u64, 16, 64] {
            let act = Activation::ParamRelu { a };
            let root = (-log_stats(1.0, d, act, &budget()).unwrap().mu).exp();
            let below = root * (1.0 - 1e-3);
            let above = root * (1.0 + 1e-3);
            let mu_below = log_stats(below, d, act, &budget()).unwrap().mu;
            let mu_above = log_stats(above, d, act, &budget()).unwrap().mu;
            let s_below = solve_preserved_order(below, d, act, 1.0, &budget()).unwrap();
            let s_above = solve_preserved_order(above, d, act, 1.0, &budget()).unwrap();
            flips &= mu_below < 0.0 && mu_above > 0.0 && s_below.is_some() && s_above.is_none();
        }
    }
    outcome(
        worst_norm <= 1e-9 && worst_mu < 0.0 && flips,
        format!("max |Σ wB − 1| {worst_norm:.1e}, max μ(σ̄) {worst_mu:.2e}, sign flips {flips}"),
    )
}

fn c12_heavy_tail() -> Outcome {
    let sigma = sigma_bar(16, 1.0, 1.0);
    let cfg = ForwardConfig::new(16, 400, Activation::LINEAR, sigma)
        .noise(1.0)
        .seed(SEED + 40)
        .sampler(Sampler::Projected);
    let r = noisy_linear_tail(&cfg, 1.0, 10_000, 4).unwrap();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    outcome(
        r.stable && r.increasing,
        format!(
            "order 0.5 [{}] spread {:.3}; order 1.5 [{}]",
            fmt(&r.low_moments),
            r.low_spread,
            fmt(&r.high_moments)
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let criteria: [Criterion; 12] = [
        ("Kaiming/Lecun recovery", Duration::from_secs(1), c1_kaiming_lecun),
        ("closed-form s=2 kernel", Duration::from_secs(10), c2_s_two),
        ("kernel vs Monte Carlo oracle", Duration::from_secs(300), c3_oracle),
        ("large-width asymptotics", Duration::from_secs(30), c4_asymptotics),
        ("moment preservation in simulation", Duration::from_secs(180), c5_preservation),
        ("regime separation", Duration::from_secs(120), c6_regimes),
        ("log-normality", Duration::from_secs(180), c7_lognormal),
        ("zero-output law", Duration::from_secs(60), c8_zero_law),
        ("stochastic dominance", Duration::from_secs(120), c9_dominance),
        ("monotonicity of sigma", Duration::from_secs(60), c10_monotone),
        ("Lyapunov identities", Duration::from_secs(60), c11_lyapunov),
        ("heavy-tail property", Duration::from_secs(120), c12_heavy_tail),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let pass = out.pass && took <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.1} s, limit {} s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
