//! Self-checks that confront closed forms, series and simulations, reported
//! as flat rows (name, predicted, observed, tolerance, pass).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    asymptotic_sigma_sq, critical_sigma, dropout_prelu_kernel, dropout_relu_kernel, kernel,
    linear_kernel, moment_trajectory, prelu_kernel, relu_kernel, solve_preserved_order,
    Activation, MomentQuery,
};
use crate::lyapunov::{
    as_limit, log_moments, log_stats, relu_log_stats, zero_output_probability, LimitVerdict,
};
use crate::simulate::{
    dominance_check, empirical_zero_fraction, estimate_moment, ks_critical_1pct,
    log_norm_gaussian_test, mean_and_se, noisy_linear_tail, run_ensemble, ForwardConfig, Sampler,
};
use crate::specfn::{digamma, trigamma, EvalBudget, EULER_GAMMA};

/// One verification outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub predicted: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    /// |observed − predicted| ≤ tol·|predicted|.
    pub fn relative(name: impl Into<String>, predicted: f64, observed: f64, tol: f64) -> Self {
        let pass = (observed - predicted).abs() <= tol * predicted.abs();
        Self::raw(name, predicted, observed, tol, pass)
    }

    /// |observed − predicted| ≤ tol.
    pub fn absolute(name: impl Into<String>, predicted: f64, observed: f64, tol: f64) -> Self {
        let pass = (observed - predicted).abs() <= tol;
        Self::raw(name, predicted, observed, tol, pass)
    }

    /// observed < bound.
    pub fn below(name: impl Into<String>, bound: f64, observed: f64) -> Self {
        Self::raw(name, bound, observed, 0.0, observed < bound)
    }

    /// observed > bound.
    pub fn above(name: impl Into<String>, bound: f64, observed: f64) -> Self {
        Self::raw(name, bound, observed, 0.0, observed > bound)
    }

    /// observed ≥ bound.
    pub fn at_least(name: impl Into<String>, bound: f64, observed: f64) -> Self {
        Self::raw(name, bound, observed, 0.0, observed >= bound)
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self::raw(name, 1.0, if pass { 1.0 } else { 0.0 }, 0.0, pass)
    }

    fn raw(name: impl Into<String>, predicted: f64, observed: f64, tolerance: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            predicted,
            observed,
            tolerance,
            pass: pass && observed.is_finite() == predicted.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Kernels,
    Lyapunov,
    Simulate,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernels" => Ok(Suite::Kernels),
            "lyapunov" => Ok(Suite::Lyapunov),
            "simulate" => Ok(Suite::Simulate),
            "all" => Ok(Suite::All),
            other => Err(Error::Domain(format!("unknown suite '{other}'"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Suite::Kernels => "kernels",
            Suite::Lyapunov => "lyapunov",
            Suite::Simulate => "simulate",
            Suite::All => "all",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Trials per Monte Carlo ensemble.
    pub trials: usize,
    pub seed: u64,
    pub max_cells: u128,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 7,
            max_cells: crate::simulate::DEFAULT_MAX_CELLS,
        }
    }
}

/// Series budget used by the suites; small slopes need long series.
pub fn suite_budget() -> EvalBudget {
    EvalBudget::new(1e-12, 2_000_000).expect("valid budget")
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    match suite {
        Suite::Kernels => kernel_checks(),
        Suite::Lyapunov => lyapunov_checks(),
        Suite::Simulate => simulate_checks(opts),
        Suite::All => {
            let mut rows = kernel_checks()?;
            rows.extend(lyapunov_checks()?);
            rows.extend(simulate_checks(opts)?);
            Ok(rows)
        }
    }
}

fn query(d: u64, s: f64, act: Activation, q: f64) -> Result<MomentQuery> {
    Ok(MomentQuery::new(d, s, act)?.with_keep(q)?.with_budget(suite_budget()))
}

fn sigma_bar(d: u64, s: f64, act: Activation, q: f64) -> Result<f64> {
    Ok(critical_sigma(&query(d, s, act, q)?)?.0)
}

/// Slope grid shared by the monotonicity checks.
pub const MONOTONE_SLOPES: [f64; 4] = [0.0, 0.01, 0.2, 1.0];
pub const MONOTONE_ORDERS: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

/// σ̄_a(s,d) on the grid MONOTONE_SLOPES × MONOTONE_ORDERS × {2,4,…,128},
/// indexed [a][s][d/2 − 1].
pub fn monotone_table() -> Result<Vec<Vec<Vec<f64>>>> {
    let widths: Vec<u64> = (1..=64).map(|i| 2 * i).collect();
    MONOTONE_SLOPES
        .iter()
        .map(|&a| {
            MONOTONE_ORDERS
                .iter()
                .map(|&s| {
                    widths
                        .par_iter()
                        .map(|&d| sigma_bar(d, s, Activation::ParamRelu { a }, 1.0))
                        .collect::<Result<Vec<_>>>()
                })
                .collect()
        })
        .collect()
}

/// Worst successor ratios σ̄(next)/σ̄(prev) along d, s and a; all must be < 1.
pub fn monotone_ratios(table: &[Vec<Vec<f64>>]) -> (f64, f64, f64) {
    let mut in_d = 0.0f64;
    let mut in_s = 0.0f64;
    let mut in_a = 0.0f64;
    for (ai, by_s) in table.iter().enumerate() {
        for (si, by_d) in by_s.iter().enumerate() {
            for (di, v) in by_d.iter().enumerate() {
                if di + 1 < by_d.len() {
                    in_d = in_d.max(by_d[di + 1] / v);
                }
                if si + 1 < by_s.len() {
                    in_s = in_s.max(by_s[si + 1][di] / v);
                }
                if ai + 1 < table.len() {
                    in_a = in_a.max(table[ai + 1][si][di] / v);
                }
            }
        }
    }
    (in_d, in_s, in_a)
}

/// d²·|σ̄²_exact − σ̄²_asymptotic| for each width.
pub fn scaled_asymptotic_gaps(s: f64, a: f64, q: f64, widths: &[u64]) -> Result<Vec<f64>> {
    widths
        .iter()
        .map(|&d| {
            let (_, exact) = critical_sigma(&query(d, s, Activation::ParamRelu { a }, q)?)?;
            let approx = asymptotic_sigma_sq(s, d, a, q)?;
            Ok((d * d) as f64 * (exact - approx).abs())
        })
        .collect()
}

fn kernel_checks() -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();

    for d in [1u64, 2, 3, 7, 64, 100, 1000, 4096] {
        let (_, relu) = critical_sigma(&query(d, 2.0, Activation::RELU, 1.0)?)?;
        rows.push(CheckRow::relative(format!("kaiming d={d}"), 2.0 / d as f64, relu, 1e-12));
        let (_, lin) = critical_sigma(&query(d, 2.0, Activation::LINEAR, 1.0)?)?;
        rows.push(CheckRow::relative(format!("lecun d={d}"), 1.0 / d as f64, lin, 1e-12));
    }

    let near_two = 2.0 - 1e-9;
    for a in [0.01, 0.2, 0.5, 0.9] {
        for d in [2u64, 8, 64] {
            let v = kernel(&query(d, near_two, Activation::ParamRelu { a }, 1.0)?)?;
            let closed = (1.0 + a * a) * d as f64 / 2.0;
            rows.push(CheckRow::relative(format!("s->2 series a={a} d={d}"), closed, v.i, 1e-6));
        }
    }

    let closed: [(&str, MomentQuery, f64); 6] = [
        ("relu s=2 d=64", query(64, 2.0, Activation::RELU, 1.0)?, 32.0),
        ("relu s=2 d=1", query(1, 2.0, Activation::RELU, 1.0)?, 0.5),
        ("prelu a=0.5 s=2 d=8", query(8, 2.0, Activation::ParamRelu { a: 0.5 }, 1.0)?, 5.0),
        ("dropout relu q=0.5 s=2 d=16", query(16, 2.0, Activation::RELU, 0.5)?, 16.0),
        ("dropout linear q=0.5 s=2 d=10", query(10, 2.0, Activation::LINEAR, 0.5)?, 20.0),
        ("linear s=2 d=100", query(100, 2.0, Activation::LINEAR, 1.0)?, 100.0),
    ];
    for (name, q, expect) in closed {
        rows.push(CheckRow::relative(name, expect, kernel(&q)?.i, 1e-12));
    }
    rows.push(CheckRow::relative("linear s=2 d=1", 1.0, linear_kernel(2.0, 1)?.i, 1e-12));

    for (s, d) in [(1.5, 32u64), (0.7, 5)] {
        let base = query(d, s, Activation::RELU, 1.0)?;
        rows.push(CheckRow::flag(
            format!("dropout relu q=1 identical s={s} d={d}"),
            dropout_relu_kernel(&base)? == relu_kernel(&base)?,
        ));
        let p = query(d, s, Activation::ParamRelu { a: 0.3 }, 1.0)?;
        rows.push(CheckRow::flag(
            format!("dropout prelu q=1 identical s={s} d={d}"),
            dropout_prelu_kernel(&p)? == prelu_kernel(&p)?,
        ));
    }

    let table = monotone_table()?;
    let (in_d, in_s, in_a) = monotone_ratios(&table);
    rows.push(CheckRow::below("sigma decreasing in d", 1.0, in_d));
    rows.push(CheckRow::below("sigma decreasing in s", 1.0, in_s));
    rows.push(CheckRow::below("sigma decreasing in a", 1.0, in_a));

    let widths = [256u64, 512, 1024];
    for (label, a, q) in [
        ("relu", 0.0, 1.0),
        ("linear", 1.0, 1.0),
        ("relu q=0.8", 0.0, 0.8),
        ("linear q=0.8", 1.0, 0.8),
        ("leaky", 0.01, 1.0),
    ] {
        for s in [0.5, 1.0, 1.5] {
            let gaps = scaled_asymptotic_gaps(s, a, q, &widths)?;
            let worst = gaps.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            rows.push(CheckRow::below(format!("asymptotic gap shrinks {label} s={s}"), 1.0, worst));
        }
    }

    let s_grid: Vec<f64> = (1..=16).map(|i| 0.25 * i as f64).collect();
    for (a, d) in [(0.0, 8u64), (0.2, 16), (1.0, 4)] {
        let act = Activation::ParamRelu { a };
        let sigma = sigma_bar(d, 1.0, act, 1.0)?;
        let ln_k = s_grid
            .iter()
            .map(|&s| Ok(s * sigma.ln() + kernel(&query(d, s, act, 1.0)?)?.log_i))
            .collect::<Result<Vec<f64>>>()?;
        let worst = ln_k
            .windows(3)
            .map(|w| w[0] - 2.0 * w[1] + w[2])
            .fold(f64::INFINITY, f64::min);
        rows.push(CheckRow::above(format!("log-convex kappa a={a} d={d}"), -1e-12, worst));
    }

    for s in [0.8, 1.0, 1.5] {
        let sigma = sigma_bar(64, s, Activation::RELU, 1.0)?;
        let got = solve_preserved_order(sigma, 64, Activation::RELU, 1.0, &suite_budget())?
            .unwrap_or(f64::NAN);
        rows.push(CheckRow::absolute(format!("preserved order round trip s={s}"), s, got, 1e-6));
    }
    let kaiming = (2.0f64 / 64.0).sqrt();
    let got = solve_preserved_order(kaiming, 64, Activation::RELU, 1.0, &suite_budget())?
        .unwrap_or(f64::NAN);
    rows.push(CheckRow::absolute("preserved order kaiming", 2.0, got, 1e-6));

    let traj = moment_trajectory(&[4, 8, 16], 2.0, (0.125f64).sqrt(), Activation::LINEAR, 1.0, &suite_budget())?;
    rows.push(CheckRow::relative("variable width product", 1.0, traj[2], 1e-12));
    Ok(rows)
}

/// Largest |Σ_k w_{k,n}B(k+1,d/2) − 1| over 1 ≤ n ≤ d ≤ `max_d`.
pub fn worst_normalization(a: f64, max_d: u64) -> Result<f64> {
    let pairs: Vec<(u64, u64)> = (1..=max_d).flat_map(|d| (1..=d).map(move |n| (n, d))).collect();
    let errs = pairs
        .par_iter()
        .map(|&(n, d)| Ok((log_moments(n, d, a, 1e-11, 5_000_000)?.normalization - 1.0).abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// μ at (1 − rel)·σ₀ and (1 + rel)·σ₀, where σ₀ is the drift root.
pub fn drift_window(d: u64, act: Activation, rel: f64) -> Result<(f64, f64, f64)> {
    let budget = suite_budget();
    let mu1 = log_stats(1.0, d, act, &budget)?.mu;
    let root = (-mu1).exp();
    let below = log_stats(root * (1.0 - rel), d, act, &budget)?.mu;
    let above = log_stats(root * (1.0 + rel), d, act, &budget)?.mu;
    Ok((root, below, above))
}

fn lyapunov_checks() -> Result<Vec<CheckRow>> {
    let budget = suite_budget();
    let mut rows = Vec::new();

    for a in [0.01, 0.2, 0.9] {
        rows.push(CheckRow::below(format!("weight normalization a={a}"), 1e-9, worst_normalization(a, 64)?));
    }

    let st = relu_log_stats(1.0, 1)?;
    rows.push(CheckRow::absolute(
        "relu d=1 drift",
        -0.5 * (EULER_GAMMA + std::f64::consts::LN_2),
        st.mu,
        1e-13,
    ));
    rows.push(CheckRow::relative("relu d=1 variance", std::f64::consts::PI.powi(2) / 8.0, st.s2, 1e-12));

    for d in [1u64, 9, 64] {
        let lm = log_moments(3.min(d), d, 1.0, 1e-12, 10)?;
        let c = d as f64 / 2.0;
        rows.push(CheckRow::absolute(
            format!("m_n linear d={d}"),
            std::f64::consts::LN_2 + digamma(c)?,
            lm.mean,
            1e-13,
        ));
        rows.push(CheckRow::absolute(format!("v_n linear d={d}"), trigamma(c)?, lm.var, 1e-13));
    }

    let mut worst_mu = f64::NEG_INFINITY;
    for a in MONOTONE_SLOPES {
        let act = Activation::ParamRelu { a };
        for s in [0.5, 1.0, 1.5, 2.0] {
            for d in [4u64, 16, 64] {
                let sigma = sigma_bar(d, s, act, 1.0)?;
                worst_mu = worst_mu.max(log_stats(sigma, d, act, &budget)?.mu);
            }
        }
    }
    rows.push(CheckRow::below("drift negative at preserving sigma", 0.0, worst_mu));

    for (a, d) in [(0.01, 64u64), (0.2, 16), (1.0, 64), (1.0, 8)] {
        let act = Activation::ParamRelu { a };
        let (root, below, above) = drift_window(d, act, 1e-3)?;
        rows.push(CheckRow::below(format!("drift below root a={a} d={d}"), 0.0, below));
        rows.push(CheckRow::above(format!("drift above root a={a} d={d}"), 0.0, above));
        let lo = solve_preserved_order(root * (1.0 - 1e-3), d, act, 1.0, &budget)?;
        let hi = solve_preserved_order(root * (1.0 + 1e-3), d, act, 1.0, &budget)?;
        rows.push(CheckRow::flag(
            format!("preserved order exists iff drift negative a={a} d={d}"),
            lo.is_some() && hi.is_none(),
        ));
    }

    let h = 1e-5;
    for (a, d, s) in [(0.01, 64u64, 1.0), (0.5, 16, 1.5), (1.0, 32, 0.5)] {
        let act = Activation::ParamRelu { a };
        let sigma = sigma_bar(d, s, act, 1.0)?;
        let mu = log_stats(sigma, d, act, &budget)?.mu;
        let kappa = (h * sigma.ln() + kernel(&query(d, h, act, 1.0)?)?.log_i).exp();
        rows.push(CheckRow::relative(format!("drift is kappa slope a={a} d={d}"), mu, (kappa - 1.0) / h, 1e-3));
    }

    rows.push(CheckRow::absolute("zero output d=1 k=1", 0.5, zero_output_probability(1, 1)?, 1e-15));
    rows.push(CheckRow::relative(
        "zero output d=4 k=10",
        1.0 - (15.0f64 / 16.0).powi(10),
        zero_output_probability(4, 10)?,
        1e-14,
    ));

    rows.push(CheckRow::flag(
        "relu limit is zero",
        as_limit(1.0, 4, Activation::RELU, 1.0, &budget)? == LimitVerdict::ZeroAlmostSure,
    ));
    let lecun = as_limit(0.1, 100, Activation::LINEAR, 1.0, &budget)?;
    let s_star = match lecun {
        LimitVerdict::ZeroLimit { s_star, .. } => s_star.unwrap_or(f64::NAN),
        _ => f64::NAN,
    };
    rows.push(CheckRow::absolute("lecun limit preserved order", 2.0, s_star, 1e-6));
    rows.push(CheckRow::flag(
        "wide linear limit is infinite",
        as_limit(0.25, 64, Activation::LINEAR, 1.0, &budget)? == LimitVerdict::InfinityLimit,
    ));
    Ok(rows)
}

fn simulate_checks(opts: &VerifyOptions) -> Result<Vec<CheckRow>> {
    if opts.trials < 100 {
        return Err(Error::InsufficientSamples {
            needed: 100,
            got: opts.trials,
        });
    }
    let budget = suite_budget();
    let mut rows = Vec::new();
    let base = |d: u64, layers: usize, act: Activation, sigma: f64| {
        ForwardConfig::new(d, layers, act, sigma)
            .trials(opts.trials)
            .seed(opts.seed)
            .max_cells(opts.max_cells)
    };

    let one = run_ensemble(&base(1, 1, Activation::LINEAR, 1.0).trials(10 * opts.trials))?;
    let (m, se) = mean_and_se(&one.checkpoints[0].log_ratios);
    let expect = 0.5 * (std::f64::consts::LN_2 + digamma(0.5)?);
    rows.push(CheckRow::absolute("d=1 log|N(0,1)| mean", expect, m, 3.0 * se));

    let d = 64;
    let cps = vec![10, 50, 100];
    let mut relu_s1 = None;
    for act in [Activation::RELU, Activation::LINEAR, Activation::LEAKY] {
        let sigma = sigma_bar(d, 1.0, act, 1.0)?;
        let st = run_ensemble(&base(d, 100, act, sigma).checkpoints(cps.clone()))?;
        for &k in &cps {
            let (est, se) = estimate_moment(&st, 1.0, k)?;
            rows.push(CheckRow::absolute(format!("first moment preserved {act} k={k}"), 1.0, est, 3.0 * se));
        }
        let predicted = log_stats(sigma, d, act, &budget)?;
        let fit = log_norm_gaussian_test(&st, 100, &predicted)?;
        rows.push(CheckRow::below(format!("log-norm KS {act} k=100"), ks_critical_1pct(fit.n), fit.ks_stat));
        rows.push(CheckRow::absolute(
            format!("log-norm mean z {act} k=100"),
            0.0,
            fit.mean_z,
            3.0 / (fit.n as f64).sqrt(),
        ));
        if act.is_relu() {
            relu_s1 = Some(st);
        }
    }

    let relu_sigma = sigma_bar(d, 1.0, Activation::RELU, 1.0)?;
    for (factor, label) in [(0.95, "contracting"), (1.05, "exploding")] {
        let st = run_ensemble(&base(d, 100, Activation::RELU, factor * relu_sigma).seed(opts.seed + 1))?;
        let (est, se) = estimate_moment(&st, 1.0, 100)?;
        let predicted = factor.powi(100);
        rows.push(CheckRow::absolute(format!("{label} moment matches trajectory"), predicted, est, 3.0 * se));
        if factor < 1.0 {
            rows.push(CheckRow::below("contracting moment below 0.1", 0.1, est));
        } else {
            rows.push(CheckRow::above("exploding moment above 10", 10.0, est));
        }
    }

    let zero_cfg = base(4, 10, Activation::RELU, 1.0).trials(10 * opts.trials).checkpoints(vec![1, 5, 10]);
    let at_one = run_ensemble(&zero_cfg)?;
    let at_two = run_ensemble(&ForwardConfig { sigma: 2.0, seed: opts.seed + 2, ..zero_cfg })?;
    for k in [1usize, 5, 10] {
        let (f1, se1) = empirical_zero_fraction(&at_one, k)?;
        let (f2, se2) = empirical_zero_fraction(&at_two, k)?;
        let p = zero_output_probability(4, k as u64)?;
        rows.push(CheckRow::absolute(format!("zero fraction d=4 k={k}"), p, f1, 3.0 * se1));
        rows.push(CheckRow::absolute(
            format!("zero fraction sigma-free d=4 k={k}"),
            f1,
            f2,
            3.0 * (se1 * se1 + se2 * se2).sqrt(),
        ));
    }

    let ours = relu_s1.expect("relu ensemble ran");
    let kaiming = run_ensemble(&base(d, 100, Activation::RELU, (2.0f64 / 64.0).sqrt()).seed(opts.seed + 3))?;
    let dom = dominance_check(&ours.checkpoint(100)?.cdf, &kaiming.checkpoint(100)?.cdf)?;
    rows.push(CheckRow::at_least("s=1 init dominates kaiming", 0.99, dom.dominant_fraction));

    let tail_sigma = sigma_bar(16, 1.0, Activation::LINEAR, 1.0)?;
    let tail_cfg = base(16, 400, Activation::LINEAR, tail_sigma)
        .noise(1.0)
        .sampler(Sampler::Projected);
    let report = noisy_linear_tail(&tail_cfg, 1.0, 10_000, 4)?;
    rows.push(CheckRow::below("noisy linear order-0.5 moment spread", 0.1, report.low_spread));
    rows.push(CheckRow::flag("noisy linear order-1.5 moment increasing", report.increasing));
    Ok(rows)
}
