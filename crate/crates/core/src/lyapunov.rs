//! Lyapunov drift μ and CLT variance s² of log‖x^(k)‖ per layer, the
//! digamma/trigamma series behind them, almost-sure limit verdicts and the
//! probability that a ReLU network outputs exactly zero.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::series::{SlopeLaw, SlopeMoments, ZeroOrderWeights};
use crate::kernels::{solve_preserved_order, Activation};
use crate::specfn::{binomial_log_pmf_vec, digamma, trigamma, EvalBudget, EULER_GAMMA};

/// Drift below which the limit is reported as critical.
pub const CRITICAL_DRIFT: f64 = 1e-10;

// s* comes from a root solve on a kernel accurate to ~1e-12.
const ORDER_TOL: f64 = 1e-9;

/// Per-layer drift and variance of the log-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormStats {
    /// Per-layer drift of log‖x^(k)‖ (nats/layer).
    pub mu: f64,
    /// Per-layer CLT variance (nats²/layer).
    pub s2: f64,
    /// True when the statistics condition on a nonzero output (ReLU).
    pub conditional_on_nonzero: bool,
}

/// Σ p_i v_i + Σ p_i m_i² − (Σ p_i m_i)², evaluated in centred form.
pub fn mixture_variance(weights: &[f64], means: &[f64], vars: &[f64]) -> Result<f64> {
    if weights.len() != means.len() || weights.len() != vars.len() {
        return domain("mixture_variance needs equal-length inputs");
    }
    if weights.is_empty() {
        return domain("mixture_variance needs at least one component");
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return domain("mixture weights must be finite and nonnegative");
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return domain(format!("mixture weights must sum to 1, got {total}"));
    }
    let mean: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
    let spread: f64 = weights
        .iter()
        .zip(means)
        .zip(vars)
        .map(|((w, m), v)| w * (v + (m - mean) * (m - mean)))
        .sum();
    Ok(spread.max(0.0))
}

/// Drift and variance for ReLU, conditional on a nonzero output:
/// μ_0 = ln σ + ½Σ_{n≥1} π_d(n)[ln 2 + ψ₀(n/2)] with π_d(n) = C(d,n)/(2^d−1).
pub fn relu_log_stats(sigma: f64, d: u64) -> Result<LogNormStats> {
    check_sigma(sigma)?;
    if d == 0 {
        return domain("width d must be at least 1");
    }
    let lp = binomial_log_pmf_vec(d, 0.5)?;
    // ln(2^d − 1) − d ln 2 = ln(1 − 2^{−d}).
    let norm = (-(-(d as f64) * LN_2).exp()).ln_1p();
    let mut weights = Vec::with_capacity(d as usize);
    let mut means = Vec::with_capacity(d as usize);
    let mut vars = Vec::with_capacity(d as usize);
    for (n, w) in lp.iter().enumerate().skip(1) {
        let half = n as f64 / 2.0;
        weights.push((w - norm).exp());
        means.push(LN_2 + digamma(half)?);
        vars.push(trigamma(half)?);
    }
    renormalize(&mut weights);
    let drift: f64 = weights.iter().zip(&means).map(|(w, m)| w * m).sum();
    Ok(LogNormStats {
        mu: sigma.ln() + 0.5 * drift,
        s2: 0.25 * mixture_variance(&weights, &means, &vars)?,
        conditional_on_nonzero: true,
    })
}

fn renormalize(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        domain(format!("sigma must be positive and finite, got {sigma}"))
    }
}

fn check_slope(a: f64) -> Result<()> {
    if a > 0.0 && a <= 1.0 {
        Ok(())
    } else {
        domain(format!("slope must lie in (0,1], got {a}"))
    }
}

/// E[ln X_n] and Var[ln X_n] for X_n = χ²(n) + a²χ²(d−n), plus the weight
/// normalization Σ_k w_{k,n}B(k+1,d/2) as computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMoments {
    pub mean: f64,
    pub var: f64,
    pub normalization: f64,
    pub terms: usize,
}

/// m_n, v_n and Σ w B for one orthant count n, truncated when the certified
/// error on both is below `abs_tol`.
pub fn log_moments(n: u64, d: u64, a: f64, abs_tol: f64, max_terms: usize) -> Result<LogMoments> {
    check_slope(a)?;
    if d == 0 || n > d {
        return domain(format!("need 0 <= n <= d and d >= 1, got n={n}, d={d}"));
    }
    let c = d as f64 / 2.0;
    let (psi0, psi1) = (digamma(c)?, trigamma(c)?);
    if a == 1.0 || n == 0 {
        let shift = if n == 0 && a < 1.0 { 2.0 * a.ln() } else { 0.0 };
        return Ok(LogMoments {
            mean: shift + LN_2 + psi0,
            var: psi1,
            normalization: 1.0,
            terms: 1,
        });
    }
    let mut law = SlopeMoments::new(SlopeLaw::Point(a));
    let mut weights = ZeroOrderWeights::new(n, d - n, &mut law)?;
    let x = weights.x_max();
    let s0 = x / (1.0 - x);
    let s1 = x / ((1.0 - x) * (1.0 - x));
    let s2 = x * (1.0 + x) / ((1.0 - x) * (1.0 - x) * (1.0 - x));

    // Running harmonic sums H_k = Σ_{j≤k} 1/j and H⁽²⁾_k = Σ_{j≤k} 1/j²,
    // giving ψ₀(k+1) = H_k − γ and ψ₁(k+1) − ψ₁(1) = −H⁽²⁾_k.
    let (mut h1, mut h2) = (0.0f64, 0.0f64);
    let (mut mass, mut sum_b, mut sum_h2) = (0.0, 0.0, 0.0);
    let (mut h_mean, mut h_m2) = (0.0, 0.0);
    for k in 0..max_terms {
        if k > 0 {
            let kf = k as f64;
            h1 += 1.0 / kf;
            h2 += 1.0 / (kf * kf);
        }
        let t = weights.next().expect("weights never end");
        let b = psi0 + EULER_GAMMA - h1;
        mass += t;
        sum_b += t * b;
        sum_h2 += t * h2;
        if t > 0.0 {
            let delta = h1 - h_mean;
            h_mean += delta * t / mass;
            h_m2 += t * delta * (h1 - h_mean);
        }

        // For j ≥ 1, T_{k+j} ≤ T_k x^j and |b_{k+j}| ≤ A + j/(k+1).
        let k1 = k as f64 + 1.0;
        let amp = psi0.abs() + EULER_GAMMA + 1.0 + k1.ln();
        let e1 = t * (amp * s0 + s1 / k1);
        let e2 = t * ((amp * amp + 2.0) * s0 + 2.0 * amp * s1 / k1 + s2 / (k1 * k1));
        let err_v = e2 + 2.0 * sum_b.abs() * e1 + e1 * e1;
        if e1.max(err_v) <= abs_tol {
            return Ok(LogMoments {
                mean: sum_b + LN_2 - EULER_GAMMA,
                var: psi1 - sum_h2 + h_m2 / mass,
                normalization: mass,
                terms: k + 1,
            });
        }
        if k + 1 == max_terms {
            return Err(Error::BudgetExceeded {
                terms: max_terms,
                tail_bound: e1.max(err_v),
            });
        }
    }
    unreachable!("loop returns before exhausting max_terms")
}

/// m_n = E[ln(χ²(n) + a²χ²(d−n))].
pub fn mn_series(n: u64, d: u64, a: f64, budget: &EvalBudget) -> Result<f64> {
    Ok(log_moments(n, d, a, budget.rel_tol, budget.max_terms)?.mean)
}

/// v_n = Var[ln(χ²(n) + a²χ²(d−n))].
pub fn vn_series(n: u64, d: u64, a: f64, budget: &EvalBudget) -> Result<f64> {
    Ok(log_moments(n, d, a, budget.rel_tol, budget.max_terms)?.var)
}

/// Σ_k w_{k,n} B(k+1, d/2), which equals one.
pub fn weight_normalization(n: u64, d: u64, a: f64, budget: &EvalBudget) -> Result<f64> {
    Ok(log_moments(n, d, a, budget.rel_tol, budget.max_terms)?.normalization)
}

/// μ_a = ln σ + ½Σ p_d(n) m_n and s_a² = ¼·mixture variance, unconditional.
pub fn prelu_log_stats(sigma: f64, d: u64, a: f64, budget: &EvalBudget) -> Result<LogNormStats> {
    check_sigma(sigma)?;
    check_slope(a)?;
    if d == 0 {
        return domain("width d must be at least 1");
    }
    let lp = binomial_log_pmf_vec(d, 0.5)?;
    let mut weights: Vec<f64> = lp.iter().map(|w| w.exp()).collect();
    renormalize(&mut weights);
    let share = budget.rel_tol / (d + 1) as f64;
    let mut means = Vec::with_capacity(weights.len());
    let mut vars = Vec::with_capacity(weights.len());
    for (n, w) in weights.iter().enumerate() {
        let tol = if *w > 0.0 { share / w } else { f64::INFINITY };
        let lm = log_moments(n as u64, d, a, tol.min(1.0), budget.max_terms)?;
        means.push(lm.mean);
        vars.push(lm.var);
    }
    let drift: f64 = weights.iter().zip(&means).map(|(w, m)| w * m).sum();
    Ok(LogNormStats {
        mu: sigma.ln() + 0.5 * drift,
        s2: 0.25 * mixture_variance(&weights, &means, &vars)?,
        conditional_on_nonzero: false,
    })
}

/// Closed-form statistics for a fixed-slope activation: the conditional
/// convention for ReLU, the unconditional one otherwise.
pub fn log_stats(
    sigma: f64,
    d: u64,
    activation: Activation,
    budget: &EvalBudget,
) -> Result<LogNormStats> {
    match activation.slope() {
        Some(0.0) => relu_log_stats(sigma, d),
        Some(a) => prelu_log_stats(sigma, d, a, budget),
        None => Err(Error::Unsupported(
            "no closed-form log-norm statistics for a randomized slope".into(),
        )),
    }
}

/// Almost-sure behaviour of ‖x^(k)‖ as k → ∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum LimitVerdict {
    /// The output is absorbed at zero with probability one.
    ZeroAlmostSure,
    /// μ < 0: ‖x^(k)‖ → 0 in L_p for p < s*; almost surely when s* ≥ 1,
    /// otherwise along a subsequence.
    ZeroLimit {
        s_star: Option<f64>,
        almost_sure: bool,
    },
    /// μ > 0.
    InfinityLimit,
    /// |μ| ≤ [`CRITICAL_DRIFT`]; not classified.
    Critical,
}

pub fn as_limit(
    sigma: f64,
    d: u64,
    activation: Activation,
    q: f64,
    budget: &EvalBudget,
) -> Result<LimitVerdict> {
    check_sigma(sigma)?;
    activation.validate()?;
    if !(q > 0.0 && q <= 1.0) {
        return domain(format!("keep probability must lie in (0,1], got {q}"));
    }
    // A piecewise-linear map sends a whole orthant (or a fully dropped
    // layer) to zero, and zero is absorbing.
    if activation.is_relu() || q < 1.0 {
        return Ok(LimitVerdict::ZeroAlmostSure);
    }
    let stats = log_stats(sigma, d, activation, budget)?;
    if stats.mu.abs() <= CRITICAL_DRIFT {
        return Ok(LimitVerdict::Critical);
    }
    if stats.mu > 0.0 {
        return Ok(LimitVerdict::InfinityLimit);
    }
    let s_star = match solve_preserved_order(sigma, d, activation, q, budget) {
        Ok(s) => s,
        Err(Error::NoConvergence(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(LimitVerdict::ZeroLimit {
        s_star,
        almost_sure: s_star.is_none_or(|s| s >= 1.0 - ORDER_TOL),
    })
}

/// P(x^(k) = 0) = 1 − (1 − 2^{−d})^k for a ReLU network.
pub fn zero_output_probability(d: u64, k: u64) -> Result<f64> {
    if d == 0 {
        return domain("width d must be at least 1");
    }
    let per_layer = (-(-(d as f64) * LN_2).exp()).ln_1p();
    Ok(-(k as f64 * per_layer).exp_m1())
}
