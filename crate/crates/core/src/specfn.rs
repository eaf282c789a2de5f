//! Special functions in log space: log-Gamma, digamma, trigamma, log-Beta,
//! generalized binomial coefficients and binomial mass functions.
//!
//! Everything here is pure. The Gamma family is evaluated by shifting the
//! argument above [`ASYMPTOTIC_THRESHOLD`] with the recurrence and then
//! summing the Stirling/Bernoulli asymptotic series.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// Bernoulli numbers B_2, B_4, ..., B_16.
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Truncation policy shared by every infinite series in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalBudget {
    /// Relative tolerance on the truncated mass.
    pub rel_tol: f64,
    /// Hard cap on the number of terms of any single series.
    pub max_terms: usize,
}

impl EvalBudget {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol < 1e-3) {
            return domain(format!("rel_tol must lie in (0, 1e-3), got {rel_tol}"));
        }
        if max_terms == 0 {
            return domain("max_terms must be at least 1");
        }
        Ok(Self { rel_tol, max_terms })
    }

    /// Same tolerance with a different term cap.
    pub fn with_max_terms(self, max_terms: usize) -> Result<Self> {
        Self::new(self.rel_tol, max_terms)
    }
}

impl Default for EvalBudget {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_terms: 10_000,
        }
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} requires a positive finite argument, got {x}")))
    }
}

/// Stirling series for ln Γ(x), x ≥ 10.
fn ln_gamma_asymptotic(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut corr = 0.0;
    let mut pow = inv;
    for (k, b) in BERNOULLI.iter().enumerate() {
        let two_k = 2.0 * (k as f64 + 1.0);
        corr += b / (two_k * (two_k - 1.0)) * pow;
        pow *= inv2;
    }
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + corr
}

/// Natural log of the Gamma function for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma", x)?;
    if x >= ASYMPTOTIC_THRESHOLD {
        return Ok(ln_gamma_asymptotic(x));
    }
    let shift = (ASYMPTOTIC_THRESHOLD - x).ceil() as usize;
    let mut prod = 1.0;
    for j in 0..shift {
        prod *= x + j as f64;
    }
    Ok(ln_gamma_asymptotic(x + shift as f64) - prod.ln())
}

/// ln Γ(x + a) − ln Γ(x), accurate even when both terms are large.
///
/// Requires x > 0 and x + a > 0.
pub fn log_gamma_ratio(x: f64, a: f64) -> Result<f64> {
    check_positive("log_gamma_ratio", x)?;
    if !a.is_finite() {
        return domain(format!("log_gamma_ratio offset must be finite, got {a}"));
    }
    check_positive("log_gamma_ratio", x + a)?;
    if a == 0.0 {
        return Ok(0.0);
    }
    if a.fract() == 0.0 && a > 0.0 && a <= 64.0 {
        let mut acc = 0.0;
        for j in 0..a as usize {
            acc += (x + j as f64).ln();
        }
        return Ok(acc);
    }
    let lo = x.min(x + a);
    let mut base = x;
    let mut shift_sum = 0.0;
    if lo < ASYMPTOTIC_THRESHOLD {
        let shift = (ASYMPTOTIC_THRESHOLD - lo).ceil() as usize;
        for j in 0..shift {
            shift_sum += (a / (x + j as f64)).ln_1p();
        }
        base = x + shift as f64;
    }
    Ok(ratio_asymptotic(base, a) - shift_sum)
}

fn ratio_asymptotic(x: f64, a: f64) -> f64 {
    let y = x + a;
    let lead = (x - 0.5) * (a / x).ln_1p() + a * y.ln() - a;
    let (ix, iy) = (1.0 / x, 1.0 / y);
    let (ix2, iy2) = (ix * ix, iy * iy);
    let (mut px, mut py) = (ix, iy);
    let mut corr = 0.0;
    for (k, b) in BERNOULLI.iter().enumerate() {
        let two_k = 2.0 * (k as f64 + 1.0);
        corr += b / (two_k * (two_k - 1.0)) * (py - px);
        px *= ix2;
        py *= iy2;
    }
    lead + corr
}

/// Digamma ψ₀(x) for x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    let mut acc = 0.0;
    let mut y = x;
    while y < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / y;
        y += 1.0;
    }
    let inv2 = 1.0 / (y * y);
    let mut pow = inv2;
    let mut series = 0.0;
    for (k, b) in BERNOULLI.iter().enumerate() {
        series += b / (2.0 * (k as f64 + 1.0)) * pow;
        pow *= inv2;
    }
    Ok(acc + y.ln() - 0.5 / y - series)
}

/// Trigamma ψ₁(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", x)?;
    let mut acc = 0.0;
    let mut y = x;
    while y < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (y * y);
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    let mut pow = inv2 * inv;
    let mut series = 0.0;
    for b in BERNOULLI.iter() {
        series += b * pow;
        pow *= inv2;
    }
    Ok(acc + inv + 0.5 * inv2 + series)
}

/// ln B(x, y) for x, y > 0.
pub fn log_beta(x: f64, y: f64) -> Result<f64> {
    check_positive("log_beta", x)?;
    check_positive("log_beta", y)?;
    let (small, large) = if x <= y { (x, y) } else { (y, x) };
    Ok(log_gamma(small)? - log_gamma_ratio(large, small)?)
}

/// Generalized binomial coefficient C(r, k) = r(r−1)…(r−k+1)/k! by the
/// product form, so Γ poles never appear.
pub fn gen_binomial(r: f64, k: u64) -> Result<f64> {
    if !r.is_finite() {
        return domain(format!("gen_binomial requires finite r, got {r}"));
    }
    let mut acc = 1.0;
    for i in 0..k {
        let num = r - i as f64;
        if num == 0.0 {
            return Ok(0.0);
        }
        acc *= num / (i as f64 + 1.0);
    }
    Ok(acc)
}

/// ln C(d, n) for integers 0 ≤ n ≤ d.
pub fn log_choose(d: u64, n: u64) -> Result<f64> {
    if n > d {
        return domain(format!("log_choose requires n <= d, got n={n}, d={d}"));
    }
    let n = n.min(d - n);
    if n == 0 {
        return Ok(0.0);
    }
    // ln Γ(d+1) − ln Γ(n+1) − ln Γ(d−n+1), grouped as a ratio to avoid
    // subtracting two large logs.
    Ok(log_gamma_ratio((d - n) as f64 + 1.0, n as f64)? - log_gamma(n as f64 + 1.0)?)
}

/// ln of the Binomial(d, p) probability mass at n.
pub fn log_binomial_pmf(d: u64, n: u64, p: f64) -> Result<f64> {
    if d == 0 {
        return domain("log_binomial_pmf requires d >= 1");
    }
    if n > d {
        return domain(format!("log_binomial_pmf requires n <= d, got n={n}, d={d}"));
    }
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("log_binomial_pmf requires p in (0,1), got {p}"));
    }
    Ok(log_choose(d, n)? + n as f64 * p.ln() + (d - n) as f64 * (-p).ln_1p())
}

/// Log-pmf of Binomial(d, p) for every n in 0..=d.
///
/// Built outward from the mode with exact ratios, then renormalized, so the
/// vector sums to one to within a few ulps even for very large d. `p` may be
/// 0 or 1; impossible outcomes get −∞.
pub fn binomial_log_pmf_vec(d: u64, p: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("binomial probability must lie in [0,1], got {p}"));
    }
    let len = d as usize + 1;
    if p == 0.0 || p == 1.0 {
        let mut out = vec![f64::NEG_INFINITY; len];
        out[if p == 0.0 { 0 } else { len - 1 }] = 0.0;
        return Ok(out);
    }
    let mode = (((d + 1) as f64) * p).floor().min(d as f64) as usize;
    let log_odds = p.ln() - (-p).ln_1p();
    let mut out = vec![0.0; len];
    out[mode] = log_binomial_pmf(d.max(1), mode as u64, p).unwrap_or(0.0);
    for n in (mode + 1)..len {
        let ratio = ((d as f64 - n as f64 + 1.0) / n as f64).ln();
        out[n] = out[n - 1] + ratio + log_odds;
    }
    for n in (0..mode).rev() {
        let ratio = ((n as f64 + 1.0) / (d as f64 - n as f64)).ln();
        out[n] = out[n + 1] + ratio - log_odds;
    }
    let total = log_sum_exp(&out);
    for v in out.iter_mut() {
        *v -= total;
    }
    Ok(out)
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSum {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.scaled += (log_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    /// ln of the accumulated sum (−∞ when empty).
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    #[test]
    fn budget_validation() {
        assert!(EvalBudget::new(1e-12, 10).is_ok());
        assert!(EvalBudget::new(1e-2, 10).is_err());
        assert!(EvalBudget::new(0.0, 10).is_err());
        assert!(EvalBudget::new(1e-9, 0).is_err());
        assert_eq!(EvalBudget::default().max_terms, 10_000);
    }

    #[test]
    fn log_gamma_known_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
        assert!((log_gamma(0.5).unwrap() - 0.5 * PI.ln()).abs() < 1e-14);
        // ln(9!) exactly.
        assert!((log_gamma(10.0).unwrap() - 362_880f64.ln()).abs() < 1e-13);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn digamma_identities() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-14);
        assert!((digamma(2.0).unwrap() - digamma(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((digamma(0.5).unwrap() + EULER_GAMMA + 2.0 * LN_2).abs() < 1e-14);
        assert!(digamma(0.0).is_err());
    }

    #[test]
    fn trigamma_identities() {
        assert!((trigamma(1.0).unwrap() - PI * PI / 6.0).abs() < 1e-13);
        assert!((trigamma(0.5).unwrap() - PI * PI / 2.0).abs() < 1e-13);
        let x = 3.7;
        assert!((trigamma(x + 1.0).unwrap() - trigamma(x).unwrap() + 1.0 / (x * x)).abs() < 1e-12);
        assert!(trigamma(-2.0).is_err());
    }

    #[test]
    fn log_beta_closed_forms() {
        assert!((log_beta(1.0, 32.0).unwrap() - (1.0f64 / 32.0).ln()).abs() < 1e-13);
        assert!((log_beta(2.0, 2.0).unwrap() - (1.0f64 / 6.0).ln()).abs() < 1e-13);
        assert!(log_beta(0.0, 1.0).is_err());
    }

    #[test]
    fn gen_binomial_products() {
        assert_eq!(gen_binomial(5.0, 2).unwrap(), 10.0);
        assert_eq!(gen_binomial(2.0, 3).unwrap(), 0.0);
        assert!((gen_binomial(2.5, 3).unwrap() - 0.3125).abs() < 1e-15);
        assert_eq!(gen_binomial(-1.0, 0).unwrap(), 1.0);
        assert!(gen_binomial(f64::INFINITY, 1).is_err());
    }

    #[test]
    fn binomial_pmf_values() {
        assert!((log_binomial_pmf(2, 1, 0.5).unwrap() - 0.5f64.ln()).abs() < 1e-14);
        assert!(log_binomial_pmf(1000, 500, 0.5).unwrap().is_finite());
        assert!(log_binomial_pmf(3, 4, 0.5).is_err());
        assert!(log_binomial_pmf(3, 1, 1.0).is_err());
        let total: f64 = (0..=64)
            .map(|n| log_binomial_pmf(64, n, 0.5).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_vector_matches_scalar() {
        let v = binomial_log_pmf_vec(40, 0.3).unwrap();
        for (n, lp) in v.iter().enumerate() {
            let direct = log_binomial_pmf(40, n as u64, 0.3).unwrap();
            assert!((lp - direct).abs() < 1e-12, "n={n}");
        }
        let edge = binomial_log_pmf_vec(3, 1.0).unwrap();
        assert_eq!(edge[3], 0.0);
        assert_eq!(edge[0], f64::NEG_INFINITY);
    }

    #[test]
    fn gamma_ratio_matches_difference() {
        for &(x, a) in &[(0.5, 0.25), (3.0, 1.0), (17.5, 0.7), (2048.0, 0.5), (1e-3, 2.3)] {
            let direct = log_gamma(x + a).unwrap() - log_gamma(x).unwrap();
            let ratio = log_gamma_ratio(x, a).unwrap();
            assert!((ratio - direct).abs() < 1e-11 * (1.0 + direct.abs()), "x={x} a={a}");
        }
        assert!((log_gamma_ratio(2048.0, 1.0).unwrap() - 2048f64.ln()).abs() < 1e-15);
        assert!(log_gamma_ratio(1.0, -1.0).is_err());
    }

    #[test]
    fn log_sum_accumulator() {
        let mut acc = LogSum::new();
        assert_eq!(acc.value(), f64::NEG_INFINITY);
        for t in [-1000.0, -1001.0, f64::NEG_INFINITY, -999.0] {
            acc.add(t);
        }
        let expect = log_sum_exp(&[-1000.0, -1001.0, -999.0]);
        assert!((acc.value() - expect).abs() < 1e-13);
    }
}
