//! Contraction/explosion verdicts, the preserved order s* of a given σ and
//! predicted moment trajectories across layers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{kernel, Activation, MomentQuery, MAX_ORDER};
use crate::error::{domain, Error, Result};
use crate::lyapunov::{log_stats, relu_log_stats};
use crate::specfn::EvalBudget;

/// Tolerance on σ^s·I − 1 for a preserving verdict.
pub const PRESERVING_TOL: f64 = 1e-9;

const ORDER_FLOOR: f64 = 1e-6;
const FINITE_DIFF_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", content = "s", rename_all = "snake_case")]
pub enum Regime {
    Preserving(f64),
    Contracting,
    Exploding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub regime: Regime,
    /// Order s* with σ^{s*}·I(s*) = 1, when one exists in (0, 8].
    pub preserved_order: Option<f64>,
    /// Lyapunov drift, when a closed form exists.
    pub mu: Option<f64>,
}

/// Classify σ for the moment order of `query`.
pub fn classify_regime(sigma: f64, query: &MomentQuery) -> Result<RegimeVerdict> {
    check_sigma(sigma)?;
    let v = kernel(query)?;
    let ln_r = query.s * sigma.ln() + v.log_i;
    let r = ln_r.exp();
    let regime = if (r - 1.0).abs() <= PRESERVING_TOL {
        if query.s > 2.0 {
            return Err(Error::Scope(format!(
                "preservation is only certified for s <= 2, got s = {}",
                query.s
            )));
        }
        Regime::Preserving(query.s)
    } else if r < 1.0 {
        Regime::Contracting
    } else {
        Regime::Exploding
    };
    let preserved_order =
        match solve_preserved_order(sigma, query.d, query.activation, query.q, &query.budget) {
            Ok(s) => s,
            Err(Error::NoConvergence(_)) => None,
            Err(e) => return Err(e),
        };
    let mu = if query.q == 1.0 && query.activation.slope().is_some() {
        Some(log_stats(sigma, query.d, query.activation, &query.budget)?.mu)
    } else {
        None
    };
    Ok(RegimeVerdict {
        regime,
        preserved_order,
        mu,
    })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        domain(format!("sigma must be positive and finite, got {sigma}"))
    }
}

/// Nonzero root of κ(s) = σ^s·I(s,d) = 1 on (0, 8], or `None` when κ does
/// not dip below one near the origin.
///
/// κ is log-convex; κ(0⁺) equals the probability of a nonzero output. When
/// that is one, the dip is decided by the sign of κ'(0) = μ.
pub fn solve_preserved_order(
    sigma: f64,
    d: u64,
    activation: Activation,
    q: f64,
    budget: &EvalBudget,
) -> Result<Option<f64>> {
    check_sigma(sigma)?;
    let base = MomentQuery::new(d, 1.0, activation)?
        .with_keep(q)?
        .with_budget(*budget);
    let g = |s: f64| -> Result<f64> { Ok(s * sigma.ln() + kernel(&base.with_order(s)?)?.log_i) };

    let slope_at_zero = match activation.slope() {
        Some(0.0) if q == 1.0 => relu_log_stats(sigma, d)?.mu,
        Some(_) if q == 1.0 => log_stats(sigma, d, activation, budget)?.mu,
        _ => {
            let (ln_alive, h) = (ln_alive_probability(d, activation, q), FINITE_DIFF_STEP);
            (g(h)?.exp() - ln_alive.exp()) / h
        }
    };
    if slope_at_zero >= 0.0 {
        return Ok(None);
    }

    let mut lo = ORDER_FLOOR;
    while g(lo)? >= 0.0 {
        lo /= 10.0;
        if lo < 1e-15 {
            return Err(Error::NoConvergence(
                "κ does not fall below one near s = 0".into(),
            ));
        }
    }
    let mut hi = MAX_ORDER;
    if g(hi)? < 0.0 {
        return Err(Error::NoConvergence(format!(
            "κ stays below one up to s = {MAX_ORDER}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

// ln P(output ≠ 0) for one layer.
fn ln_alive_probability(d: u64, activation: Activation, q: f64) -> f64 {
    let dead = if activation.is_relu() { 1.0 - q / 2.0 } else { 1.0 - q };
    if dead == 0.0 {
        0.0
    } else {
        (-(d as f64 * dead.ln()).exp()).ln_1p()
    }
}

/// Predicted E‖x^(k)‖^s / ‖x^(0)‖^s after each layer, where `widths[j]` is
/// the output width of layer j+1.
pub fn moment_trajectory(
    widths: &[u64],
    s: f64,
    sigma: f64,
    activation: Activation,
    q: f64,
    budget: &EvalBudget,
) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    if widths.is_empty() {
        return domain("moment_trajectory needs at least one layer");
    }
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut ln_acc = 0.0;
    let mut out = Vec::with_capacity(widths.len());
    for &d in widths {
        let log_i = match cache.get(&d) {
            Some(v) => *v,
            None => {
                let query = MomentQuery::new(d, s, activation)?
                    .with_keep(q)?
                    .with_budget(*budget);
                let v = kernel(&query)?.log_i;
                cache.insert(d, v);
                v
            }
        };
        ln_acc += s * sigma.ln() + log_i;
        out.push(ln_acc.exp());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::critical_sigma;

    #[test]
    fn kaiming_preserves_order_two() {
        let sigma = (2.0f64 / 64.0).sqrt();
        let s = solve_preserved_order(sigma, 64, Activation::RELU, 1.0, &EvalBudget::default())
            .unwrap()
            .unwrap();
        assert!((s - 2.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn round_trip_order() {
        let query = MomentQuery::new(64, 0.8, Activation::RELU).unwrap();
        let (sigma, _) = critical_sigma(&query).unwrap();
        let s = solve_preserved_order(sigma, 64, Activation::RELU, 1.0, &EvalBudget::default())
            .unwrap()
            .unwrap();
        assert!((s - 0.8).abs() < 1e-6);
        let verdict = classify_regime(sigma, &query).unwrap();
        assert!(matches!(verdict.regime, Regime::Preserving(x) if x == 0.8));
        assert!(verdict.mu.unwrap() < 0.0);
    }

    #[test]
    fn wide_relu_explodes() {
        let query = MomentQuery::new(64, 1.0, Activation::RELU).unwrap();
        let verdict = classify_regime((4.0f64 / 64.0).sqrt(), &query).unwrap();
        assert_eq!(verdict.regime, Regime::Exploding);
        assert!(verdict.mu.unwrap() > 0.0);
        assert_eq!(verdict.preserved_order, None);
    }

    #[test]
    fn trajectory_product_formula() {
        let sigma = (1.0f64 / 8.0).sqrt();
        let t = moment_trajectory(&[4, 8, 16], 2.0, sigma, Activation::LINEAR, 1.0, &EvalBudget::default())
            .unwrap();
        assert!((t[0] - 0.5).abs() < 1e-14);
        assert!((t[1] - 0.5).abs() < 1e-14);
        assert!((t[2] - 1.0).abs() < 1e-14);
        assert!(moment_trajectory(&[], 1.0, 1.0, Activation::RELU, 1.0, &EvalBudget::default()).is_err());
    }
}
