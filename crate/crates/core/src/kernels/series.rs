//! Series engine for fractional moments of X = χ²(n) + A²·χ²(m), where A is
//! the negative-side slope (fixed, or uniform on an interval).
//!
//! Every kernel in the crate is a finite mixture of such moments. Weights are
//! expanded as w_k = ½[n·E(1−A²)^k·C(m/2+k−1,k) + m·E(A²(1−A²)^k)·C(m/2+k,k)],
//! which is where the Beta series and the Lyapunov series share code.

use std::f64::consts::LN_2;

use crate::error::{domain, Error, Result};
use crate::specfn::{log_beta, log_gamma, log_gamma_ratio, log_sum_exp, LogSum};

/// Law of the slope A on the negative half-line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum SlopeLaw {
    Point(f64),
    Uniform { lo: f64, hi: f64 },
}

/// Cached moments M_k = E[(1−A²)^k] and E[A²(1−A²)^k].
#[derive(Debug, Clone)]
pub(crate) struct SlopeMoments {
    law: SlopeLaw,
    ln_x: f64,
    x_max: f64,
    cache: Vec<f64>,
}

impl SlopeMoments {
    pub(crate) fn new(law: SlopeLaw) -> Self {
        let a_min = match law {
            SlopeLaw::Point(a) => a,
            SlopeLaw::Uniform { lo, .. } => lo,
        };
        let x_max = (1.0 - a_min) * (1.0 + a_min);
        let ln_x = match law {
            SlopeLaw::Point(a) => (-a * a).ln_1p(),
            SlopeLaw::Uniform { .. } => f64::NAN,
        };
        Self {
            law,
            ln_x,
            x_max,
            cache: vec![1.0],
        }
    }

    pub(crate) fn law(&self) -> SlopeLaw {
        self.law
    }

    /// Upper bound on 1 − A² over the support.
    pub(crate) fn x_max(&self) -> f64 {
        self.x_max
    }

    /// E[A^p] for p > 0.
    pub(crate) fn mean_pow(&self, p: f64) -> f64 {
        match self.law {
            SlopeLaw::Point(a) => a.powf(p),
            SlopeLaw::Uniform { lo, hi } => {
                (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / ((p + 1.0) * (hi - lo))
            }
        }
    }

    /// ln E[(1−A²)^k].
    pub(crate) fn ln_m(&mut self, k: usize) -> f64 {
        match self.law {
            SlopeLaw::Point(_) => k as f64 * self.ln_x,
            SlopeLaw::Uniform { .. } => self.uniform_m(k).ln(),
        }
    }

    /// ln E[A²(1−A²)^k].
    pub(crate) fn ln_a(&mut self, k: usize) -> f64 {
        match self.law {
            SlopeLaw::Point(a) => 2.0 * a.ln() + k as f64 * self.ln_x,
            SlopeLaw::Uniform { .. } => (self.uniform_m(k) - self.uniform_m(k + 1)).ln(),
        }
    }

    // Integration by parts gives
    //   M_k = (β_k + 2k·M_{k−1}) / (2k+1),
    //   β_k = [hi(1−hi²)^k − lo(1−lo²)^k] / (hi − lo),
    // a forward recurrence whose error contracts by 2k/(2k+1) per step.
    fn uniform_m(&mut self, k: usize) -> f64 {
        let SlopeLaw::Uniform { lo, hi } = self.law else {
            unreachable!("uniform moments requested for a point law")
        };
        let width = hi - lo;
        let l_lo = (-lo * lo).ln_1p();
        // ln[f(hi)/f(lo)] for f(a) = a(1−a²)^j, split so narrow intervals keep
        // full relative accuracy.
        let ln_ratio_a = (width / lo).ln_1p();
        let ln_ratio_x = (-width * (hi + lo) / (1.0 - lo * lo)).ln_1p();
        while self.cache.len() <= k {
            let j = self.cache.len() as f64;
            let beta = if lo == 0.0 {
                (j * (-hi * hi).ln_1p()).exp()
            } else {
                let f_lo = lo * (j * l_lo).exp();
                f_lo * (ln_ratio_a + j * ln_ratio_x).exp_m1() / width
            };
            let prev = *self.cache.last().expect("cache starts non-empty");
            self.cache.push((beta + 2.0 * j * prev) / (2.0 * j + 1.0));
        }
        self.cache[k]
    }
}

/// Result of one mixture component.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Component {
    /// ln E[X^α].
    pub ln_value: f64,
    pub terms: usize,
    /// Certified bound on the truncated mass, in the same units as E[X^α].
    pub tail: f64,
}

impl Component {
    fn exact(ln_value: f64) -> Self {
        Self {
            ln_value,
            terms: 1,
            tail: 0.0,
        }
    }
}

/// ln E[χ²(ν)^α] = α ln 2 + ln Γ(ν/2+α) − ln Γ(ν/2).
pub(crate) fn ln_chi_moment(nu: u64, alpha: f64) -> Result<f64> {
    if nu == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(alpha * LN_2 + log_gamma_ratio(nu as f64 / 2.0, alpha)?)
}

/// Cheap certified lower bound on E[X^α], using X ≥ χ²(n) and
/// X ≥ A²·χ²(n+m).
pub(crate) fn ln_lower_bound(n: u64, m: u64, alpha: f64, law: &SlopeMoments) -> Result<f64> {
    let own = ln_chi_moment(n, alpha)?;
    let pooled = law.mean_pow(2.0 * alpha).ln() + ln_chi_moment(n + m, alpha)?;
    Ok(own.max(pooled))
}

/// E[X^α] for X = χ²(n) + A²χ²(m), truncated once the certified tail falls
/// below `exp(ln_abs_tol)`.
pub(crate) fn mixed_moment(
    n: u64,
    m: u64,
    alpha: f64,
    law: &mut SlopeMoments,
    ln_abs_tol: f64,
    max_terms: usize,
) -> Result<Component> {
    if n + m == 0 {
        return Ok(Component::exact(f64::NEG_INFINITY));
    }
    match law.law() {
        SlopeLaw::Point(0.0) => return Ok(Component::exact(ln_chi_moment(n, alpha)?)),
        SlopeLaw::Point(1.0) => {
            return Ok(Component::exact(ln_chi_moment(n + m, alpha)?))
        }
        _ => {}
    }
    if m == 0 {
        return Ok(Component::exact(ln_chi_moment(n, alpha)?));
    }
    if n == 0 {
        let scale = law.mean_pow(2.0 * alpha).ln();
        return Ok(Component::exact(scale + ln_chi_moment(m, alpha)?));
    }
    if alpha == 1.0 {
        let a2 = law.ln_a(0).exp();
        return Ok(Component::exact((n as f64 + a2 * m as f64).ln()));
    }
    if alpha < 1.0 {
        beta_series(n, m, alpha, law, ln_abs_tol, max_terms)
    } else {
        hypergeometric_series(n, m, alpha, law, ln_abs_tol, max_terms)
    }
}

fn scaled(ln_term: f64, factor: f64) -> f64 {
    if ln_term == f64::NEG_INFINITY {
        ln_term
    } else {
        ln_term + factor.ln()
    }
}

/// min(geometric, polynomial) bound on Σ_{j≥1} t_{K+j}/t_K.
fn tail_factor(x_max: f64, poly: f64) -> f64 {
    let geo = if x_max < 1.0 {
        x_max / (1.0 - x_max)
    } else {
        f64::INFINITY
    };
    geo.min(poly)
}

// E[X^α] = 2^α/Γ(1−α) · Σ_k w_k B(k+1−α, c+α), c = (n+m)/2.
fn beta_series(
    n: u64,
    m: u64,
    alpha: f64,
    law: &mut SlopeMoments,
    ln_abs_tol: f64,
    max_terms: usize,
) -> Result<Component> {
    let (nf, mf) = (n as f64, m as f64);
    let b = mf / 2.0;
    let c = (nf + mf) / 2.0;
    let one_minus = 1.0 - alpha;
    let ln_pref = alpha * LN_2 - log_gamma(one_minus)?;
    let (ln_half_n, ln_half_m) = ((nf / 2.0).ln(), (mf / 2.0).ln());
    let x_max = law.x_max();

    let mut ln_c1 = 0.0;
    let mut ln_c2 = 0.0;
    let mut ln_b = log_beta(one_minus, c + alpha)?;
    let mut acc = LogSum::new();
    for k in 0..max_terms {
        let kf = k as f64;
        let p = ln_half_n + law.ln_m(k) + ln_c1 + ln_b;
        let q = ln_half_m + law.ln_a(k) + ln_c2 + ln_b;
        acc.add(p);
        acc.add(q);

        // Ratios are bounded by x_max and by (b+k)/(k+1+c), resp.
        // (b+k+1)/(k+1+c); the latter sums in closed form.
        let gp = tail_factor(x_max, (kf + b) / (c - b));
        let gq = if c - b > 1.0 {
            tail_factor(x_max, (kf + b + 1.0) / (c - b - 1.0))
        } else {
            tail_factor(x_max, f64::INFINITY)
        };
        let ln_tail = ln_pref + log_sum_exp(&[scaled(p, gp), scaled(q, gq)]);
        if ln_tail <= ln_abs_tol {
            return Ok(Component {
                ln_value: ln_pref + acc.value(),
                terms: k + 1,
                tail: ln_tail.exp(),
            });
        }
        if k + 1 == max_terms {
            return Err(Error::BudgetExceeded {
                terms: max_terms,
                tail_bound: (ln_tail - ln_pref - acc.value()).exp(),
            });
        }
        ln_c1 += ((b + kf) / (kf + 1.0)).ln();
        ln_c2 += ((b + kf + 1.0) / (kf + 1.0)).ln();
        ln_b += ((kf + 1.0 - alpha) / (kf + 1.0 + c)).ln();
    }
    unreachable!("loop returns before exhausting max_terms")
}

// E[X^α] = E[χ²(n+m)^α] · Σ_k (−α)_k (b)_k / ((c)_k k!) · M_k, from the
// Euler integral of E[(1 − (1−A²)V)^α] with V ~ Beta(m/2, n/2).
fn hypergeometric_series(
    n: u64,
    m: u64,
    alpha: f64,
    law: &mut SlopeMoments,
    ln_abs_tol: f64,
    max_terms: usize,
) -> Result<Component> {
    let b = m as f64 / 2.0;
    let c = (n + m) as f64 / 2.0;
    let ln_chi = ln_chi_moment(n + m, alpha)?;
    let x_max = law.x_max();
    let mut coef = 1.0;
    let mut sum = 0.0;
    for k in 0..max_terms {
        let kf = k as f64;
        let term = coef * law.ln_m(k).exp();
        sum += term;
        let next = coef * (kf - alpha) * (b + kf) / ((kf + 1.0) * (c + kf));
        if kf + 1.0 > alpha {
            // From here on every ratio is positive and below both x_max and
            // (j−α)/(j+1), whose products sum to (K−α)/α.
            let k1 = kf + 1.0;
            let bound = (next * law.ln_m(k + 1).exp()).abs();
            let tail = bound * (1.0 + tail_factor(x_max, (k1 - alpha) / alpha));
            let ln_tail = ln_chi + tail.ln();
            if tail == 0.0 || ln_tail <= ln_abs_tol {
                if sum <= 0.0 {
                    return domain("hypergeometric moment series lost positivity");
                }
                return Ok(Component {
                    ln_value: ln_chi + sum.ln(),
                    terms: k + 1,
                    tail: ln_tail.exp(),
                });
            }
            if k + 1 == max_terms {
                return Err(Error::BudgetExceeded {
                    terms: max_terms,
                    tail_bound: tail / sum.abs(),
                });
            }
        } else if k + 1 == max_terms {
            return Err(Error::BudgetExceeded {
                terms: max_terms,
                tail_bound: f64::INFINITY,
            });
        }
        coef = next;
    }
    unreachable!("loop returns before exhausting max_terms")
}

/// Iterator over the α = 0 weights T_k = w_k·B(k+1, c) of one component,
/// used by the Lyapunov series. Terms sum to one.
pub(crate) struct ZeroOrderWeights<'a> {
    law: &'a mut SlopeMoments,
    ln_half_n: f64,
    ln_half_m: f64,
    b: f64,
    c: f64,
    ln_c1: f64,
    ln_c2: f64,
    ln_b: f64,
    k: usize,
}

impl<'a> ZeroOrderWeights<'a> {
    pub(crate) fn new(n: u64, m: u64, law: &'a mut SlopeMoments) -> Result<Self> {
        if n + m == 0 {
            return domain("zero-order weights need n + m >= 1");
        }
        let (nf, mf) = (n as f64, m as f64);
        let c = (nf + mf) / 2.0;
        Ok(Self {
            law,
            ln_half_n: if n > 0 { (nf / 2.0).ln() } else { f64::NEG_INFINITY },
            ln_half_m: if m > 0 { (mf / 2.0).ln() } else { f64::NEG_INFINITY },
            b: mf / 2.0,
            c,
            ln_c1: 0.0,
            ln_c2: 0.0,
            ln_b: log_beta(1.0, c)?,
            k: 0,
        })
    }

    /// Bound on the ratio of consecutive weights.
    pub(crate) fn x_max(&self) -> f64 {
        self.law.x_max()
    }
}

impl Iterator for ZeroOrderWeights<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let k = self.k;
        let kf = k as f64;
        // C(b−1, 0) = 1 but C(b+k−1, k) vanishes for k ≥ 1 when b = 0.
        let p = if self.b == 0.0 && k > 0 {
            f64::NEG_INFINITY
        } else {
            self.ln_half_n + self.law.ln_m(k) + self.ln_c1 + self.ln_b
        };
        let q = self.ln_half_m + self.law.ln_a(k) + self.ln_c2 + self.ln_b;
        if self.b > 0.0 {
            self.ln_c1 += ((self.b + kf) / (kf + 1.0)).ln();
        }
        self.ln_c2 += ((self.b + kf + 1.0) / (kf + 1.0)).ln();
        self.ln_b += ((kf + 1.0) / (kf + 1.0 + self.c)).ln();
        self.k += 1;
        Some(p.exp() + q.exp())
    }
}
