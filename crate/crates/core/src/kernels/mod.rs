//! Moment kernels I(s,d) = E‖φ(z⊙ε/q)‖^s for standard normal z, critical
//! variances, large-width asymptotics and regime classification.
//!
//! Kernels are strategies behind [`MomentKernel`], collected in a
//! [`KernelRegistry`] and selected at runtime from the query.

pub(crate) mod series;
mod regime;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::specfn::{binomial_log_pmf_vec, EvalBudget, LogSum};
use series::{ln_lower_bound, mixed_moment, SlopeLaw, SlopeMoments};

pub use regime::{
    classify_regime, moment_trajectory, solve_preserved_order, Regime, RegimeVerdict,
};

/// Largest moment order accepted by the kernels.
pub const MAX_ORDER: f64 = 8.0;

/// Slope of Leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Default interval of the randomized leaky slope.
pub const RLEAKY_DEFAULT: (f64, f64) = (1.0 / 8.0, 1.0 / 3.0);

/// Piecewise-linear activation family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// φ(x) = x for x ≥ 0, a·x otherwise.
    ParamRelu { a: f64 },
    /// Slope drawn uniformly from [lo, hi], shared by a layer.
    RandomizedLeaky { lo: f64, hi: f64 },
}

impl Activation {
    pub const RELU: Self = Self::ParamRelu { a: 0.0 };
    pub const LINEAR: Self = Self::ParamRelu { a: 1.0 };
    pub const LEAKY: Self = Self::ParamRelu { a: LEAKY_SLOPE };

    pub fn prelu(a: f64) -> Result<Self> {
        let act = Self::ParamRelu { a };
        act.validate()?;
        Ok(act)
    }

    pub fn rleaky(lo: f64, hi: f64) -> Result<Self> {
        let act = Self::RandomizedLeaky { lo, hi };
        act.validate()?;
        Ok(act)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::ParamRelu { a } if (0.0..=1.0).contains(&a) => Ok(()),
            Self::ParamRelu { a } => domain(format!("slope a must lie in [0,1], got {a}")),
            Self::RandomizedLeaky { lo, hi } if 0.0 <= lo && lo < hi && hi <= 1.0 => Ok(()),
            Self::RandomizedLeaky { lo, hi } => {
                domain(format!("randomized slope needs 0 <= lo < hi <= 1, got [{lo}, {hi}]"))
            }
        }
    }

    /// The fixed slope, if any.
    pub fn slope(&self) -> Option<f64> {
        match *self {
            Self::ParamRelu { a } => Some(a),
            Self::RandomizedLeaky { .. } => None,
        }
    }

    pub fn is_relu(&self) -> bool {
        self.slope() == Some(0.0)
    }

    pub fn is_linear(&self) -> bool {
        self.slope() == Some(1.0)
    }

    /// E[a²] under the slope law.
    pub fn mean_slope_sq(&self) -> f64 {
        match *self {
            Self::ParamRelu { a } => a * a,
            Self::RandomizedLeaky { lo, hi } => (hi.powi(3) - lo.powi(3)) / (3.0 * (hi - lo)),
        }
    }

    /// Apply φ with slope `a` in place.
    pub fn apply_slope(a: f64, v: &mut [f64]) {
        if a == 1.0 {
            return;
        }
        for x in v.iter_mut() {
            if *x < 0.0 {
                *x *= a;
            }
        }
    }

    pub(crate) fn law(&self) -> SlopeLaw {
        match *self {
            Self::ParamRelu { a } => SlopeLaw::Point(a),
            Self::RandomizedLeaky { lo, hi } => SlopeLaw::Uniform { lo, hi },
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::ParamRelu { a: 0.0 } => write!(f, "relu"),
            Self::ParamRelu { a: 1.0 } => write!(f, "linear"),
            Self::ParamRelu { a } if a == LEAKY_SLOPE => write!(f, "leaky"),
            Self::ParamRelu { a } => write!(f, "prelu:{a}"),
            Self::RandomizedLeaky { lo, hi } => write!(f, "rleaky:{lo},{hi}"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `relu`, `linear`, `leaky`, `prelu:<a>`, `rleaky` and
    /// `rleaky:<lo>,<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let number = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("not a number: {t:?}")))
        };
        match s.split_once(':') {
            None => match s {
                "relu" => Ok(Self::RELU),
                "linear" => Ok(Self::LINEAR),
                "leaky" => Ok(Self::LEAKY),
                "rleaky" => Self::rleaky(RLEAKY_DEFAULT.0, RLEAKY_DEFAULT.1),
                _ => domain(format!("unknown activation {s:?}")),
            },
            Some(("prelu", a)) => Self::prelu(number(a)?),
            Some(("rleaky", range)) => {
                let (lo, hi) = range
                    .split_once(',')
                    .ok_or_else(|| Error::Domain(format!("rleaky needs lo,hi: {range:?}")))?;
                Self::rleaky(number(lo)?, number(hi)?)
            }
            Some(_) => domain(format!("unknown activation {s:?}")),
        }
    }
}

/// One kernel evaluation request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentQuery {
    pub d: u64,
    pub s: f64,
    pub activation: Activation,
    /// Dropout keep probability; 1 disables dropout.
    pub q: f64,
    pub budget: EvalBudget,
}

impl MomentQuery {
    pub fn new(d: u64, s: f64, activation: Activation) -> Result<Self> {
        let query = Self {
            d,
            s,
            activation,
            q: 1.0,
            budget: EvalBudget::default(),
        };
        query.validate()?;
        Ok(query)
    }

    pub fn with_keep(mut self, q: f64) -> Result<Self> {
        self.q = q;
        self.validate()?;
        Ok(self)
    }

    pub fn with_budget(mut self, budget: EvalBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_order(mut self, s: f64) -> Result<Self> {
        self.s = s;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return domain("width d must be at least 1");
        }
        if !(self.s > 0.0 && self.s <= MAX_ORDER) {
            return domain(format!("moment order s must lie in (0, {MAX_ORDER}], got {}", self.s));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return domain(format!("keep probability q must lie in (0,1], got {}", self.q));
        }
        self.activation.validate()?;
        EvalBudget::new(self.budget.rel_tol, self.budget.max_terms).map(|_| ())
    }
}

/// A kernel value with its truncation certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub log_i: f64,
    /// exp(log_i); may be +∞ when the kernel overflows f64.
    pub i: f64,
    pub terms_used: usize,
    /// Upper bound on the truncated mass relative to the kernel.
    pub tail_bound: f64,
}

impl KernelValue {
    fn exact(log_i: f64, terms_used: usize) -> Self {
        Self {
            log_i,
            i: log_i.exp(),
            terms_used,
            tail_bound: 0.0,
        }
    }
}

/// A moment-kernel strategy.
pub trait MomentKernel: Send + Sync {
    fn name(&self) -> &'static str;
    fn accepts(&self, query: &MomentQuery) -> bool;
    fn evaluate(&self, query: &MomentQuery) -> Result<KernelValue>;
}

/// Named kernels, consulted in registration order.
#[derive(Default)]
pub struct KernelRegistry {
    kernels: Vec<Box<dyn MomentKernel>>,
}

impl KernelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every kernel shipped with the crate.
    pub fn standard() -> Self {
        let mut reg = Self::new();
        reg.register(Box::new(ReluKernel));
        reg.register(Box::new(LinearKernel));
        reg.register(Box::new(PreluKernel));
        reg.register(Box::new(RandomizedLeakyKernel));
        reg.register(Box::new(DropoutReluKernel));
        reg.register(Box::new(DropoutLinearKernel));
        reg.register(Box::new(DropoutPreluKernel));
        reg
    }

    pub fn register(&mut self, kernel: Box<dyn MomentKernel>) {
        self.kernels.push(kernel);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kernels.iter().map(|k| k.name()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&dyn MomentKernel> {
        self.kernels.iter().find(|k| k.name() == name).map(|k| k.as_ref())
    }

    pub fn select(&self, query: &MomentQuery) -> Result<&dyn MomentKernel> {
        self.kernels
            .iter()
            .find(|k| k.accepts(query))
            .map(|k| k.as_ref())
            .ok_or_else(|| Error::Unsupported(format!("no kernel accepts {}", query.activation)))
    }

    pub fn evaluate(&self, query: &MomentQuery) -> Result<KernelValue> {
        query.validate()?;
        self.select(query)?.evaluate(query)
    }
}

/// The process-wide standard registry.
pub fn registry() -> &'static KernelRegistry {
    static REGISTRY: OnceLock<KernelRegistry> = OnceLock::new();
    REGISTRY.get_or_init(KernelRegistry::standard)
}

/// Evaluate the kernel matching `query`.
pub fn kernel(query: &MomentQuery) -> Result<KernelValue> {
    registry().evaluate(query)
}

struct ReluKernel;
struct LinearKernel;
struct PreluKernel;
struct RandomizedLeakyKernel;
struct DropoutReluKernel;
struct DropoutLinearKernel;
struct DropoutPreluKernel;

impl MomentKernel for ReluKernel {
    fn name(&self) -> &'static str {
        "relu"
    }
    fn accepts(&self, q: &MomentQuery) -> bool {
        q.activation.is_relu() && q.q == 1.0
    }
    fn evaluate(&self, q: &MomentQuery) -> Result<KernelValue> {
        relu_kernel(q)
    }
}

impl MomentKernel for LinearKernel {
    fn name(&self) -> &'static str {
        "linear"
    }
    fn accepts(&self, q: &MomentQuery) -> bool {
        q.activation.is_linear() && q.q == 1.0
    }
    fn evaluate(&self, q: &MomentQuery) -> Result<KernelValue> {
        linear_kernel(q.s, q.d)
    }
}

impl MomentKernel for PreluKernel {
    fn name(&self) -> &'static str {
        "prelu"
    }
    fn accepts(&self, q: &MomentQuery) -> bool {
        matches!(q.activation.slope(), Some(a) if a > 0.0 && a < 1.0) && q.q == 1.0
    }
    fn evaluate(&self, q: &MomentQuery) -> Result<KernelValue> {
        prelu_kernel(q)
    }
}

impl MomentKernel for RandomizedLeakyKernel {
    fn name(&self) -> &'static str {
        "rleaky"
    }
    fn accepts(&self, q: &MomentQuery) -> bool {
        q.activation.slope().is_none() && q.q == 1.0
    }
    fn evaluate(&self, q: &MomentQuery) -> Result<KernelValue> {
        randomized_leaky_kernel(q)
    }
}

impl MomentKernel for DropoutReluKernel {
    fn name(&self) -> &'static str {
        "dropout-relu"
    }
    fn accepts(&self, q: &MomentQuery) -> bool {
        q.activation.is_relu() && q.q < 1.0
    }
    fn evaluate(&self, q: &MomentQuery) -> Result<KernelValue> {
        dropout_relu_kernel(q)
    }
}

impl MomentKernel for DropoutLinearKernel {
    fn name(&self) -> &'static str {
        "dropout-linear"
    }
    fn accepts(&self, q: &MomentQuery) -> bool {
        q.activation.is_linear() && q.q < 1.0
    }
    fn evaluate(&self, q: &MomentQuery) -> Result<KernelValue> {
        dropout_prelu_kernel(q)
    }
}

impl MomentKernel for DropoutPreluKernel {
    fn name(&self) -> &'static str {
        "dropout-prelu"
    }
    fn accepts(&self, q: &MomentQuery) -> bool {
        !q.activation.is_relu() && q.q < 1.0
    }
    fn evaluate(&self, q: &MomentQuery) -> Result<KernelValue> {
        dropout_prelu_kernel(q)
    }
}

/// Mixture component: ln weight, positive count n, negative count m.
type Parts = Vec<(f64, u64, u64)>;

// Orthant split without dropout: n ~ Binomial(d, 1/2), m = d − n.
fn orthant_parts(d: u64) -> Result<Parts> {
    let lp = binomial_log_pmf_vec(d, 0.5)?;
    Ok(lp.into_iter().enumerate().map(|(n, w)| (w, n as u64, d - n as u64)).collect())
}

// Trinomial split under dropout: t ~ Binomial(d, q) survivors, n | t ~
// Binomial(t, 1/2).
fn trinomial_parts(d: u64, q: f64) -> Result<Parts> {
    let outer = binomial_log_pmf_vec(d, q)?;
    let mut parts = Vec::new();
    for (t, wt) in outer.into_iter().enumerate() {
        if wt == f64::NEG_INFINITY || t == 0 {
            continue;
        }
        let inner = binomial_log_pmf_vec(t as u64, 0.5)?;
        for (n, wn) in inner.into_iter().enumerate() {
            parts.push((wt + wn, n as u64, (t - n) as u64));
        }
    }
    Ok(parts)
}

// Σ_i ω_i E[X_i^{s/2}] with the truncation budget split across components
// against a certified lower bound of the whole sum.
fn mixture(query: &MomentQuery, law: SlopeLaw, parts: &[(f64, u64, u64)]) -> Result<KernelValue> {
    let alpha = query.s / 2.0;
    // Every component is a closed form when the slope is 0 or 1 or α = 1,
    // so no truncation budget is needed.
    let closed = alpha == 1.0 || matches!(law, SlopeLaw::Point(a) if a == 0.0 || a == 1.0);
    let mut moments = SlopeMoments::new(law);
    let mut lower = LogSum::new();
    if !closed {
        for &(w, n, m) in parts {
            if w > f64::NEG_INFINITY {
                lower.add(w + ln_lower_bound(n, m, alpha, &moments)?);
            }
        }
    }
    let ln_lower = if closed { 0.0 } else { lower.value() };
    let ln_share = query.budget.rel_tol.ln() + ln_lower - (parts.len().max(1) as f64).ln();

    let mut total = LogSum::new();
    let mut tail = LogSum::new();
    let mut terms = 0usize;
    for &(w, n, m) in parts {
        if w == f64::NEG_INFINITY {
            continue;
        }
        let part = mixed_moment(n, m, alpha, &mut moments, ln_share - w, query.budget.max_terms)
            .map_err(|e| match e {
                Error::BudgetExceeded { terms, tail_bound } => Error::BudgetExceeded {
                    terms,
                    tail_bound: tail_bound
                        * (w + ln_lower_bound(n, m, alpha, &moments).unwrap_or(0.0) - ln_lower)
                            .exp(),
                },
                other => other,
            })?;
        total.add(w + part.ln_value);
        if part.tail > 0.0 {
            tail.add(w + part.tail.ln());
        }
        terms += part.terms;
    }
    let ln_sum = total.value();
    let log_i = ln_sum - query.s * query.q.ln();
    Ok(KernelValue {
        log_i,
        i: log_i.exp(),
        terms_used: terms,
        tail_bound: (tail.value() - ln_sum).exp(),
    })
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        domain(msg.to_string())
    }
}

/// ReLU kernel I_0(s,d) = 2^{s/2} Σ_{n≥1} C(d,n)2^{−d} Γ(n/2+s/2)/Γ(n/2).
pub fn relu_kernel(query: &MomentQuery) -> Result<KernelValue> {
    query.validate()?;
    require(query.activation.is_relu(), "relu_kernel requires a = 0")?;
    require(query.q == 1.0, "relu_kernel requires q = 1")?;
    let mut v = mixture(query, SlopeLaw::Point(0.0), &orthant_parts(query.d)?)?;
    v.terms_used = query.d as usize;
    Ok(v)
}

/// Linear kernel I_1(s,d) = 2^{s/2} Γ(d/2+s/2)/Γ(d/2).
pub fn linear_kernel(s: f64, d: u64) -> Result<KernelValue> {
    if !(s > 0.0 && s.is_finite()) {
        return domain(format!("moment order must be positive, got {s}"));
    }
    if d == 0 {
        return domain("width d must be at least 1");
    }
    Ok(KernelValue::exact(series::ln_chi_moment(d, s / 2.0)?, 1))
}

/// Parametric ReLU kernel for 0 < a < 1 by the Beta series (hypergeometric
/// series for s > 2).
pub fn prelu_kernel(query: &MomentQuery) -> Result<KernelValue> {
    query.validate()?;
    let a = query
        .activation
        .slope()
        .filter(|a| *a > 0.0 && *a < 1.0)
        .ok_or_else(|| Error::Domain("prelu_kernel requires a fixed slope in (0,1)".into()))?;
    require(query.q == 1.0, "prelu_kernel requires q = 1")?;
    if query.s == 2.0 {
        return Ok(KernelValue::exact(((1.0 + a * a) * query.d as f64 / 2.0).ln(), 1));
    }
    mixture(query, SlopeLaw::Point(a), &orthant_parts(query.d)?)
}

/// Randomized leaky kernel: the weights are averaged over a ~ U[lo, hi].
pub fn randomized_leaky_kernel(query: &MomentQuery) -> Result<KernelValue> {
    query.validate()?;
    require(query.activation.slope().is_none(), "randomized_leaky_kernel requires a slope interval")?;
    require(query.q == 1.0, "randomized_leaky_kernel requires q = 1")?;
    if query.s == 2.0 {
        let ea2 = query.activation.mean_slope_sq();
        return Ok(KernelValue::exact(((1.0 + ea2) * query.d as f64 / 2.0).ln(), 1));
    }
    mixture(query, query.activation.law(), &orthant_parts(query.d)?)
}

/// ReLU kernel under dropout: n ~ Binomial(d, q/2), prefactor q^{−s}.
pub fn dropout_relu_kernel(query: &MomentQuery) -> Result<KernelValue> {
    query.validate()?;
    require(query.activation.is_relu(), "dropout_relu_kernel requires a = 0")?;
    if query.q == 1.0 {
        return relu_kernel(query);
    }
    let lp = binomial_log_pmf_vec(query.d, query.q / 2.0)?;
    let parts: Parts = lp.into_iter().enumerate().map(|(n, w)| (w, n as u64, 0)).collect();
    let mut v = mixture(query, SlopeLaw::Point(0.0), &parts)?;
    v.terms_used = query.d as usize;
    Ok(v)
}

/// Parametric ReLU (or randomized slope) kernel under dropout, mixing over
/// the trinomial law of surviving positive and negative coordinates.
pub fn dropout_prelu_kernel(query: &MomentQuery) -> Result<KernelValue> {
    query.validate()?;
    require(!query.activation.is_relu(), "dropout_prelu_kernel requires a > 0")?;
    if query.q == 1.0 {
        return registry().evaluate(query);
    }
    let (d, q) = (query.d, query.q);
    if query.activation.is_linear() {
        let lp = binomial_log_pmf_vec(d, q)?;
        let parts: Parts = lp.into_iter().enumerate().map(|(t, w)| (w, t as u64, 0)).collect();
        let mut v = mixture(query, SlopeLaw::Point(1.0), &parts)?;
        v.terms_used = d as usize;
        return Ok(v);
    }
    if query.s == 2.0 {
        let ea2 = query.activation.mean_slope_sq();
        return Ok(KernelValue::exact(((1.0 + ea2) * d as f64 / (2.0 * q)).ln(), 1));
    }
    mixture(query, query.activation.law(), &trinomial_parts(d, q)?)
}

/// Critical standard deviation and variance σ̄ = I^{−1/s}.
pub fn critical_sigma(query: &MomentQuery) -> Result<(f64, f64)> {
    let v = kernel(query)?;
    let ln_sigma = -v.log_i / query.s;
    Ok((ln_sigma.exp(), (2.0 * ln_sigma).exp()))
}

/// Largest slope for which the small-a expansion is used.
pub const SMALL_SLOPE_LIMIT: f64 = 0.1;

/// Large-width approximation of σ̄²_a(s,d).
///
/// a = 0 and a = 1 use the dropout-aware formulas; 0 < a ≤ 0.1 uses the
/// small-slope expansion, which exists only without dropout.
pub fn asymptotic_sigma_sq(s: f64, d: u64, a: f64, q: f64) -> Result<f64> {
    if !(s > 0.0 && s <= 2.0) {
        return domain(format!("asymptotics need s in (0,2], got {s}"));
    }
    if d < 2 {
        return domain("asymptotics need d >= 2");
    }
    if !(0.0..=1.0).contains(&a) {
        return domain(format!("slope must lie in [0,1], got {a}"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return domain(format!("keep probability must lie in (0,1], got {q}"));
    }
    let df = d as f64;
    let gap = 2.0 - s;
    if a == 0.0 {
        return Ok(2.0 * q / df + gap * (6.0 - q) / (2.0 * df * df));
    }
    if a == 1.0 {
        return Ok(q / df + (3.0 - q) * gap / (4.0 * df * df));
    }
    if a > SMALL_SLOPE_LIMIT {
        return Err(Error::Unsupported(format!(
            "no large-width formula for slope {a}; use the exact kernel"
        )));
    }
    if q < 1.0 {
        return Err(Error::Unsupported(
            "no small-slope formula under dropout; use the exact kernel".into(),
        ));
    }
    let a2 = a * a;
    let lead = 2.0 / ((1.0 + a2) * df);
    let corr = (5.0 - (12.0 - 2.5 * s) * a2) / (2.0 + (s + 2.0) * a2);
    Ok(lead + corr * gap / (df * df))
}

/// Effective width m²·c of a convolutional layer with m×m filters and c
/// channels.
pub fn conv_effective_width(m: u64, c: u64) -> Result<u64> {
    if m == 0 || c == 0 {
        return domain("filter size and channel count must be positive");
    }
    m.checked_mul(m)
        .and_then(|mm| mm.checked_mul(c))
        .ok_or_else(|| Error::Domain("effective width overflows".into()))
}
