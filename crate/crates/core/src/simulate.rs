//! Monte Carlo forward propagation x^(k+1) = φ((W x^(k))⊙ε/q) + ξ with
//! i.i.d. N(0, σ²) weights, and the estimators that confront the analytical
//! predictions: fractional moments, log-normality, zero outputs, stochastic
//! dominance and heavy tails.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};
use crate::kernels::Activation;
use crate::lyapunov::LogNormStats;
use crate::rng::{DrawKind, StreamRng};

/// Default cap on trials·Σ_k d_{k−1}·d_k.
pub const DEFAULT_MAX_CELLS: u128 = 10_000_000_000_000;

/// Fewest trials accepted by the moment estimator.
pub const MIN_TRIALS: usize = 100;

/// Depth below which the CLT comparison is flagged.
pub const RECOMMENDED_DEPTH: usize = 50;

/// Asymptotic Kolmogorov–Smirnov coefficient at the 1% level.
pub const KS_COEFF_1PCT: f64 = 1.6276;

/// Input vector x^(0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputChoice {
    /// First standard basis vector.
    Basis1,
    /// A fresh uniformly random unit vector per trial.
    RandomUnit,
    Vector(Vec<f64>),
}

/// How W·x is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Every weight is drawn and multiplied in (streaming matvec).
    Dense,
    /// W·x is drawn directly as σ‖x‖·z, z ~ N(0, I), which has the same law
    /// given x and costs O(d) per layer.
    Projected,
}

/// Fixed evaluation grid of an empirical CDF of log-ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for CdfGrid {
    fn default() -> Self {
        Self {
            lo: -50.0,
            hi: 50.0,
            points: 2001,
        }
    }
}

impl CdfGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 2 {
            return domain(format!("invalid grid [{lo}, {hi}] with {points} points"));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }
}

/// Simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    /// Output width of every layer; a single entry means constant width. The
    /// input dimension is `widths[0]`.
    pub widths: Vec<u64>,
    pub layers: usize,
    pub activation: Activation,
    pub sigma: f64,
    pub q: f64,
    pub noise_std: f64,
    pub trials: usize,
    pub seed: u64,
    /// Sorted layer indices in 1..=layers.
    pub checkpoints: Vec<usize>,
    pub x0: InputChoice,
    pub sampler: Sampler,
    pub max_cells: u128,
    pub grid: CdfGrid,
}

impl ForwardConfig {
    /// Constant width `d`, checkpoint at the last layer, no dropout or noise.
    pub fn new(d: u64, layers: usize, activation: Activation, sigma: f64) -> Self {
        Self {
            widths: vec![d],
            layers,
            activation,
            sigma,
            q: 1.0,
            noise_std: 0.0,
            trials: 1000,
            seed: 0,
            checkpoints: vec![layers],
            x0: InputChoice::Basis1,
            sampler: Sampler::Dense,
            max_cells: DEFAULT_MAX_CELLS,
            grid: CdfGrid::default(),
        }
    }

    pub fn trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn checkpoints(mut self, checkpoints: Vec<usize>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    pub fn keep(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn input(mut self, x0: InputChoice) -> Self {
        self.x0 = x0;
        self
    }

    pub fn sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn widths(mut self, widths: Vec<u64>) -> Self {
        self.widths = widths;
        self
    }

    pub fn grid(mut self, grid: CdfGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn max_cells(mut self, max_cells: u128) -> Self {
        self.max_cells = max_cells;
        self
    }

    /// Output width of layer `k` (1-based).
    pub fn width(&self, k: usize) -> usize {
        if self.widths.len() == 1 {
            self.widths[0] as usize
        } else {
            self.widths[k - 1] as usize
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.x0 {
            InputChoice::Vector(v) => v.len(),
            _ => self.widths[0] as usize,
        }
    }

    /// trials · Σ_k d_{k−1}·d_k.
    pub fn cells(&self) -> u128 {
        let mut prev = self.input_dim() as u128;
        let mut per_trial = 0u128;
        for k in 1..=self.layers {
            let w = self.width(k) as u128;
            per_trial += prev * w;
            prev = w;
        }
        per_trial * self.trials as u128
    }

    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        if self.layers == 0 {
            return domain("need at least one layer");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return domain("widths must be nonempty and positive");
        }
        if self.widths.len() != 1 && self.widths.len() != self.layers {
            return domain(format!(
                "got {} widths for {} layers",
                self.widths.len(),
                self.layers
            ));
        }
        if self.trials == 0 {
            return domain("need at least one trial");
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return domain(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return domain(format!("keep probability must lie in (0,1], got {}", self.q));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return domain("noise_std must be nonnegative");
        }
        if self.noise_std > 0.0 && !self.activation.is_linear() {
            return Err(Error::Scope("additive noise is only modelled for linear activation".into()));
        }
        if self.checkpoints.is_empty()
            || self.checkpoints.windows(2).any(|w| w[0] >= w[1])
            || self.checkpoints[0] == 0
            || *self.checkpoints.last().expect("nonempty") > self.layers
        {
            return domain("checkpoints must be strictly increasing within 1..=layers");
        }
        if let InputChoice::Vector(v) = &self.x0 {
            if v.len() != self.widths[0] as usize {
                return domain("explicit input must have dimension widths[0]");
            }
            if v.iter().any(|x| !x.is_finite()) || v.iter().all(|x| *x == 0.0) {
                return domain("explicit input must be finite and nonzero");
            }
        }
        let cells = self.cells();
        if cells > self.max_cells {
            return Err(Error::ResourceLimit {
                cells,
                limit: self.max_cells,
            });
        }
        Ok(())
    }
}

/// Empirical CDF of nonzero log-ratios on a fixed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub grid: CdfGrid,
    pub values: Vec<f64>,
    /// Number of samples behind the CDF.
    pub n: usize,
}

impl EmpiricalCdf {
    pub fn from_samples(grid: CdfGrid, samples: &[f64]) -> Self {
        let mut sorted: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let values = grid
            .values()
            .into_iter()
            .map(|x| {
                if n == 0 {
                    0.0
                } else {
                    sorted.partition_point(|v| *v <= x) as f64 / n as f64
                }
            })
            .collect();
        Self { grid, values, n }
    }
}

/// Samples recorded at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub layer: usize,
    /// ln(‖x^(k)‖/‖x^(0)‖) per trial, −∞ for a zero output.
    pub log_ratios: Vec<f64>,
    pub zero_count: usize,
    /// CDF of the nonzero log-ratios.
    pub cdf: EmpiricalCdf,
}

impl CheckpointStats {
    pub fn nonzero(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_ratios.iter().copied().filter(|x| x.is_finite())
    }
}

/// Monte Carlo summary of an ensemble of forward passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub trials: usize,
    /// ln‖x^(0)‖ (identical across trials).
    pub ln_input_norm: f64,
    pub checkpoints: Vec<CheckpointStats>,
}

impl EnsembleStats {
    pub fn checkpoint(&self, layer: usize) -> Result<&CheckpointStats> {
        self.checkpoints
            .iter()
            .find(|c| c.layer == layer)
            .ok_or_else(|| Error::Domain(format!("layer {layer} was not recorded")))
    }
}

fn uniform01(rng: &mut StreamRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn input_vector(config: &ForwardConfig, trial: u64) -> Vec<f64> {
    let d = config.input_dim();
    match &config.x0 {
        InputChoice::Basis1 => {
            let mut v = vec![0.0; d];
            v[0] = 1.0;
            v
        }
        InputChoice::Vector(v) => v.clone(),
        InputChoice::RandomUnit => {
            let mut rng = StreamRng::new(config.seed, trial, 0, DrawKind::Input);
            loop {
                let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = norm(&v);
                if n > 0.0 {
                    return v.into_iter().map(|x| x / n).collect();
                }
            }
        }
    }
}

// One forward pass; returns the log-ratio at each checkpoint.
fn run_trial(config: &ForwardConfig, trial: u64) -> Vec<f64> {
    let x0 = input_vector(config, trial);
    let ln_x0 = norm(&x0).ln();
    let noisy = config.noise_std > 0.0;
    // Without noise x is kept at unit norm and its scale tracked in `ln_scale`.
    let mut x: Vec<f64> = if noisy {
        x0.clone()
    } else {
        x0.iter().map(|v| v / ln_x0.exp()).collect()
    };
    let mut ln_scale = if noisy { 0.0 } else { ln_x0 };
    let mut out = Vec::with_capacity(config.checkpoints.len());
    let mut next_cp = 0;
    let mut dead = false;
    let mut y = Vec::new();

    for k in 1..=config.layers {
        if dead {
            break;
        }
        let d_out = config.width(k);
        y.clear();
        y.resize(d_out, 0.0);
        let mut wrng = StreamRng::new(config.seed, trial, k as u64, DrawKind::Weights);
        match config.sampler {
            Sampler::Dense => {
                for yi in y.iter_mut() {
                    let mut acc = 0.0;
                    for xj in &x {
                        let w: f64 = StandardNormal.sample(&mut wrng);
                        acc += w * xj;
                    }
                    *yi = config.sigma * acc;
                }
            }
            Sampler::Projected => {
                let scale = config.sigma * norm(&x);
                for yi in y.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut wrng);
                    *yi = scale * z;
                }
            }
        }
        if config.q < 1.0 {
            let mut mrng = StreamRng::new(config.seed, trial, k as u64, DrawKind::Mask);
            for yi in y.iter_mut() {
                *yi = if uniform01(&mut mrng) < config.q { *yi / config.q } else { 0.0 };
            }
        }
        let slope = match config.activation {
            Activation::ParamRelu { a } => a,
            Activation::RandomizedLeaky { lo, hi } => {
                let mut srng = StreamRng::new(config.seed, trial, k as u64, DrawKind::Slope);
                lo + (hi - lo) * uniform01(&mut srng)
            }
        };
        Activation::apply_slope(slope, &mut y);
        if noisy {
            let mut nrng = StreamRng::new(config.seed, trial, k as u64, DrawKind::Noise);
            for yi in y.iter_mut() {
                let xi: f64 = StandardNormal.sample(&mut nrng);
                *yi += config.noise_std * xi;
            }
            std::mem::swap(&mut x, &mut y);
        } else {
            let n = norm(&y);
            if n == 0.0 {
                dead = true;
            } else {
                ln_scale += n.ln();
                x.clear();
                x.extend(y.iter().map(|v| v / n));
            }
        }
        if next_cp < config.checkpoints.len() && config.checkpoints[next_cp] == k {
            let lr = if dead {
                f64::NEG_INFINITY
            } else if noisy {
                norm(&x).ln() - ln_x0
            } else {
                ln_scale - ln_x0
            };
            out.push(lr);
            next_cp += 1;
        }
    }
    out.resize(config.checkpoints.len(), f64::NEG_INFINITY);
    out
}

/// Run `config.trials` independent forward passes.
///
/// Trials run in parallel; results are gathered in trial order so the output
/// is bitwise identical for any thread count.
pub fn run_ensemble(config: &ForwardConfig) -> Result<EnsembleStats> {
    config.validate()?;
    let records: Vec<Vec<f64>> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect();
    let ln_input_norm = norm(&input_vector(config, 0)).ln();
    let checkpoints = config
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, &layer)| {
            let log_ratios: Vec<f64> = records.iter().map(|r| r[i]).collect();
            let zero_count = log_ratios.iter().filter(|x| !x.is_finite()).count();
            let cdf = EmpiricalCdf::from_samples(config.grid, &log_ratios);
            CheckpointStats {
                layer,
                log_ratios,
                zero_count,
                cdf,
            }
        })
        .collect();
    Ok(EnsembleStats {
        trials: config.trials,
        ln_input_norm,
        checkpoints,
    })
}

/// Mean of (‖x^(k)‖/‖x^(0)‖)^s over trials (zeros count as 0) and its
/// standard error.
pub fn estimate_moment(stats: &EnsembleStats, s: f64, checkpoint: usize) -> Result<(f64, f64)> {
    let cp = stats.checkpoint(checkpoint)?;
    let n = cp.log_ratios.len();
    if n < MIN_TRIALS {
        return Err(Error::InsufficientSamples {
            needed: MIN_TRIALS,
            got: n,
        });
    }
    let values: Vec<f64> = cp.log_ratios.iter().map(|lr| (s * lr).exp()).collect();
    Ok(mean_and_se(&values))
}

/// Sample mean and its i.i.d. standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// One-sample Kolmogorov–Smirnov distance to N(0,1).
pub fn ks_standard_normal(samples: &[f64]) -> f64 {
    let mut z = samples.to_vec();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal_cdf(*x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    KS_COEFF_1PCT / (n as f64).sqrt()
}

/// Comparison of standardized log-norms with N(0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub ks_stat: f64,
    pub mean_z: f64,
    pub var_ratio: f64,
    pub n: usize,
    /// Set when the checkpoint is shallower than [`RECOMMENDED_DEPTH`].
    pub shallow: bool,
}

/// Standardize nonzero log-ratios by (μk, s²k) and compare with N(0,1).
pub fn log_norm_gaussian_test(
    stats: &EnsembleStats,
    checkpoint: usize,
    predicted: &LogNormStats,
) -> Result<GaussianFit> {
    let cp = stats.checkpoint(checkpoint)?;
    let k = checkpoint as f64;
    let sd = (predicted.s2 * k).sqrt();
    let z: Vec<f64> = cp.nonzero().map(|lr| (lr - predicted.mu * k) / sd).collect();
    if z.len() < MIN_TRIALS {
        return Err(Error::InsufficientSamples {
            needed: MIN_TRIALS,
            got: z.len(),
        });
    }
    let n = z.len() as f64;
    let mean_z = z.iter().sum::<f64>() / n;
    let var_ratio = z.iter().map(|v| (v - mean_z) * (v - mean_z)).sum::<f64>() / (n - 1.0);
    Ok(GaussianFit {
        ks_stat: ks_standard_normal(&z),
        mean_z,
        var_ratio,
        n: z.len(),
        shallow: checkpoint < RECOMMENDED_DEPTH,
    })
}

/// Fraction of zero outputs and its Wald standard error.
pub fn empirical_zero_fraction(stats: &EnsembleStats, checkpoint: usize) -> Result<(f64, f64)> {
    let cp = stats.checkpoint(checkpoint)?;
    let n = cp.log_ratios.len() as f64;
    let f = cp.zero_count as f64 / n;
    Ok((f, (f * (1.0 - f) / n).sqrt()))
}

/// Outcome of a first-order stochastic dominance comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    /// Fraction of in-support grid points with F_a ≤ F_b + band.
    pub dominant_fraction: f64,
    /// max(0, max_x F_a(x) − F_b(x)).
    pub max_violation: f64,
    /// Two-sample band at the 1% level.
    pub band: f64,
    /// Grid points inside the joint support.
    pub points: usize,
}

/// Does `a` dominate `b` (is F_a below F_b up to sampling error)?
///
/// Only grid points where at least one CDF is strictly inside (0,1) count.
pub fn dominance_check(a: &EmpiricalCdf, b: &EmpiricalCdf) -> Result<Dominance> {
    if a.grid != b.grid || a.values.len() != b.values.len() {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    if a.n == 0 || b.n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let (na, nb) = (a.n as f64, b.n as f64);
    let band = KS_COEFF_1PCT * ((na + nb) / (na * nb)).sqrt();
    let mut points = 0usize;
    let mut good = 0usize;
    let mut worst = 0.0f64;
    for (fa, fb) in a.values.iter().zip(&b.values) {
        let inside = fa.max(*fb) > 0.0 && fa.min(*fb) < 1.0;
        if !inside {
            continue;
        }
        points += 1;
        if *fa <= fb + band {
            good += 1;
        }
        worst = worst.max(fa - fb);
    }
    Ok(Dominance {
        dominant_fraction: if points == 0 { 1.0 } else { good as f64 / points as f64 },
        max_violation: worst,
        band,
        points,
    })
}

/// Median-of-means of `values[..n]` over `blocks` equal blocks.
pub fn median_of_means(values: &[f64], n: usize, blocks: usize) -> Result<f64> {
    if blocks == 0 || n < blocks || n > values.len() {
        return domain(format!("cannot split {n} of {} samples into {blocks} blocks", values.len()));
    }
    let size = n / blocks;
    let mut means: Vec<f64> = values[..size * blocks]
        .chunks(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let mid = means.len() / 2;
    Ok(if means.len() % 2 == 1 {
        means[mid]
    } else {
        0.5 * (means[mid - 1] + means[mid])
    })
}

/// Heavy-tail diagnostics of the stationary noisy linear network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub s: f64,
    pub low_order: f64,
    pub high_order: f64,
    pub sizes: Vec<usize>,
    pub low_moments: Vec<f64>,
    pub high_moments: Vec<f64>,
    /// max/min − 1 of the low-order moments.
    pub low_spread: f64,
    pub stable: bool,
    pub increasing: bool,
    /// Least-squares slope of ln P(R > r) against ln r over the top tail.
    pub survival_slope: f64,
}

/// Blocks used by the median-of-means moment estimator in
/// [`noisy_linear_tail`].
pub const TAIL_BLOCKS: usize = 256;

/// Check that the stationary output of a noisy linear network with
/// σ = σ̄_1(s, d) has a stable moment of order s/2 but a diverging moment of
/// order min(2, s + 1/2), using median-of-means estimates at sample sizes
/// base·2^j, j = 0..=doublings.
pub fn noisy_linear_tail(
    config: &ForwardConfig,
    s: f64,
    base: usize,
    doublings: u32,
) -> Result<TailReport> {
    if !config.activation.is_linear() {
        return Err(Error::Scope("heavy-tail analysis needs linear activation".into()));
    }
    if config.noise_std <= 0.0 {
        return Err(Error::Scope("heavy-tail analysis needs additive noise".into()));
    }
    if !(s > 0.0 && s < 2.0) {
        return domain(format!("heavy-tail order must lie in (0,2), got {s}"));
    }
    let sizes: Vec<usize> = (0..=doublings).map(|j| base << j).collect();
    let total = *sizes.last().expect("at least one size");
    if base < TAIL_BLOCKS {
        return domain("base sample size must be at least the block count");
    }
    let mut cfg = config.clone();
    cfg.trials = total;
    cfg.checkpoints = vec![cfg.layers];
    let stats = run_ensemble(&cfg)?;
    let lr = &stats.checkpoints[0].log_ratios;
    let (low_order, high_order) = (s / 2.0, (s + 0.5).min(2.0));
    let low: Vec<f64> = lr.iter().map(|x| (low_order * x).exp()).collect();
    let high: Vec<f64> = lr.iter().map(|x| (high_order * x).exp()).collect();
    let low_moments = sizes
        .iter()
        .map(|&n| median_of_means(&low, n, TAIL_BLOCKS))
        .collect::<Result<Vec<_>>>()?;
    let high_moments = sizes
        .iter()
        .map(|&n| median_of_means(&high, n, TAIL_BLOCKS))
        .collect::<Result<Vec<_>>>()?;
    let lo = low_moments.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = low_moments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let low_spread = hi / lo - 1.0;
    Ok(TailReport {
        s,
        low_order,
        high_order,
        sizes,
        stable: low_spread < 0.1,
        increasing: high_moments.windows(2).all(|w| w[1] > w[0]),
        low_moments,
        high_moments,
        low_spread,
        survival_slope: survival_slope(lr, 0.01),
    })
}

/// Slope of ln(empirical survival) vs ln(r) over the largest `top` fraction
/// of the samples, from log-values.
pub fn survival_slope(log_values: &[f64], top: f64) -> f64 {
    let mut v: Vec<f64> = log_values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let n = v.len();
    let m = ((n as f64 * top) as usize).max(2).min(n);
    let xs: Vec<f64> = v[..m].to_vec();
    let ys: Vec<f64> = (0..m).map(|i| ((i + 1) as f64 / n as f64).ln()).collect();
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
