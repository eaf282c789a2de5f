//! `fracinit`: critical variances, kernels, Lyapunov statistics, Monte Carlo
//! runs and verification suites from the command line.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use fracinit::kernels::{
    asymptotic_sigma_sq, critical_sigma, moment_trajectory, registry, solve_preserved_order,
    Activation, MomentQuery,
};
use fracinit::lyapunov::{as_limit, log_stats};
use fracinit::simulate::{
    dominance_check, estimate_moment, run_ensemble, CdfGrid, EnsembleStats, ForwardConfig,
    InputChoice, Sampler, DEFAULT_MAX_CELLS, MIN_TRIALS,
};
use fracinit::specfn::EvalBudget;
use fracinit::verify::{run_suite, Suite, VerifyOptions};
use fracinit::Error;

use output::{fmt_f64, read_cdfs, write_csv, Manifest};

const MAX_CELLS_ENV: &str = "FRACINIT_MAX_CELLS";

#[derive(Parser)]
#[command(name = "fracinit", version, about = "Fractional moment-preserving initialization")]
struct Cli {
    /// Relative tolerance of series truncation.
    #[arg(long, global = true, default_value_t = 1e-12)]
    rel_tol: f64,
    /// Cap on the number of terms of any series.
    #[arg(long, global = true, default_value_t = 10_000)]
    max_terms: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical σ that preserves the s-th moment.
    Sigma(SigmaArgs),
    /// Moment kernel E‖φ(z⊙ε/q)‖^s.
    Kernel(KernelArgs),
    /// Lyapunov drift, CLT variance and limit verdict.
    Lyapunov(LyapunovArgs),
    /// Monte Carlo forward propagation.
    Simulate(SimulateArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Stochastic dominance between two cdf.csv files.
    Dominance(DominanceArgs),
}

#[derive(Args)]
struct LayerArgs {
    /// Layer width.
    #[arg(long)]
    d: u64,
    /// relu | linear | leaky | prelu:<a> | rleaky | rleaky:<lo>,<hi>
    #[arg(long, default_value = "relu")]
    activation: Activation,
    /// Dropout keep probability.
    #[arg(long, default_value_t = 1.0)]
    q: f64,
}

#[derive(Args)]
struct SigmaArgs {
    #[command(flatten)]
    layer: LayerArgs,
    /// Moment order.
    #[arg(long)]
    s: f64,
    /// Use the exact kernel (default).
    #[arg(long, conflicts_with = "asymptotic")]
    exact: bool,
    /// Use the large-width approximation.
    #[arg(long)]
    asymptotic: bool,
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    layer: LayerArgs,
    #[arg(long)]
    s: f64,
}

#[derive(Args)]
struct LyapunovArgs {
    #[command(flatten)]
    layer: LayerArgs,
    /// Weight standard deviation.
    #[arg(long, conflicts_with = "s", required_unless_present = "s")]
    sigma: Option<f64>,
    /// Resolve σ as the critical value for this moment order.
    #[arg(long)]
    s: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Dense,
    Projected,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputArg {
    Basis1,
    Random,
}

#[derive(Args)]
struct SimulateArgs {
    /// Constant layer width.
    #[arg(long, conflicts_with = "widths")]
    d: Option<u64>,
    /// Comma-separated output width of every layer.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<u64>>,
    /// Depth; defaults to the number of widths.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, default_value = "relu")]
    activation: Activation,
    #[arg(long, conflicts_with = "s")]
    sigma: Option<f64>,
    /// Resolve σ as the critical value for this moment order.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Comma-separated layers to record; defaults to the last layer.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Moment order reported in summary.csv; defaults to --s, else 2.
    #[arg(long)]
    order: Option<f64>,
    #[arg(long, value_enum, default_value = "dense")]
    sampler: SamplerArg,
    #[arg(long, value_enum, default_value = "basis1")]
    input: InputArg,
    /// CDF grid as lo,hi,points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    grid: Option<Vec<f64>>,
    /// Re-run the plan stored in a manifest.json.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// kernels | lyapunov | simulate | all
    #[arg(long, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for checks.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-run the plan stored in a manifest.json.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct DominanceArgs {
    /// cdf.csv of the candidate dominating distribution.
    #[arg(long)]
    a: PathBuf,
    /// cdf.csv of the reference distribution.
    #[arg(long)]
    b: PathBuf,
    /// Checkpoint to compare; defaults to the deepest one in both files.
    #[arg(long)]
    checkpoint: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Lib(Error),
    Usage(String),
    Io(String),
    Failed(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Lib(Error::BudgetExceeded { .. } | Error::ResourceLimit { .. }) => 3,
            CliError::Lib(
                Error::Domain(_) | Error::Unsupported(_) | Error::Scope(_) | Error::GridMismatch(_),
            ) => 2,
            CliError::Usage(_) => 2,
            CliError::Lib(_) | CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Lib(e @ Error::BudgetExceeded { .. }) => {
                format!("{e}; raise --max-terms or loosen --rel-tol")
            }
            CliError::Lib(e) => e.to_string(),
            CliError::Usage(m) | CliError::Io(m) => m.clone(),
            CliError::Failed(n) => format!("{n} checks failed"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let budget = EvalBudget::new(cli.rel_tol, cli.max_terms)?;
    match cli.command {
        Command::Sigma(a) => cmd_sigma(a, budget),
        Command::Kernel(a) => cmd_kernel(a, budget),
        Command::Lyapunov(a) => cmd_lyapunov(a, budget),
        Command::Simulate(a) => cmd_simulate(a, budget),
        Command::Verify(a) => cmd_verify(a),
        Command::Dominance(a) => cmd_dominance(a),
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn query(layer: &LayerArgs, s: f64, budget: EvalBudget) -> CliResult<MomentQuery> {
    Ok(MomentQuery::new(layer.d, s, layer.activation)?
        .with_keep(layer.q)?
        .with_budget(budget))
}

fn cmd_sigma(args: SigmaArgs, budget: EvalBudget) -> CliResult<()> {
    let q = query(&args.layer, args.s, budget)?;
    let record = if args.asymptotic {
        let a = args.layer.activation.slope().ok_or_else(|| {
            CliError::Usage("--asymptotic needs a fixed-slope activation".into())
        })?;
        let sigma_sq = asymptotic_sigma_sq(args.s, args.layer.d, a, args.layer.q)?;
        json!({
            "d": args.layer.d, "s": args.s, "activation": args.layer.activation.to_string(),
            "q": args.layer.q, "method": "asymptotic", "sigma": sigma_sq.sqrt(),
            "sigma_sq": sigma_sq, "log_i": null, "tail_bound": null,
        })
    } else {
        let v = registry().evaluate(&q)?;
        let (sigma, sigma_sq) = critical_sigma(&q)?;
        json!({
            "d": args.layer.d, "s": args.s, "activation": args.layer.activation.to_string(),
            "q": args.layer.q, "method": "exact", "sigma": sigma, "sigma_sq": sigma_sq,
            "log_i": v.log_i, "tail_bound": v.tail_bound,
        })
    };
    print_json(&record);
    Ok(())
}

fn cmd_kernel(args: KernelArgs, budget: EvalBudget) -> CliResult<()> {
    let q = query(&args.layer, args.s, budget)?;
    let k = registry().select(&q)?;
    let v = k.evaluate(&q)?;
    print_json(&json!({
        "d": q.d, "s": q.s, "activation": q.activation.to_string(), "q": q.q,
        "kernel": k.name(), "log_i": v.log_i, "i": v.i, "terms_used": v.terms_used,
        "tail_bound": v.tail_bound,
    }));
    Ok(())
}

fn resolve_sigma(
    sigma: Option<f64>,
    s: Option<f64>,
    d: u64,
    activation: Activation,
    q: f64,
    budget: EvalBudget,
) -> CliResult<f64> {
    match (sigma, s) {
        (Some(x), None) => Ok(x),
        (None, Some(s)) => {
            let query = MomentQuery::new(d, s, activation)?.with_keep(q)?.with_budget(budget);
            Ok(critical_sigma(&query)?.0)
        }
        _ => Err(CliError::Usage("give exactly one of --sigma and --s".into())),
    }
}

fn cmd_lyapunov(args: LyapunovArgs, budget: EvalBudget) -> CliResult<()> {
    let l = &args.layer;
    let sigma = resolve_sigma(args.sigma, args.s, l.d, l.activation, l.q, budget)?;
    let stats = log_stats(sigma, l.d, l.activation, &budget)?;
    let limit = as_limit(sigma, l.d, l.activation, l.q, &budget)?;
    let s_star = match solve_preserved_order(sigma, l.d, l.activation, l.q, &budget) {
        Ok(s) => s,
        Err(Error::NoConvergence(_)) => None,
        Err(e) => return Err(e.into()),
    };
    print_json(&json!({
        "d": l.d, "activation": l.activation.to_string(), "q": l.q, "sigma": sigma,
        "mu": stats.mu, "s2": stats.s2, "conditional_on_nonzero": stats.conditional_on_nonzero,
        "preserved_order": s_star, "limit": limit,
    }));
    Ok(())
}

/// Everything needed to reproduce a `simulate` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimulatePlan {
    config: ForwardConfig,
    /// Moment order of the summary columns.
    order: f64,
    /// Order σ was resolved from, if any.
    s: Option<f64>,
    budget: EvalBudget,
}

fn max_cells() -> CliResult<u128> {
    match std::env::var(MAX_CELLS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{MAX_CELLS_ENV} must be a nonnegative integer"))),
        Err(_) => Ok(DEFAULT_MAX_CELLS),
    }
}

fn pick_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

fn simulate_plan(args: &SimulateArgs, budget: EvalBudget) -> CliResult<SimulatePlan> {
    let widths = match (&args.d, &args.widths) {
        (Some(d), None) => vec![*d],
        (None, Some(w)) if !w.is_empty() => w.clone(),
        _ => return Err(CliError::Usage("give exactly one of --d and --widths".into())),
    };
    let layers = match (args.layers, widths.len()) {
        (Some(l), _) => l,
        (None, n) if n > 1 => n,
        _ => return Err(CliError::Usage("--layers is required with --d".into())),
    };
    let sigma = resolve_sigma(args.sigma, args.s, widths[0], args.activation, args.q, budget)?;
    let grid = match &args.grid {
        Some(g) => {
            if g.len() != 3 {
                return Err(CliError::Usage("--grid takes lo,hi,points".into()));
            }
            if g[2] < 2.0 || g[2].fract() != 0.0 {
                return Err(CliError::Usage("grid point count must be an integer >= 2".into()));
            }
            CdfGrid::new(g[0], g[1], g[2] as usize)?
        }
        None => CdfGrid::default(),
    };
    let config = ForwardConfig::new(widths[0], layers, args.activation, sigma)
        .widths(widths)
        .keep(args.q)
        .noise(args.noise_std)
        .trials(args.trials)
        .seed(pick_seed(args.seed))
        .checkpoints(args.checkpoints.clone().unwrap_or_else(|| vec![layers]))
        .input(match args.input {
            InputArg::Basis1 => InputChoice::Basis1,
            InputArg::Random => InputChoice::RandomUnit,
        })
        .sampler(match args.sampler {
            SamplerArg::Dense => Sampler::Dense,
            SamplerArg::Projected => Sampler::Projected,
        })
        .grid(grid);
    Ok(SimulatePlan {
        config,
        order: args.order.or(args.s).unwrap_or(2.0),
        s: args.s,
        budget,
    })
}

fn cmd_simulate(args: SimulateArgs, budget: EvalBudget) -> CliResult<()> {
    let mut plan = match &args.from_manifest {
        Some(path) => {
            let m = Manifest::load(path)?;
            if m.command != "simulate" {
                return Err(CliError::Usage(format!("{} is not a simulate manifest", path.display())));
            }
            serde_json::from_value::<SimulatePlan>(m.config)
                .map_err(|e| CliError::Usage(format!("bad manifest config: {e}")))?
        }
        None => simulate_plan(&args, budget)?,
    };
    plan.config.max_cells = max_cells()?;
    let start = Instant::now();
    let stats = run_ensemble(&plan.config)?;
    std::fs::create_dir_all(&args.out)?;
    let files = write_simulation(&args.out, &plan, &stats)?;
    let manifest = Manifest::new("simulate", plan.config.seed, &plan, start.elapsed(), &args.out, &files)?;
    manifest.save(&args.out.join("manifest.json"))?;
    print_json(&json!({
        "seed": plan.config.seed, "sigma": plan.config.sigma, "trials": plan.config.trials,
        "out": args.out.display().to_string(), "files": files,
    }));
    Ok(())
}

fn layer_widths(config: &ForwardConfig) -> Vec<u64> {
    (1..=config.layers).map(|k| config.width(k) as u64).collect()
}

// P(x^(k) = 0) when each layer independently kills a nonzero input.
fn predicted_zero_fractions(config: &ForwardConfig) -> Vec<f64> {
    let mut ln_alive = 0.0;
    layer_widths(config)
        .into_iter()
        .map(|d| {
            let dead_unit = if config.noise_std > 0.0 {
                0.0
            } else if config.activation.is_relu() {
                1.0 - config.q / 2.0
            } else {
                1.0 - config.q
            };
            if dead_unit > 0.0 {
                ln_alive += (-(d as f64 * dead_unit.ln()).exp()).ln_1p();
            }
            -ln_alive.exp_m1()
        })
        .collect()
}

fn write_simulation(dir: &Path, plan: &SimulatePlan, stats: &EnsembleStats) -> CliResult<Vec<String>> {
    let cfg = &plan.config;
    let mut rows = Vec::new();
    for cp in &stats.checkpoints {
        for (t, lr) in cp.log_ratios.iter().enumerate() {
            rows.push(vec![
                t.to_string(),
                cp.layer.to_string(),
                fmt_f64(*lr),
                (!lr.is_finite()).to_string(),
            ]);
        }
    }
    write_csv(&dir.join("lognorm_samples.csv"), &["trial", "checkpoint", "logratio", "is_zero"], &rows)?;

    let predicted_moment = if cfg.noise_std > 0.0 {
        None
    } else {
        match moment_trajectory(&layer_widths(cfg), plan.order, cfg.sigma, cfg.activation, cfg.q, &plan.budget) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("warning: no moment prediction: {e}");
                None
            }
        }
    };
    let zero_pred = predicted_zero_fractions(cfg);
    let mut rows = Vec::new();
    for cp in &stats.checkpoints {
        let n = cp.log_ratios.len() as f64;
        let f = cp.zero_count as f64 / n;
        let (moment, se) = if cp.log_ratios.len() >= MIN_TRIALS {
            let (m, se) = estimate_moment(stats, plan.order, cp.layer)?;
            (fmt_f64(m), fmt_f64(se))
        } else {
            (String::new(), String::new())
        };
        let nonzero: Vec<f64> = cp.nonzero().collect();
        let (mean_lr, sd_lr) = if nonzero.len() >= 2 {
            let m = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
            let v = nonzero.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (nonzero.len() - 1) as f64;
            (fmt_f64(m), fmt_f64(v.sqrt()))
        } else {
            (String::new(), String::new())
        };
        rows.push(vec![
            cp.layer.to_string(),
            cp.log_ratios.len().to_string(),
            cp.zero_count.to_string(),
            fmt_f64(f),
            fmt_f64((f * (1.0 - f) / n).sqrt()),
            fmt_f64(zero_pred[cp.layer - 1]),
            fmt_f64(plan.order),
            moment,
            se,
            predicted_moment.as_ref().map(|t| fmt_f64(t[cp.layer - 1])).unwrap_or_default(),
            mean_lr,
            sd_lr,
        ]);
    }
    write_csv(
        &dir.join("summary.csv"),
        &[
            "checkpoint",
            "trials",
            "zero_count",
            "zero_fraction",
            "zero_fraction_se",
            "predicted_zero_fraction",
            "order",
            "moment",
            "moment_se",
            "predicted_moment",
            "mean_logratio",
            "sd_logratio",
        ],
        &rows,
    )?;

    let mut rows = Vec::new();
    for cp in &stats.checkpoints {
        for (x, f) in cp.cdf.grid.values().into_iter().zip(&cp.cdf.values) {
            rows.push(vec![cp.layer.to_string(), cp.cdf.n.to_string(), fmt_f64(x), fmt_f64(*f)]);
        }
    }
    write_csv(&dir.join("cdf.csv"), &["checkpoint", "n", "x", "cdf"], &rows)?;
    Ok(vec!["lognorm_samples.csv".into(), "summary.csv".into(), "cdf.csv".into()])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VerifyPlan {
    suite: Suite,
    options: VerifyOptions,
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let mut plan = match &args.from_manifest {
        Some(path) => {
            let m = Manifest::load(path)?;
            if m.command != "verify" {
                return Err(CliError::Usage(format!("{} is not a verify manifest", path.display())));
            }
            serde_json::from_value::<VerifyPlan>(m.config)
                .map_err(|e| CliError::Usage(format!("bad manifest config: {e}")))?
        }
        None => VerifyPlan {
            suite: args.suite,
            options: VerifyOptions {
                trials: args.trials,
                seed: pick_seed(args.seed),
                max_cells: DEFAULT_MAX_CELLS,
            },
        },
    };
    plan.options.max_cells = max_cells()?;
    let start = Instant::now();
    let rows = run_suite(plan.suite, &plan.options)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    for r in &rows {
        println!(
            "{} {}: observed {} predicted {} tolerance {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.observed,
            r.predicted,
            r.tolerance
        );
    }
    println!("{} of {} checks passed", rows.len() - failed, rows.len());
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.name.clone(),
                    fmt_f64(r.predicted),
                    fmt_f64(r.observed),
                    fmt_f64(r.tolerance),
                    r.pass.to_string(),
                ]
            })
            .collect();
        write_csv(&out.join("checks.csv"), &["name", "predicted", "observed", "tolerance", "pass"], &table)?;
        let files = vec!["checks.csv".to_string()];
        Manifest::new("verify", plan.options.seed, &plan, start.elapsed(), out, &files)?
            .save(&out.join("manifest.json"))?;
    }
    if failed > 0 {
        return Err(CliError::Failed(failed));
    }
    Ok(())
}

fn cmd_dominance(args: DominanceArgs) -> CliResult<()> {
    let a = read_cdfs(&args.a)?;
    let b = read_cdfs(&args.b)?;
    let checkpoint = match args.checkpoint {
        Some(k) => k,
        None => *a
            .keys()
            .rev()
            .find(|k| b.contains_key(k))
            .ok_or_else(|| CliError::Usage("the files share no checkpoint".into()))?,
    };
    let (ca, cb) = match (a.get(&checkpoint), b.get(&checkpoint)) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(CliError::Usage(format!("checkpoint {checkpoint} missing from an input"))),
    };
    let dom = dominance_check(ca, cb)?;
    print_json(&json!({
        "checkpoint": checkpoint, "dominant_fraction": dom.dominant_fraction,
        "max_violation": dom.max_violation, "band": dom.band, "points": dom.points,
    }));
    Ok(())
}
