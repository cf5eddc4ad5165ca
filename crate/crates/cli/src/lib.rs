//! The `rct` command line: data generation, fitting, cross-validation,
//! benchmarking and self-checks.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime failures (including failed checks).

pub mod checks;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rct_core::baselines::{fit_adaptive_lasso, fit_lasso, LassoProblem};
use rct_core::datagen::{Case, ModelSampler, ModelSpec};
use rct_core::evaluation::{
    cross_validate, eta_from_lasso, eta_grid_from_pilot, fit_metrics, lambda_grid, rct_lambda_max, rct_path,
    run_benchmark, tune_lasso, BenchmarkConfig, CVResult, Method, MetricsReport, OmegaRule, TuningRule,
};
use rct_core::io::{load_dataset, load_groups, save_dataset, sidecar_path, Sidecar};
use rct_core::{fit_rct, Dataset, FitResult, GroupPartition, HuberParams, ProxThreshold, SolverConfig};
use serde::Serialize;

use config::{parse_model_case, usage, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rct_core::Error> for CliError {
    fn from(e: rct_core::Error) -> Self {
        match e {
            rct_core::Error::Parameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "rct", version, about = "Robust regression with smooth coefficient thresholding")]
struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: RCT_WORKERS, then the available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset from one of the ten models.
    Generate(GenerateArgs),
    /// Fit one estimator at fixed parameters.
    Fit(FitArgs),
    /// Cross-validate (lambda, eta) and optionally refit.
    Cv(CvArgs),
    /// Replicated simulation study.
    Benchmark(BenchmarkArgs),
    /// Numerical self-checks.
    Check(CheckArgs),
}

#[derive(Debug, Args, Default)]
struct SolverFlags {
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Radius of the l2-ball constraint (`inf` disables it).
    #[arg(long, allow_negative_numbers = true)]
    radius: Option<f64>,
    /// Pseudo-Huber scale; unset uses the MAD of the response.
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Keep the step fixed instead of halving on insufficient decrease.
    #[arg(long)]
    no_backtrack: bool,
    /// `step-times-lambda` (default) or `lambda-over-step`.
    #[arg(long, value_parser = parse_prox_threshold)]
    prox_threshold: Option<ProxThreshold>,
    #[arg(long, allow_negative_numbers = true)]
    lasso_tol: Option<f64>,
    #[arg(long)]
    lasso_max_iter: Option<usize>,
}

impl SolverFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.solver;
        set(&mut s.lambda, self.lambda);
        set(&mut s.eta, self.eta);
        set(&mut s.tau, self.tau);
        set(&mut s.step, self.step);
        set(&mut s.radius, self.radius);
        if self.omega.is_some() {
            s.omega = self.omega;
        }
        set(&mut s.max_iter, self.max_iter);
        set(&mut s.tol, self.tol);
        if self.no_backtrack {
            s.backtrack = false;
        }
        set(&mut s.prox_threshold, self.prox_threshold);
        set(&mut cfg.lasso.tol, self.lasso_tol);
        set(&mut cfg.lasso.max_iter, self.lasso_max_iter);
    }
}

fn parse_prox_threshold(s: &str) -> Result<ProxThreshold, String> {
    match s {
        "step-times-lambda" => Ok(ProxThreshold::StepTimesLambda),
        "lambda-over-step" => Ok(ProxThreshold::LambdaOverStep),
        _ => Err("expected step-times-lambda or lambda-over-step".into()),
    }
}

#[derive(Debug, Args, Default)]
struct TuningFlags {
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    lambda_count: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    lambda_ratio: Option<f64>,
    /// Comma-separated quantiles of the lasso pilot forming the eta grid.
    #[arg(long, value_delimiter = ',')]
    eta_quantiles: Option<Vec<f64>>,
    /// `cv` (tune lambda and eta) or `lasso-quantile` (fix eta, tune lambda).
    #[arg(long, value_parser = parse_rule)]
    rule: Option<TuningRule>,
    #[arg(long)]
    eta_quantile: Option<f64>,
    /// `response` or `pilot-residuals`; used when --omega is not given.
    #[arg(long, value_parser = parse_omega_rule)]
    omega_rule: Option<OmegaRule>,
    /// Use step = c / L with L the top eigenvalue of X^T X / n.
    #[arg(long, allow_negative_numbers = true)]
    step_scale: Option<f64>,
}

impl TuningFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.tuning;
        set(&mut t.folds, self.folds);
        set(&mut t.lambda_count, self.lambda_count);
        set(&mut t.lambda_ratio, self.lambda_ratio);
        set(&mut t.eta_quantiles, self.eta_quantiles.clone());
        set(&mut t.rule, self.rule);
        set(&mut t.eta_quantile, self.eta_quantile);
        set(&mut t.omega_rule, self.omega_rule);
        if self.step_scale.is_some() {
            t.step_scale = self.step_scale;
        }
    }
}

fn parse_rule(s: &str) -> Result<TuningRule, String> {
    match s {
        "cv" => Ok(TuningRule::Cv),
        "lasso-quantile" => Ok(TuningRule::LassoQuantile),
        _ => Err("expected cv or lasso-quantile".into()),
    }
}

fn parse_omega_rule(s: &str) -> Result<OmegaRule, String> {
    match s {
        "response" => Ok(OmegaRule::Response),
        "pilot-residuals" => Ok(OmegaRule::PilotResiduals),
        _ => Err("expected response or pilot-residuals".into()),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Model id, 1-10.
    #[arg(long)]
    model: Option<u8>,
    #[arg(long)]
    case: Option<Case>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; the metadata sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Dataset CSV with a `y` column.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Groups file (one group of 0-based indices per line) or `singleton`.
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Explicit comma-separated lambda grid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambdas: Option<Vec<f64>>,
    /// Explicit comma-separated eta grid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    etas: Option<Vec<f64>>,
    /// Skip the full-data refit at the selected pair.
    #[arg(long)]
    no_refit: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    tuning: TuningFlags,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Comma-separated model/case entries such as `3a,7a`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Comma-separated methods: rct, lasso, adalasso.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, alias = "reps")]
    replications: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    tuning: TuningFlags,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the outcomes as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Test hook: perturb the analytic gradient so the gradient check fails.
    #[arg(long, hide = true)]
    break_gradient: bool,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<i32> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    let workers = resolve_workers(cfg.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(move || match cli.command {
        Command::Generate(a) => cmd_generate(cfg, a),
        Command::Fit(a) => cmd_fit(cfg, a),
        Command::Cv(a) => cmd_cv(cfg, a),
        Command::Benchmark(a) => cmd_benchmark(cfg, a),
        Command::Check(a) => cmd_check(cfg, a),
    })
}

fn resolve_workers(configured: Option<usize>) -> CliResult<usize> {
    let n = match configured {
        Some(n) => n,
        None => match std::env::var("RCT_WORKERS") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("RCT_WORKERS must be a positive integer, got {v:?}")))?,
            Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    if n == 0 {
        return Err(CliError::Usage("workers must be at least 1".into()));
    }
    Ok(n)
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_generate(mut cfg: RunConfig, a: GenerateArgs) -> CliResult<i32> {
    let g = &mut cfg.generate;
    set(&mut g.model, a.model);
    set(&mut g.case, a.case);
    if a.n.is_some() {
        g.n = a.n;
    }
    if a.p.is_some() {
        g.p = a.p;
    }
    set(&mut g.seed, a.seed);
    set(&mut g.out, a.out);
    if !(1..=10).contains(&g.model) {
        return Err(CliError::Usage(format!("unknown model {}; valid ids are 1-10", g.model)));
    }
    let (n0, p0) = ModelSpec::default_size(g.model);
    let (n, p) = (g.n.unwrap_or(n0), g.p.unwrap_or(p0));
    let data = ModelSampler::new(g.model, g.case, n, p)?.sample(g.seed)?;
    save_dataset(&data, &g.out)?;

    // the sidecar also echoes the resolved configuration
    let meta_path = sidecar_path(&g.out);
    let mut sidecar = serde_json::to_value(Sidecar::of(&data)).map_err(runtime)?;
    sidecar["config"] = serde_json::to_value(&cfg).map_err(runtime)?;
    write_json(&meta_path, &sidecar)?;

    let support = data.truth().map_or(0, |t| t.iter().filter(|v| **v != 0.0).count());
    println!(
        "generated model {}{}: n={} p={} support={} seed={} -> {}",
        cfg.generate.model,
        cfg.generate.case,
        n,
        p,
        support,
        cfg.generate.seed,
        cfg.generate.out.display()
    );
    Ok(0)
}

fn load_input(data: &Option<PathBuf>, standardize: bool) -> CliResult<(PathBuf, Dataset)> {
    let path = data
        .clone()
        .ok_or_else(|| CliError::Usage("no dataset given; pass --data".into()))?;
    let loaded = load_dataset(&path)?;
    Ok((path, if standardize { loaded.standardized() } else { loaded }))
}

fn resolve_groups(spec: &Option<String>, data: &Dataset) -> CliResult<GroupPartition> {
    match spec.as_deref() {
        Some("singleton") => Ok(GroupPartition::singletons(data.p())),
        Some(path) => Ok(load_groups(Path::new(path), data.p())?),
        None => Ok(data
            .groups()
            .cloned()
            .unwrap_or_else(|| GroupPartition::singletons(data.p()))),
    }
}

/// Metrics against the generating coefficients, when they are known and the
/// design has not been rescaled.
fn metrics_for(fit: &FitResult, data: &Dataset, groups: &GroupPartition, standardized: bool) -> CliResult<Option<MetricsReport>> {
    match data.truth() {
        Some(truth) if !standardized => {
            let regions = data.groups().map(|_| groups);
            Ok(Some(fit_metrics(fit, truth, regions)?))
        }
        _ => Ok(None),
    }
}

#[derive(Serialize)]
struct FitSummary {
    lambda: f64,
    eta: f64,
    tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    converged: bool,
    stop_reason: rct_core::optimizer::StopReason,
    iterations: usize,
    final_stationarity: Option<f64>,
    beta: Vec<f64>,
    beta_thresholded: Vec<f64>,
    active_groups: Vec<usize>,
    objective_trace: Vec<f64>,
    stationarity_trace: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricsReport>,
}

impl FitSummary {
    fn new(fit: &FitResult, metrics: Option<MetricsReport>) -> Self {
        Self {
            lambda: fit.lambda,
            eta: fit.thresh.eta(),
            tau: fit.thresh.tau(),
            omega: fit.omega,
            converged: fit.converged,
            stop_reason: fit.stop_reason,
            iterations: fit.iterations,
            final_stationarity: fit.final_stationarity(),
            beta: fit.beta.to_vec(),
            beta_thresholded: fit.beta_thresholded.to_vec(),
            active_groups: fit.active_groups.clone(),
            objective_trace: fit.objective_trace.clone(),
            stationarity_trace: fit.stationarity_trace.clone(),
            metrics,
        }
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    command: &'static str,
    data: &'a Path,
    n: usize,
    p: usize,
    method: Method,
    fit: FitSummary,
    config: &'a RunConfig,
}

fn cmd_fit(mut cfg: RunConfig, a: FitArgs) -> CliResult<i32> {
    a.solver.apply(&mut cfg);
    let f = &mut cfg.fit;
    if a.data.is_some() {
        f.data = a.data;
    }
    if a.groups.is_some() {
        f.groups = a.groups;
    }
    set(&mut f.method, a.method);
    f.standardize |= a.standardize;
    set(&mut f.out, a.out);
    cfg.solver.validate()?;

    let (path, data) = load_input(&cfg.fit.data, cfg.fit.standardize)?;
    let groups = resolve_groups(&cfg.fit.groups, &data)?;
    let fit = match cfg.fit.method {
        Method::Rct => fit_rct(&data, &groups, &cfg.solver)?,
        Method::Lasso => fit_lasso(&data, cfg.solver.lambda, &cfg.lasso)?,
        Method::Adalasso => {
            // the pilot is the plain lasso at the same lambda
            let pilot = fit_lasso(&data, cfg.solver.lambda, &cfg.lasso)?;
            fit_adaptive_lasso(&data, cfg.solver.lambda, &pilot, &cfg.lasso)?
        }
    };
    let metrics = metrics_for(&fit, &data, &groups, cfg.fit.standardize)?;
    let report = FitReport {
        command: "fit",
        data: &path,
        n: data.n(),
        p: data.p(),
        method: cfg.fit.method,
        fit: FitSummary::new(&fit, metrics),
        config: &cfg,
    };
    write_json(&cfg.fit.out, &report)?;
    println!(
        "fit {} lambda={} on {}x{}: {} iterations, converged={}, {} active groups -> {}",
        cfg.fit.method,
        fit.lambda,
        data.n(),
        data.p(),
        fit.iterations,
        fit.converged,
        fit.active_groups.len(),
        cfg.fit.out.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct CvReport<'a> {
    command: &'static str,
    data: &'a Path,
    n: usize,
    p: usize,
    step: f64,
    omega: f64,
    lambdas: &'a [f64],
    etas: &'a [f64],
    cv: &'a CVResult,
    selected_lambda: f64,
    selected_eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    refit: Option<FitSummary>,
    config: &'a RunConfig,
}

fn cmd_cv(mut cfg: RunConfig, a: CvArgs) -> CliResult<i32> {
    a.solver.apply(&mut cfg);
    a.tuning.apply(&mut cfg);
    let c = &mut cfg.cv;
    if a.data.is_some() {
        c.data = a.data;
    }
    if a.groups.is_some() {
        c.groups = a.groups;
    }
    c.standardize |= a.standardize;
    set(&mut c.seed, a.seed);
    if a.lambdas.is_some() {
        c.lambdas = a.lambdas;
    }
    if a.etas.is_some() {
        c.etas = a.etas;
    }
    if a.no_refit {
        c.refit = false;
    }
    set(&mut c.out, a.out);
    cfg.solver.validate()?;
    if cfg.tuning.folds < 2 {
        return Err(CliError::Usage(format!("folds must be at least 2, got {}", cfg.tuning.folds)));
    }

    let (path, data) = load_input(&cfg.cv.data, cfg.cv.standardize)?;
    let groups = resolve_groups(&cfg.cv.groups, &data)?;
    let tuning = cfg.tuning_config();
    // the lasso pilot is needed for the eta grid and for the residual-based omega
    let needs_pilot = cfg.cv.etas.is_none() || (cfg.solver.omega.is_none() && tuning.omega_rule == OmegaRule::PilotResiduals);
    let pilot = if needs_pilot { Some(tune_lasso(&data, &tuning, cfg.cv.seed)?) } else { None };
    let omega = match (&pilot, cfg.solver.omega, tuning.omega_rule) {
        (Some(pilot), None, OmegaRule::PilotResiduals) => {
            let resid = &data.response() - &data.design().dot(&pilot.fit.beta);
            HuberParams::from_response(&resid.to_vec()).omega()
        }
        _ => cfg.solver.huber(&data)?.omega(),
    };
    let step = match cfg.tuning.step_scale {
        Some(s) if s > 0.0 && s.is_finite() => s / LassoProblem::new(&data, cfg.lasso.power_iters).lipschitz(),
        Some(s) => return Err(CliError::Usage(format!("step_scale must be positive, got {s}"))),
        None => cfg.solver.step,
    };
    let base = SolverConfig {
        omega: Some(omega),
        step,
        ..cfg.solver.clone()
    };
    let lambdas = match &cfg.cv.lambdas {
        Some(l) => l.clone(),
        None => {
            let lmax = rct_lambda_max(&data, &groups, omega)?;
            lambda_grid(if lmax > 0.0 { lmax } else { 1.0 }, tuning.lambda_count, tuning.lambda_ratio)?
        }
    };
    let etas = match &cfg.cv.etas {
        Some(e) => e.clone(),
        None => {
            let pilot = pilot.as_ref().expect("pilot is fit when the eta grid is derived");
            match tuning.rule {
                TuningRule::Cv => eta_grid_from_pilot(&pilot.fit, &tuning)?,
                TuningRule::LassoQuantile => vec![eta_from_lasso(&pilot.fit, tuning.eta_quantile)?],
            }
        }
    };
    let mut cv = cross_validate(&data, &groups, &lambdas, &etas, tuning.folds, &base, cfg.cv.seed)?;
    cv.rule = tuning.rule;
    let (lambda, eta) = cv.best;
    let refit = if cfg.cv.refit {
        // warm-started path from the largest lambda down to the winner
        let mut path_lambdas: Vec<f64> = lambdas.iter().copied().filter(|&l| l >= lambda).collect();
        path_lambdas.sort_by(|x, y| y.total_cmp(x));
        path_lambdas.dedup();
        let fit = rct_path(&data, &groups, &path_lambdas, &[eta], &base)?
            .pop()
            .and_then(|mut row| row.pop())
            .expect("path ends at the selected pair");
        let metrics = metrics_for(&fit, &data, &groups, cfg.cv.standardize)?;
        Some(FitSummary::new(&fit, metrics))
    } else {
        None
    };
    let report = CvReport {
        command: "cv",
        data: &path,
        n: data.n(),
        p: data.p(),
        step,
        omega,
        lambdas: &lambdas,
        etas: &etas,
        cv: &cv,
        selected_lambda: lambda,
        selected_eta: eta,
        refit,
        config: &cfg,
    };
    write_json(&cfg.cv.out, &report)?;
    println!(
        "cv over {} lambdas x {} etas, {} folds: selected lambda={lambda} eta={eta} (error {:.6}) -> {}",
        lambdas.len(),
        etas.len(),
        tuning.folds,
        cv.fold_errors[cv.best_index],
        cfg.cv.out.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct BenchmarkReport<'a> {
    command: &'static str,
    table: &'a rct_core::evaluation::BenchmarkTable,
    config: &'a RunConfig,
}

fn cmd_benchmark(mut cfg: RunConfig, a: BenchmarkArgs) -> CliResult<i32> {
    a.solver.apply(&mut cfg);
    a.tuning.apply(&mut cfg);
    let b = &mut cfg.benchmark;
    set(&mut b.models, a.models);
    set(&mut b.methods, a.methods);
    set(&mut b.replications, a.replications);
    if a.n.is_some() {
        b.n = a.n;
    }
    if a.p.is_some() {
        b.p = a.p;
    }
    set(&mut b.seed, a.seed);
    set(&mut b.csv, a.csv);
    set(&mut b.json, a.json);

    let models = cfg
        .benchmark
        .models
        .iter()
        .map(|m| parse_model_case(m))
        .collect::<CliResult<Vec<_>>>()?;
    let config = BenchmarkConfig {
        models,
        n: cfg.benchmark.n,
        p: cfg.benchmark.p,
        replications: cfg.benchmark.replications,
        methods: cfg.benchmark.methods.clone(),
        base_seed: cfg.benchmark.seed,
        tuning: cfg.tuning_config(),
    };
    config.validate().map_err(usage)?;
    let table = run_benchmark(&config)?;
    fs::write(&cfg.benchmark.csv, table.to_csv())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", cfg.benchmark.csv.display())))?;
    write_json(
        &cfg.benchmark.json,
        &BenchmarkReport {
            command: "benchmark",
            table: &table,
            config: &cfg,
        },
    )?;
    println!(
        "benchmark: {} rows, {} replication(s) failed -> {}, {}",
        table.rows.len(),
        table.failures(),
        cfg.benchmark.csv.display(),
        cfg.benchmark.json.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct CheckReport<'a> {
    command: &'static str,
    passed: bool,
    checks: &'a [checks::CheckOutcome],
    config: &'a RunConfig,
}

fn cmd_check(mut cfg: RunConfig, a: CheckArgs) -> CliResult<i32> {
    set(&mut cfg.check.seed, a.seed);
    if a.out.is_some() {
        cfg.check.out = a.out;
    }
    let perturb = if a.break_gradient { 1e-3 } else { 0.0 };
    let outcomes = checks::run_all(cfg.check.seed, perturb);
    for o in &outcomes {
        println!("{}", o.line());
    }
    let passed = outcomes.iter().all(|o| o.passed);
    if let Some(out) = &cfg.check.out {
        write_json(
            out,
            &CheckReport {
                command: "check",
                passed,
                checks: &outcomes,
                config: &cfg,
            },
        )?;
    }
    if passed {
        Ok(0)
    } else {
        let failed = outcomes.iter().filter(|o| !o.passed).count();
        Err(CliError::Runtime(format!("{failed} check(s) failed")))
    }
}
