//! Selection metrics, cross-validated tuning and the replication benchmark.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{adaptive_weights, LassoConfig, LassoProblem};
use crate::datagen::{Case, ModelSampler, ModelSpec};
use crate::dataset::Dataset;
use crate::loss::HuberParams;
use crate::error::{check_len, Error, Result};
use crate::optimizer::{fit_rct_with, FitResult, SolverConfig};
use crate::penalty::{GroupPartition, GroupPenalty};
use crate::risk::{CoefficientMap, LinearRisk, SmoothRisk, ThresholdedRisk};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fpr: f64,
    pub fnr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_fpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_fnr: Option<f64>,
    /// `|beta_hat - beta*|_2`.
    pub l2_loss: f64,
    /// `|G(beta_hat) - beta*|_2`.
    pub l2_loss_thresholded: f64,
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn l2_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// FPR, FNR and l2 loss of `estimate` against the support of `truth`.
///
/// A coordinate is selected when `|estimate_j| > zero_tol`.
pub fn selection_metrics(
    estimate: ArrayView1<f64>,
    truth: ArrayView1<f64>,
    zero_tol: f64,
) -> Result<MetricsReport> {
    check_len("estimate", estimate.len(), truth.len())?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (e, t) in estimate.iter().zip(truth.iter()) {
        match (e.abs() > zero_tol, *t != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let l2 = l2_dist(estimate, truth);
    Ok(MetricsReport {
        fpr: rate(fp, fp + tn),
        fnr: rate(fn_, fn_ + tp),
        region_fpr: None,
        region_fnr: None,
        l2_loss: l2,
        l2_loss_thresholded: l2,
    })
}

/// Region-level FPR and FNR: a region is selected (or truly active) when
/// any member coordinate is.
pub fn region_metrics(
    estimate: ArrayView1<f64>,
    truth: ArrayView1<f64>,
    groups: &GroupPartition,
    zero_tol: f64,
) -> Result<(f64, f64)> {
    check_len("estimate", estimate.len(), groups.dim())?;
    check_len("truth", truth.len(), groups.dim())?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for block in groups.blocks() {
        let selected = block.iter().any(|&j| estimate[j].abs() > zero_tol);
        let active = block.iter().any(|&j| truth[j] != 0.0);
        match (selected, active) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok((rate(fp, fp + tn), rate(fn_, fn_ + tp)))
}

/// Metrics of a prox-based fit (exact zeros, so `zero_tol = 0`).
pub fn fit_metrics(fit: &FitResult, truth: ArrayView1<f64>, groups: Option<&GroupPartition>) -> Result<MetricsReport> {
    let mut report = selection_metrics(fit.beta.view(), truth, 0.0)?;
    report.l2_loss_thresholded = l2_dist(fit.beta_thresholded.view(), truth);
    if let Some(g) = groups {
        let (rfpr, rfnr) = region_metrics(fit.beta.view(), truth, g, 0.0)?;
        report.region_fpr = Some(rfpr);
        report.region_fnr = Some(rfnr);
    }
    Ok(report)
}

/// Empirical quantile of `|beta_j|` over the nonzero pilot coefficients,
/// with linear interpolation between order statistics. Zero for an all-zero
/// pilot.
pub fn eta_from_lasso(pilot: &FitResult, quantile: f64) -> Result<f64> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Parameter(format!("quantile must lie in (0, 1), got {quantile}")));
    }
    let mut mags: Vec<f64> = pilot.beta.iter().filter(|b| **b != 0.0).map(|b| b.abs()).collect();
    Ok(quantile_sorted(&mut mags, quantile))
}

fn quantile_sorted(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// `count` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, count: usize, ratio: f64) -> Result<Vec<f64>> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::Parameter(format!("lambda_max must be positive, got {lambda_max}")));
    }
    if count == 0 || !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Parameter(format!(
            "need count >= 1 and ratio in (0, 1], got {count} and {ratio}"
        )));
    }
    if count == 1 {
        return Ok(vec![lambda_max]);
    }
    let step = ratio.ln() / (count - 1) as f64;
    Ok((0..count).map(|k| lambda_max * (step * k as f64).exp()).collect())
}

/// `max_b |grad_b R(0)|_2` for the pseudo-Huber risk with the identity map,
/// the smallest lambda whose solution at `eta = 0` is zero.
pub fn rct_lambda_max(data: &Dataset, groups: &GroupPartition, omega: f64) -> Result<f64> {
    check_len("group partition", groups.dim(), data.p())?;
    let huber = HuberParams::new(omega)?;
    let risk = LinearRisk::new(data, CoefficientMap::Identity, huber);
    let mut grad = Array1::zeros(data.p());
    risk.value_and_gradient(Array1::zeros(data.p()).view(), &mut grad);
    Ok((0..groups.len()).map(|b| groups.block_norm(b, grad.view())).fold(0.0, f64::max))
}

/// Test-row indices of each fold after a seeded shuffle.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Parameter(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::Parameter(format!(
            "{folds} folds leave some fold empty with n = {n}"
        )));
    }
    if n - n.div_ceil(folds) < 2 {
        return Err(Error::Parameter(format!(
            "{folds} folds leave fewer than 2 training observations with n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, &row) in order.iter().enumerate() {
        out[i % folds].push(row);
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

fn split(data: &Dataset, test: &[usize]) -> Result<(Dataset, Dataset)> {
    let mut is_test = vec![false; data.n()];
    for &i in test {
        is_test[i] = true;
    }
    let train: Vec<usize> = (0..data.n()).filter(|&i| !is_test[i]).collect();
    Ok((data.subset_rows(&train)?, data.subset_rows(test)?))
}

fn mean_abs_error(test: &Dataset, coef: ArrayView1<f64>) -> f64 {
    let resid = &test.response() - &test.design().dot(&coef);
    resid.iter().map(|r| r.abs()).sum::<f64>() / test.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuningRule {
    Cv,
    LassoQuantile,
}

/// Source of the pseudo-Huber scale when `solver.omega` is unset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaRule {
    /// `1.345 * MAD(y)`.
    #[default]
    Response,
    /// `1.345 * MAD(y - X beta_pilot)` from the lasso pilot.
    PilotResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    /// `(lambda, eta)` pairs in evaluation order.
    pub grid: Vec<(f64, f64)>,
    /// Mean held-out l1 prediction error of each pair, averaged over folds.
    pub fold_errors: Vec<f64>,
    /// Per-fold errors, `per_fold[f][k]` for fold `f` and pair `k`.
    pub per_fold: Vec<Vec<f64>>,
    pub best: (f64, f64),
    pub best_index: usize,
    pub rule: TuningRule,
}

fn select_best(grid: &[(f64, f64)], errors: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..grid.len() {
        let (e, b) = (errors[k], errors[best]);
        let better = e < b
            || (e == b && (grid[k].0 > grid[best].0 || (grid[k].0 == grid[best].0 && grid[k].1 > grid[best].1)))
            || (b.is_nan() && !e.is_nan());
        if better {
            best = k;
        }
    }
    best
}

fn check_grids(lambdas: &[f64], etas: &[f64]) -> Result<()> {
    if lambdas.is_empty() || etas.is_empty() {
        return Err(Error::Parameter("lambda and eta grids must be nonempty".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::Parameter(format!("invalid lambda {l} in grid")));
    }
    if let Some(e) = etas.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(Error::Parameter(format!("invalid eta {e} in grid")));
    }
    Ok(())
}

/// Fits along a lambda grid (visited from largest to smallest) for every eta.
///
/// The `eta = 0` fits form a warm-started path; each `eta > 0` fit starts from
/// the `eta = 0` solution at the same lambda. Returns `fits[i][k]` for lambda
/// `lambdas[i]` and eta `etas[k]`.
pub fn rct_path(
    data: &Dataset,
    groups: &GroupPartition,
    lambdas: &[f64],
    etas: &[f64],
    base: &SolverConfig,
) -> Result<Vec<Vec<FitResult>>> {
    check_grids(lambdas, etas)?;
    base.validate()?;
    check_len("group partition", groups.dim(), data.p())?;
    let huber = base.huber(data)?;
    let penalty = GroupPenalty::new(groups.clone());
    let anchor_risk = ThresholdedRisk::thresholded(data, base.thresh()?.with_eta(0.0)?, huber);
    let risks: Vec<ThresholdedRisk> = etas
        .iter()
        .map(|&eta| Ok(ThresholdedRisk::thresholded(data, base.thresh()?.with_eta(eta)?, huber)))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut out: Vec<Option<Vec<FitResult>>> = vec![None; lambdas.len()];
    let mut warm = base.init.clone();
    for &i in &order {
        let mut config = base.clone();
        config.lambda = lambdas[i];
        config.eta = 0.0;
        config.init = warm.take();
        let anchor = fit_rct_with(&anchor_risk, &penalty, &config)?;
        let row = etas
            .iter()
            .zip(&risks)
            .map(|(&eta, risk)| {
                if eta == 0.0 {
                    return Ok(anchor.clone());
                }
                let config = SolverConfig {
                    eta,
                    init: Some(anchor.beta.clone()),
                    ..config.clone()
                };
                fit_rct_with(risk, &penalty, &config)
            })
            .collect::<Result<Vec<_>>>()?;
        warm = Some(anchor.beta);
        out[i] = Some(row);
    }
    Ok(out.into_iter().map(|r| r.expect("every lambda visited")).collect())
}

/// K-fold cross-validation of `(lambda, eta)` on the product grid by held-out
/// mean absolute prediction error of `X G(beta_hat)`.
pub fn cross_validate(
    data: &Dataset,
    groups: &GroupPartition,
    lambda_grid: &[f64],
    eta_grid: &[f64],
    folds: usize,
    base: &SolverConfig,
    seed: u64,
) -> Result<CVResult> {
    check_grids(lambda_grid, eta_grid)?;
    base.validate()?;
    check_len("group partition", groups.dim(), data.p())?;
    let assignment = fold_assignment(data.n(), folds, seed)?;
    // the loss scale is fixed from the full response so every fold fits the
    // same objective
    let base = SolverConfig {
        omega: Some(base.huber(data)?.omega()),
        ..base.clone()
    };
    let per_fold: Vec<Vec<f64>> = assignment
        .par_iter()
        .map(|test_rows| {
            let (train, test) = split(data, test_rows)?;
            let fits = rct_path(&train, groups, lambda_grid, eta_grid, &base)?;
            Ok(fits
                .iter()
                .flat_map(|row| row.iter().map(|f| mean_abs_error(&test, f.beta_thresholded.view())))
                .collect())
        })
        .collect::<Result<_>>()?;
    let grid: Vec<(f64, f64)> = lambda_grid
        .iter()
        .flat_map(|&l| eta_grid.iter().map(move |&e| (l, e)))
        .collect();
    Ok(summarize_cv(grid, per_fold, TuningRule::Cv))
}

fn summarize_cv(grid: Vec<(f64, f64)>, per_fold: Vec<Vec<f64>>, rule: TuningRule) -> CVResult {
    let k = per_fold.len() as f64;
    let fold_errors: Vec<f64> = (0..grid.len())
        .map(|i| per_fold.iter().map(|f| f[i]).sum::<f64>() / k)
        .collect();
    let best_index = select_best(&grid, &fold_errors);
    CVResult {
        best: grid[best_index],
        best_index,
        grid,
        fold_errors,
        per_fold,
        rule,
    }
}

/// Cross-validates the (optionally weighted) lasso over a lambda grid.
pub fn cross_validate_lasso(
    data: &Dataset,
    lambda_grid: &[f64],
    weights: Option<&[f64]>,
    folds: usize,
    config: &LassoConfig,
    seed: u64,
) -> Result<CVResult> {
    check_grids(lambda_grid, &[0.0])?;
    let assignment = fold_assignment(data.n(), folds, seed)?;
    let per_fold: Vec<Vec<f64>> = assignment
        .par_iter()
        .map(|test_rows| {
            let (train, test) = split(data, test_rows)?;
            let fits = lasso_path(&train, lambda_grid, weights, config)?;
            Ok(fits.iter().map(|f| mean_abs_error(&test, f.beta.view())).collect())
        })
        .collect::<Result<_>>()?;
    let grid = lambda_grid.iter().map(|&l| (l, 0.0)).collect();
    Ok(summarize_cv(grid, per_fold, TuningRule::Cv))
}

/// Warm-started lasso fits over `lambdas`, returned in grid order.
pub fn lasso_path(
    data: &Dataset,
    lambdas: &[f64],
    weights: Option<&[f64]>,
    config: &LassoConfig,
) -> Result<Vec<FitResult>> {
    let problem = LassoProblem::new(data, config.power_iters);
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut out: Vec<Option<FitResult>> = vec![None; lambdas.len()];
    let mut warm = config.init.clone();
    for &i in &order {
        let cfg = LassoConfig {
            init: warm.take(),
            ..config.clone()
        };
        let fit = problem.fit(lambdas[i], weights, &cfg)?;
        warm = Some(fit.beta.clone());
        out[i] = Some(fit);
    }
    Ok(out.into_iter().map(|f| f.expect("every lambda visited")).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rct,
    Lasso,
    Adalasso,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rct, Method::Lasso, Method::Adalasso];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rct => "rct",
            Method::Lasso => "lasso",
            Method::Adalasso => "adalasso",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rct" => Ok(Method::Rct),
            "lasso" => Ok(Method::Lasso),
            "adalasso" => Ok(Method::Adalasso),
            other => Err(Error::Parameter(format!(
                "unknown method '{other}'; supported methods are rct, lasso, adalasso"
            ))),
        }
    }
}

/// How lambda and eta are chosen inside each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub folds: usize,
    pub lambda_count: usize,
    pub lambda_ratio: f64,
    /// Quantiles of the lasso pilot's nonzero magnitudes forming the eta grid
    /// (together with 0 when `include_eta_zero`).
    pub eta_quantiles: Vec<f64>,
    pub include_eta_zero: bool,
    /// `lasso-quantile` fixes eta at `eta_quantile` and tunes lambda only.
    pub rule: TuningRule,
    pub eta_quantile: f64,
    /// When set, the RCT step is `step_scale / L` with `L` the power-iteration
    /// estimate of the top eigenvalue of `X^T X / n`, replacing `solver.step`.
    pub step_scale: Option<f64>,
    pub omega_rule: OmegaRule,
    pub solver: SolverConfig,
    pub lasso: LassoConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda_count: 30,
            lambda_ratio: 1e-3,
            eta_quantiles: vec![0.1, 0.3, 0.5],
            include_eta_zero: true,
            rule: TuningRule::Cv,
            eta_quantile: 0.3,
            step_scale: None,
            omega_rule: OmegaRule::Response,
            solver: SolverConfig::default(),
            lasso: LassoConfig::default(),
        }
    }
}

/// A fit together with the tuning that produced it.
#[derive(Debug, Clone)]
pub struct TunedFit {
    pub method: Method,
    pub fit: FitResult,
    pub lambda: f64,
    pub eta: f64,
    pub cv: CVResult,
}

/// CV-tuned lasso, used on its own and as the pilot for the other methods.
pub fn tune_lasso(data: &Dataset, tuning: &TuningConfig, seed: u64) -> Result<TunedFit> {
    let problem = LassoProblem::new(data, tuning.lasso.power_iters);
    let lmax = problem.lambda_max(None);
    let grid = lambda_grid(if lmax > 0.0 { lmax } else { 1.0 }, tuning.lambda_count, tuning.lambda_ratio)?;
    let cv = cross_validate_lasso(data, &grid, None, tuning.folds, &tuning.lasso, seed)?;
    let lambda = cv.best.0;
    let path: Vec<f64> = grid.iter().copied().filter(|&l| l >= lambda).collect();
    let fit = lasso_path(data, &path, None, &tuning.lasso)?
        .pop()
        .expect("path ends at the selected lambda");
    Ok(TunedFit {
        method: Method::Lasso,
        fit,
        lambda,
        eta: 0.0,
        cv,
    })
}

/// CV-tuned adaptive lasso with weights from `pilot`.
pub fn tune_adaptive_lasso(data: &Dataset, pilot: &FitResult, tuning: &TuningConfig, seed: u64) -> Result<TunedFit> {
    let weights = adaptive_weights(pilot.beta.view());
    let problem = LassoProblem::new(data, tuning.lasso.power_iters);
    let lmax = problem.lambda_max(Some(&weights));
    let lmax = if lmax > 0.0 && lmax.is_finite() { lmax } else { 1.0 };
    let grid = lambda_grid(lmax, tuning.lambda_count, tuning.lambda_ratio)?;
    let cv = cross_validate_lasso(data, &grid, Some(&weights), tuning.folds, &tuning.lasso, seed)?;
    let lambda = cv.best.0;
    let path: Vec<f64> = grid.iter().copied().filter(|&l| l >= lambda).collect();
    let fit = lasso_path(data, &path, Some(&weights), &tuning.lasso)?
        .pop()
        .expect("path ends at the selected lambda");
    Ok(TunedFit {
        method: Method::Adalasso,
        fit,
        lambda,
        eta: 0.0,
        cv,
    })
}

/// The default eta grid: `{0}` and the configured quantiles of the pilot's
/// nonzero magnitudes, deduplicated.
pub fn eta_grid_from_pilot(pilot: &FitResult, tuning: &TuningConfig) -> Result<Vec<f64>> {
    let mut etas = Vec::new();
    if tuning.include_eta_zero {
        etas.push(0.0);
    }
    for &q in &tuning.eta_quantiles {
        etas.push(eta_from_lasso(pilot, q)?);
    }
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    if etas.is_empty() {
        etas.push(0.0);
    }
    Ok(etas)
}

/// CV-tuned RCT fit; `pilot` supplies the eta grid.
pub fn tune_rct(
    data: &Dataset,
    groups: &GroupPartition,
    pilot: &FitResult,
    tuning: &TuningConfig,
    seed: u64,
) -> Result<TunedFit> {
    let omega = match (tuning.solver.omega, tuning.omega_rule) {
        (None, OmegaRule::PilotResiduals) => {
            let resid = &data.response() - &data.design().dot(&pilot.beta);
            HuberParams::from_response(&resid.to_vec()).omega()
        }
        _ => tuning.solver.huber(data)?.omega(),
    };
    let step = match tuning.step_scale {
        Some(c) if c > 0.0 && c.is_finite() => {
            let lip = LassoProblem::new(data, tuning.lasso.power_iters).lipschitz();
            if lip > 0.0 {
                c / lip
            } else {
                tuning.solver.step
            }
        }
        Some(c) => return Err(Error::Parameter(format!("step_scale must be positive, got {c}"))),
        None => tuning.solver.step,
    };
    let base = SolverConfig {
        omega: Some(omega),
        step,
        ..tuning.solver.clone()
    };
    let lmax = rct_lambda_max(data, groups, omega)?;
    let lambdas = lambda_grid(if lmax > 0.0 { lmax } else { 1.0 }, tuning.lambda_count, tuning.lambda_ratio)?;
    let (etas, rule) = match tuning.rule {
        TuningRule::Cv => (eta_grid_from_pilot(pilot, tuning)?, TuningRule::Cv),
        TuningRule::LassoQuantile => (
            vec![eta_from_lasso(pilot, tuning.eta_quantile)?],
            TuningRule::LassoQuantile,
        ),
    };
    let mut cv = cross_validate(data, groups, &lambdas, &etas, tuning.folds, &base, seed)?;
    cv.rule = rule;
    let (lambda, eta) = cv.best;
    let path: Vec<f64> = lambdas.iter().copied().filter(|&l| l >= lambda).collect();
    let fit = rct_path(data, groups, &path, &[eta], &base)?
        .pop()
        .and_then(|mut row| row.pop())
        .expect("path ends at the selected pair");
    Ok(TunedFit {
        method: Method::Rct,
        fit,
        lambda,
        eta,
        cv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub models: Vec<(u8, Case)>,
    /// Sample size; `None` uses each model's published default.
    pub n: Option<usize>,
    /// Dimension; `None` uses each model's published default.
    pub p: Option<usize>,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    pub tuning: TuningConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            models: vec![(1, Case::A)],
            n: None,
            p: None,
            replications: 50,
            methods: Method::ALL.to_vec(),
            base_seed: 2024,
            tuning: TuningConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Parameter("replications must be at least 1".into()));
        }
        if self.models.is_empty() || self.methods.is_empty() {
            return Err(Error::Parameter("need at least one model and one method".into()));
        }
        for &(model, case) in &self.models {
            let (n0, p0) = ModelSpec::default_size(model);
            ModelSpec::new(model, case, self.p.unwrap_or(p0))?;
            if self.n.unwrap_or(n0) < 2 * self.tuning.folds {
                return Err(Error::Parameter("n is too small for the fold count".into()));
            }
        }
        self.tuning.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub model_id: u8,
    pub case: Case,
    pub method: Method,
    pub replication: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        };
        Some(Self { mean, sd })
    }
}

/// One published table entry, quoted for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaperReference {
    pub model_id: u8,
    pub case: Case,
    pub method: &'static str,
    pub fpr: f64,
    pub fnr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_fpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region_fnr: Option<f64>,
    pub l2_loss: f64,
}

const fn reference(model_id: u8, method: &'static str, fpr: f64, fnr: f64, l2_loss: f64) -> PaperReference {
    PaperReference {
        model_id,
        case: Case::A,
        method,
        fpr,
        fnr,
        region_fpr: None,
        region_fnr: None,
        l2_loss,
    }
}

const fn regional(model_id: u8, method: &'static str, v: [f64; 5]) -> PaperReference {
    PaperReference {
        model_id,
        case: Case::A,
        method,
        fpr: v[0],
        fnr: v[1],
        region_fpr: Some(v[2]),
        region_fnr: Some(v[3]),
        l2_loss: v[4],
    }
}

/// Published case (a) means from the simulation tables (50 replications,
/// Models 7-10 at p = 2500).
pub const PAPER_REFERENCE: &[PaperReference] = &[
    reference(1, "lasso", 0.021, 0.199, 3.198),
    reference(1, "adalasso", 0.020, 0.212, 3.787),
    reference(1, "scad", 0.007, 0.422, 4.148),
    reference(1, "mcp", 0.003, 0.625, 4.709),
    reference(1, "rct", 0.010, 0.177, 2.860),
    reference(2, "lasso", 0.017, 0.165, 3.032),
    reference(2, "adalasso", 0.016, 0.180, 3.716),
    reference(2, "scad", 0.008, 0.474, 4.750),
    reference(2, "mcp", 0.004, 0.654, 5.430),
    reference(2, "rct", 0.004, 0.071, 2.041),
    reference(3, "lasso", 0.014, 0.153, 3.035),
    reference(3, "adalasso", 0.014, 0.156, 3.739),
    reference(3, "scad", 0.010, 0.575, 5.979),
    reference(3, "mcp", 0.003, 0.694, 6.201),
    reference(3, "rct", 0.002, 0.018, 1.466),
    reference(4, "lasso", 0.040, 0.337, 4.075),
    reference(4, "adalasso", 0.033, 0.369, 4.035),
    reference(4, "scad", 0.021, 0.736, 5.849),
    reference(4, "mcp", 0.008, 0.868, 6.763),
    reference(4, "rct", 0.061, 0.215, 3.982),
    reference(5, "lasso", 0.041, 0.387, 4.183),
    reference(5, "adalasso", 0.033, 0.421, 3.726),
    reference(5, "scad", 0.021, 0.736, 5.849),
    reference(5, "mcp", 0.008, 0.896, 7.129),
    reference(5, "rct", 0.062, 0.244, 4.023),
    reference(6, "lasso", 0.041, 0.374, 4.144),
    reference(6, "adalasso", 0.032, 0.443, 4.512),
    reference(6, "scad", 0.020, 0.745, 5.711),
    reference(6, "mcp", 0.007, 0.921, 7.348),
    reference(6, "rct", 0.066, 0.253, 4.093),
    reference(7, "lasso", 0.002, 0.814, 7.083),
    reference(7, "adalasso", 0.002, 0.820, 12.527),
    reference(7, "mcp", 0.007, 0.918, 7.526),
    reference(7, "stgp-no-info", 0.001, 0.435, 2.729),
    reference(7, "rct", 0.025, 0.018, 2.302),
    reference(8, "lasso", 0.001, 0.784, 6.071),
    reference(8, "adalasso", 0.001, 0.784, 0.196),
    reference(8, "mcp", 0.007, 0.918, 7.532),
    reference(8, "stgp-no-info", 0.002, 0.461, 2.584),
    reference(8, "rct", 0.027, 0.196, 3.038),
    regional(9, "lasso", [0.019, 0.270, 0.101, 0.0, 25.607]),
    regional(9, "glasso", [0.220, 0.378, 0.232, 0.0, 16.101]),
    regional(9, "sgl", [0.115, 0.010, 0.135, 0.0, 12.507]),
    regional(9, "stgp", [0.063, 0.0, 0.109, 0.0, 12.540]),
    regional(9, "rct", [0.059, 0.0, 0.087, 0.0, 13.114]),
    regional(10, "lasso", [0.028, 0.411, 0.140, 0.0, 33.091]),
    regional(10, "glasso", [0.215, 0.403, 0.232, 0.0, 16.128]),
    regional(10, "sgl", [0.126, 0.012, 0.126, 0.0, 13.366]),
    regional(10, "stgp", [0.061, 0.0, 0.110, 0.0, 12.642]),
    regional(10, "rct", [0.064, 0.0, 0.111, 0.0, 13.505]),
];

pub fn paper_reference(model_id: u8, case: Case) -> Vec<PaperReference> {
    PAPER_REFERENCE
        .iter()
        .filter(|r| r.model_id == model_id && r.case == case)
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model_id: u8,
    pub case: Case,
    pub method: Method,
    pub completed: usize,
    pub failures: usize,
    pub fpr: Option<MeanSd>,
    pub fnr: Option<MeanSd>,
    pub region_fpr: Option<MeanSd>,
    pub region_fnr: Option<MeanSd>,
    pub l2_loss: Option<MeanSd>,
    pub l2_loss_raw: Option<MeanSd>,
    pub paper: Option<PaperReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkTable {
    pub config: BenchmarkConfig,
    pub rows: Vec<SummaryRow>,
    pub records: Vec<ReplicationRecord>,
    pub paper_reference: Vec<PaperReference>,
}

impl BenchmarkTable {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// One row per model, case and method; `paper_*` columns quote the
    /// published values for reference.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,case,method,completed,failures,fpr_mean,fpr_sd,fnr_mean,fnr_sd,\
             region_fpr_mean,region_fpr_sd,region_fnr_mean,region_fnr_sd,\
             l2_mean,l2_sd,l2_raw_mean,l2_raw_sd,paper_fpr,paper_fnr,paper_l2\n",
        );
        let ms = |m: Option<MeanSd>| match m {
            Some(v) => format!("{:.6},{:.6}", v.mean, v.sd),
            None => ",".to_string(),
        };
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.model_id,
                r.case,
                r.method,
                r.completed,
                r.failures,
                ms(r.fpr),
                ms(r.fnr),
                ms(r.region_fpr),
                ms(r.region_fnr),
                ms(r.l2_loss),
                ms(r.l2_loss_raw),
                opt(r.paper.map(|p| p.fpr)),
                opt(r.paper.map(|p| p.fnr)),
                opt(r.paper.map(|p| p.l2_loss)),
            ));
        }
        let failures = self.failures();
        if failures > 0 {
            out.push_str(&format!("# {failures} replication(s) failed; see the JSON records\n"));
        }
        out
    }
}

/// Fits every requested method on one dataset. Failures are reported as
/// messages so that one method's error does not stop the others.
pub fn run_methods(
    data: &Dataset,
    methods: &[Method],
    tuning: &TuningConfig,
    seed: u64,
) -> Vec<(Method, std::result::Result<TunedFit, String>)> {
    let groups = data
        .groups()
        .cloned()
        .unwrap_or_else(|| GroupPartition::singletons(data.p()));
    let pilot = tune_lasso(data, tuning, seed);
    methods
        .iter()
        .map(|&m| {
            let result = match (&pilot, m) {
                (Err(e), _) => Err(format!("lasso pilot failed: {e}")),
                (Ok(p), Method::Lasso) => Ok(p.clone()),
                (Ok(p), Method::Adalasso) => tune_adaptive_lasso(data, &p.fit, tuning, seed).map_err(|e| e.to_string()),
                (Ok(p), Method::Rct) => tune_rct(data, &groups, &p.fit, tuning, seed).map_err(|e| e.to_string()),
            };
            (m, result)
        })
        .collect()
}

/// Replicated simulation study over models, cases and methods.
///
/// Replication `r` uses seed `base_seed + r`. A failed replication is
/// recorded with its error message and excluded from the summary means.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkTable> {
    config.validate()?;
    let mut records = Vec::new();
    for &(model, case) in &config.models {
        let (n0, p0) = ModelSpec::default_size(model);
        let (n, p) = (config.n.unwrap_or(n0), config.p.unwrap_or(p0));
        let sampler = ModelSampler::new(model, case, n, p).map_err(|e| e.to_string());
        let per_rep: Vec<Vec<ReplicationRecord>> = (0..config.replications)
            .into_par_iter()
            .map(|r| {
                let seed = config.base_seed.wrapping_add(r as u64);
                let blank = |method: Method| ReplicationRecord {
                    model_id: model,
                    case,
                    method,
                    replication: r,
                    seed,
                    metrics: None,
                    lambda: None,
                    eta: None,
                    iterations: None,
                    converged: None,
                    error: None,
                };
                let data = match sampler.as_ref().map_err(String::clone).and_then(|s| s.sample(seed).map_err(|e| e.to_string())) {
                    Ok(d) => d,
                    Err(e) => {
                        return config
                            .methods
                            .iter()
                            .map(|&m| ReplicationRecord {
                                error: Some(e.clone()),
                                ..blank(m)
                            })
                            .collect()
                    }
                };
                let truth = data.truth().expect("simulated data carry the truth").to_owned();
                run_methods(&data, &config.methods, &config.tuning, seed)
                    .into_iter()
                    .map(|(m, res)| {
                        match res.and_then(|t| {
                            fit_metrics(&t.fit, truth.view(), data.groups())
                                .map(|metrics| (t, metrics))
                                .map_err(|e| e.to_string())
                        }) {
                            Ok((t, metrics)) => ReplicationRecord {
                                metrics: Some(metrics),
                                lambda: Some(t.lambda),
                                eta: Some(t.eta),
                                iterations: Some(t.fit.iterations),
                                converged: Some(t.fit.converged),
                                ..blank(m)
                            },
                            Err(e) => ReplicationRecord {
                                error: Some(e),
                                ..blank(m)
                            },
                        }
                    })
                    .collect()
            })
            .collect();
        records.extend(per_rep.into_iter().flatten());
    }

    let mut rows = Vec::new();
    let mut paper = Vec::new();
    for &(model, case) in &config.models {
        let refs = paper_reference(model, case);
        for &method in &config.methods {
            let recs: Vec<&ReplicationRecord> = records
                .iter()
                .filter(|r| r.model_id == model && r.case == case && r.method == method)
                .collect();
            let ok: Vec<MetricsReport> = recs.iter().filter_map(|r| r.metrics).collect();
            let col = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
                MeanSd::of(&ok.iter().filter_map(f).collect::<Vec<_>>())
            };
            let name = method.to_string();
            rows.push(SummaryRow {
                model_id: model,
                case,
                method,
                completed: ok.len(),
                failures: recs.len() - ok.len(),
                fpr: col(&|m| Some(m.fpr)),
                fnr: col(&|m| Some(m.fnr)),
                region_fpr: col(&|m| m.region_fpr),
                region_fnr: col(&|m| m.region_fnr),
                l2_loss: col(&|m| Some(m.l2_loss_thresholded)),
                l2_loss_raw: col(&|m| Some(m.l2_loss)),
                paper: refs.iter().find(|r| r.method == name).copied(),
            });
        }
        paper.extend(refs);
    }
    Ok(BenchmarkTable {
        config: config.clone(),
        rows,
        records,
        paper_reference: paper,
    })
}
