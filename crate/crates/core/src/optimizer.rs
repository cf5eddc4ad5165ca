//! Composite gradient descent for the penalized thresholded risk.
//!
//! Each iteration takes a gradient step on the smooth risk, applies the
//! group soft-thresholding prox and projects onto an l2 ball:
//!
//! ```text
//! beta~ = S_{h lambda}(beta - h grad R(beta))
//! beta  = pi_r(beta~)
//! ```

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::loss::HuberParams;
use crate::penalty::{project_in_place, GroupPartition, GroupPenalty};
use crate::risk::{SmoothRisk, ThresholdedRisk};
use crate::thresholding::{apply_g, ThresholdParams};

/// Objective increase tolerated before the step is halved.
const BACKTRACK_SLACK: f64 = 1e-8;
const MAX_HALVINGS: usize = 60;
/// Secondary stopping guard on the iterate change.
const STEP_GUARD: f64 = 1e-10;

/// Threshold used by the prox step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxThreshold {
    /// `S_{h lambda}`: the proximal map of `lambda * penalty` with step `h`.
    #[default]
    StepTimesLambda,
    /// `S_{lambda / h}`, as literally written in the algorithm box. Equivalent
    /// to penalizing with `lambda / h^2`.
    LambdaOverStep,
}

impl ProxThreshold {
    /// Penalty level that the chosen threshold actually optimizes.
    pub fn effective_lambda(self, lambda: f64, step: f64) -> f64 {
        match self {
            ProxThreshold::StepTimesLambda => lambda,
            ProxThreshold::LambdaOverStep => lambda / (step * step),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stationary,
    StepStalled,
    MaxIterations,
}

/// Controls shared by every composite-gradient fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub step: f64,
    pub radius: f64,
    pub tau: f64,
    pub eta: f64,
    /// Pseudo-Huber scale; `None` uses the MAD rule on the response.
    pub omega: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub backtrack: bool,
    pub prox_threshold: ProxThreshold,
    #[serde(skip)]
    pub init: Option<Array1<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            step: 0.01,
            radius: 20.0,
            tau: 0.01,
            eta: 0.0,
            omega: None,
            max_iter: 20_000,
            tol: 1e-6,
            backtrack: true,
            prox_threshold: ProxThreshold::StepTimesLambda,
            init: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda must be nonnegative and finite, got {}",
                self.lambda
            )));
        }
        positive("step", self.step)?;
        positive("radius", self.radius)?;
        positive("tol", self.tol)?;
        if let Some(w) = self.omega {
            HuberParams::new(w)?;
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        self.thresh().map(|_| ())
    }

    pub fn thresh(&self) -> Result<ThresholdParams> {
        ThresholdParams::new(self.tau, self.eta)
    }

    pub fn huber(&self, data: &Dataset) -> Result<HuberParams> {
        match self.omega {
            Some(w) => HuberParams::new(w),
            None => Ok(HuberParams::from_response(
                data.response().as_slice().unwrap_or(&data.response().to_vec()),
            )),
        }
    }

    pub fn descent_options(&self) -> DescentOptions {
        DescentOptions {
            step: self.step,
            radius: self.radius,
            max_iter: self.max_iter,
            tol: self.tol,
            backtrack: self.backtrack,
            prox_threshold: self.prox_threshold,
        }
    }
}

/// Controls of [`composite_gradient_descent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub step: f64,
    /// Radius of the l2 ball; `f64::INFINITY` disables the projection.
    pub radius: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub backtrack: bool,
    pub prox_threshold: ProxThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOutput {
    pub beta: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Penalized objective after each iteration.
    pub objective_trace: Vec<f64>,
    /// Stationarity norm after each iteration.
    pub stationarity_trace: Vec<f64>,
}

/// Minimizes `risk(beta) + lambda * penalty(beta)` over the l2 ball.
///
/// The stationarity norm is that of the unconstrained problem, so a fit whose
/// ball constraint is active will run to `max_iter`.
pub fn composite_gradient_descent<R: SmoothRisk>(
    risk: &R,
    penalty: &GroupPenalty,
    lambda: f64,
    opts: &DescentOptions,
    init: Option<ArrayView1<f64>>,
) -> Result<DescentOutput> {
    let p = risk.dim();
    check_len("penalty groups", penalty.groups().dim(), p)?;
    let lam = opts.prox_threshold.effective_lambda(lambda, opts.step);
    let mut beta = match init {
        Some(b) => {
            check_len("initial beta", b.len(), p)?;
            b.to_owned()
        }
        None => Array1::zeros(p),
    };
    if opts.radius.is_finite() {
        project_in_place(beta.view_mut(), opts.radius);
    }
    let mut grad = Array1::zeros(p);
    let mut objective = risk.value_and_gradient(beta.view(), &mut grad) + penalty.value(beta.view(), lam);
    if !objective.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            detail: "objective at the initial point is not finite".into(),
        });
    }

    let mut objective_trace = Vec::new();
    let mut stationarity_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;
    let mut candidate = Array1::zeros(p);

    for k in 1..=opts.max_iter {
        let mut h = opts.step;
        let mut halvings = 0;
        let trial_objective = loop {
            candidate.assign(&beta);
            candidate.scaled_add(-h, &grad);
            penalty.prox_in_place(candidate.view_mut(), h * lam);
            if opts.radius.is_finite() {
                project_in_place(candidate.view_mut(), opts.radius);
            }
            let value = risk.value(candidate.view()) + penalty.value(candidate.view(), lam);
            let acceptable = value.is_finite() && value <= objective + BACKTRACK_SLACK;
            if acceptable || (!opts.backtrack && value.is_finite()) {
                break value;
            }
            if !opts.backtrack || halvings == MAX_HALVINGS {
                if !value.is_finite() {
                    return Err(Error::Divergence {
                        iteration: k,
                        detail: format!("objective became {value} with step {h:e}"),
                    });
                }
                break value;
            }
            h *= 0.5;
            halvings += 1;
        };

        let change = beta
            .iter()
            .zip(candidate.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut beta, &mut candidate);
        let smooth = risk.value_and_gradient(beta.view(), &mut grad);
        objective = smooth + penalty.value(beta.view(), lam);
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                detail: format!("objective became {trial_objective} after the update"),
            });
        }
        let stationarity = penalty.stationarity(grad.view(), beta.view(), lam);
        objective_trace.push(objective);
        stationarity_trace.push(stationarity);

        if stationarity <= opts.tol {
            stop_reason = StopReason::Stationary;
            break;
        }
        if change <= STEP_GUARD {
            stop_reason = StopReason::StepStalled;
            break;
        }
    }

    Ok(DescentOutput {
        beta,
        iterations: objective_trace.len(),
        converged: stop_reason == StopReason::Stationary,
        stop_reason,
        objective_trace,
        stationarity_trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: Array1<f64>,
    /// `G(beta)`, the estimate of the true coefficients.
    pub beta_thresholded: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub objective_trace: Vec<f64>,
    pub stationarity_trace: Vec<f64>,
    pub active_groups: Vec<usize>,
    pub lambda: f64,
    /// Pseudo-Huber scale, `None` for squared-loss fits.
    pub omega: Option<f64>,
    pub thresh: ThresholdParams,
}

impl FitResult {
    pub(crate) fn from_descent(
        out: DescentOutput,
        groups: &GroupPartition,
        lambda: f64,
        omega: Option<f64>,
        thresh: ThresholdParams,
    ) -> Self {
        let beta_thresholded = apply_g(out.beta.view(), &thresh);
        let active_groups = groups.active_blocks(out.beta.view());
        Self {
            beta: out.beta,
            beta_thresholded,
            iterations: out.iterations,
            converged: out.converged,
            stop_reason: out.stop_reason,
            objective_trace: out.objective_trace,
            stationarity_trace: out.stationarity_trace,
            active_groups,
            lambda,
            omega,
            thresh,
        }
    }

    pub fn final_stationarity(&self) -> Option<f64> {
        self.stationarity_trace.last().copied()
    }
}

/// Fits the robust thresholded group-sparse estimator.
pub fn fit_rct(data: &Dataset, groups: &GroupPartition, config: &SolverConfig) -> Result<FitResult> {
    config.validate()?;
    check_len("group partition", groups.dim(), data.p())?;
    let thresh = config.thresh()?;
    let huber = config.huber(data)?;
    let risk = ThresholdedRisk::thresholded(data, thresh, huber);
    let penalty = GroupPenalty::new(groups.clone());
    fit_rct_with(&risk, &penalty, config)
}

/// As [`fit_rct`] with a prebuilt risk and penalty; used along lambda paths.
pub fn fit_rct_with(
    risk: &ThresholdedRisk,
    penalty: &GroupPenalty,
    config: &SolverConfig,
) -> Result<FitResult> {
    let thresh = config.thresh()?;
    let omega = risk.loss().omega();
    let out = composite_gradient_descent(
        risk,
        penalty,
        config.lambda,
        &config.descent_options(),
        config.init.as_ref().map(|b| b.view()),
    )?;
    Ok(FitResult::from_descent(out, penalty.groups(), config.lambda, Some(omega), thresh))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationResult {
    pub taus: Vec<f64>,
    pub fits: Vec<FitResult>,
    /// `||beta(tau_{k+1}) - beta(tau_k)||_2`.
    pub distances: Vec<f64>,
}

/// Runs [`fit_rct`] along a decreasing sequence of `tau`, warm-starting each
/// fit at the previous solution.
pub fn tau_continuation(
    data: &Dataset,
    groups: &GroupPartition,
    base: &SolverConfig,
    taus: &[f64],
) -> Result<ContinuationResult> {
    if taus.is_empty() {
        return Err(Error::Parameter("tau sequence is empty".into()));
    }
    if let Some(bad) = taus.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Parameter(format!("taus must be positive, got {bad}")));
    }
    if taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Parameter("taus must be strictly decreasing".into()));
    }
    let mut fits: Vec<FitResult> = Vec::with_capacity(taus.len());
    let mut config = base.clone();
    for &tau in taus {
        config.tau = tau;
        if let Some(prev) = fits.last() {
            config.init = Some(prev.beta.clone());
        }
        fits.push(fit_rct(data, groups, &config)?);
    }
    let distances = fits
        .windows(2)
        .map(|w| {
            let d = &w[1].beta - &w[0].beta;
            d.dot(&d).sqrt()
        })
        .collect();
    Ok(ContinuationResult {
        taus: taus.to_vec(),
        fits,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_dataset, Case};
    use crate::risk::{CoefficientMap, LinearRisk};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, p), || rng.sample::<f64, _>(StandardNormal));
        let mut truth = Array1::zeros(p);
        for j in 0..p.min(3) {
            truth[j] = 1.5 - 0.5 * j as f64;
        }
        let noise = Array1::from_shape_simple_fn(n, || 0.3 * rng.sample::<f64, _>(StandardNormal));
        let y = x.dot(&truth) + noise;
        Dataset::new(x, y).unwrap().with_truth(truth).unwrap().standardized()
    }

    #[test]
    fn large_lambda_gives_zero_in_one_iteration() {
        let data = toy(40, 10, 1);
        let groups = GroupPartition::singletons(10);
        let huber = HuberParams::from_response(data.response().as_slice().unwrap());
        let risk = ThresholdedRisk::thresholded(&data, ThresholdParams::identity(), huber);
        let mut g0 = Array1::zeros(10);
        risk.value_and_gradient(Array1::zeros(10).view(), &mut g0);
        let lambda_max = g0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let config = SolverConfig {
            lambda: 1.01 * lambda_max,
            ..Default::default()
        };
        let fit = fit_rct(&data, &groups, &config).unwrap();
        assert_eq!(fit.iterations, 1);
        assert!(fit.converged);
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!(fit.active_groups.is_empty());
    }

    #[test]
    fn eta_zero_matches_identity_map_bitwise() {
        let data = toy(30, 8, 2);
        let groups = GroupPartition::singletons(8);
        let config = SolverConfig {
            lambda: 0.05,
            omega: Some(1.0),
            max_iter: 300,
            ..Default::default()
        };
        let fit = fit_rct(&data, &groups, &config).unwrap();
        let plain = LinearRisk::new(&data, CoefficientMap::Identity, HuberParams::new(1.0).unwrap());
        let out = composite_gradient_descent(
            &plain,
            &GroupPenalty::new(groups),
            0.05,
            &config.descent_options(),
            None,
        )
        .unwrap();
        assert_eq!(fit.beta, out.beta);
        assert_eq!(fit.objective_trace, out.objective_trace);
    }

    #[test]
    fn feasible_and_deterministic() {
        let data = toy(50, 20, 3);
        let groups = GroupPartition::contiguous(&[5, 5, 5, 5]).unwrap();
        let config = SolverConfig {
            lambda: 0.02,
            eta: 0.2,
            radius: 1.0,
            max_iter: 500,
            ..Default::default()
        };
        let a = fit_rct(&data, &groups, &config).unwrap();
        let b = fit_rct(&data, &groups, &config).unwrap();
        assert_eq!(a, b);
        assert!(a.beta.dot(&a.beta).sqrt() <= 1.0 + 1e-9);
    }

    #[test]
    fn converges_on_small_instance() {
        let data = toy(100, 30, 4);
        let groups = GroupPartition::singletons(30);
        let config = SolverConfig {
            lambda: 0.05,
            eta: 0.3,
            ..Default::default()
        };
        let fit = fit_rct(&data, &groups, &config).unwrap();
        assert!(fit.converged, "stopped by {:?}", fit.stop_reason);
        assert!(fit.final_stationarity().unwrap() <= 1e-6);
        let mut running = f64::INFINITY;
        for &s in &fit.stationarity_trace {
            running = running.min(s);
        }
        assert!(running <= 1e-6);
        assert_eq!(fit.active_groups, fit.groups_support());
    }

    impl FitResult {
        fn groups_support(&self) -> Vec<usize> {
            (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
        }
    }

    #[test]
    fn monotone_descent_at_small_step() {
        let data = toy(100, 50, 5);
        let groups = GroupPartition::singletons(50);
        let config = SolverConfig {
            lambda: 0.05,
            eta: 0.2,
            step: 1e-3,
            backtrack: false,
            max_iter: 2000,
            ..Default::default()
        };
        let fit = fit_rct(&data, &groups, &config).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn lambda_over_step_mode_matches_scaled_lambda() {
        let data = toy(40, 10, 6);
        let groups = GroupPartition::singletons(10);
        let base = SolverConfig {
            lambda: 1e-6,
            omega: Some(2.0),
            max_iter: 200,
            ..Default::default()
        };
        let compat = SolverConfig {
            prox_threshold: ProxThreshold::LambdaOverStep,
            ..base.clone()
        };
        let scaled = SolverConfig {
            lambda: base.lambda / (base.step * base.step),
            ..base
        };
        let a = fit_rct(&data, &groups, &compat).unwrap();
        let b = fit_rct(&data, &groups, &scaled).unwrap();
        assert_eq!(a.beta, b.beta);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = toy(20, 6, 7);
        let groups = GroupPartition::singletons(6);
        for bad in [
            SolverConfig { lambda: -1.0, ..Default::default() },
            SolverConfig { step: 0.0, ..Default::default() },
            SolverConfig { tau: 0.0, ..Default::default() },
            SolverConfig { eta: -0.1, ..Default::default() },
            SolverConfig { omega: Some(0.0), ..Default::default() },
        ] {
            assert!(matches!(fit_rct(&data, &groups, &bad), Err(Error::Parameter(_))));
        }
        let wrong = GroupPartition::singletons(5);
        assert!(matches!(
            fit_rct(&data, &wrong, &SolverConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let data = toy(30, 10, 8).standardized();
        let huge = Dataset::new(data.design().mapv(|v| v * 1e150), data.response().to_owned()).unwrap();
        let config = SolverConfig {
            lambda: 0.0,
            omega: Some(1.0),
            step: 1.0,
            radius: f64::MAX,
            backtrack: false,
            max_iter: 50,
            ..Default::default()
        };
        let err = fit_rct(&huge, &GroupPartition::singletons(10), &config).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn continuation_examples() {
        let data = toy(60, 12, 9);
        let groups = GroupPartition::singletons(12);
        let base = SolverConfig {
            lambda: 0.02,
            eta: 0.3,
            ..Default::default()
        };
        let single = tau_continuation(&data, &groups, &base, &[1e-2]).unwrap();
        assert_eq!(single.fits[0], fit_rct(&data, &groups, &base).unwrap());
        assert!(single.distances.is_empty());

        let first = fit_rct(&data, &groups, &base).unwrap();
        let warm = SolverConfig {
            init: Some(first.beta.clone()),
            ..base.clone()
        };
        let second = fit_rct(&data, &groups, &warm).unwrap();
        assert!(second.iterations <= 2);

        assert!(tau_continuation(&data, &groups, &base, &[1e-2, 1e-2]).is_err());
        assert!(tau_continuation(&data, &groups, &base, &[1e-3, 1e-2]).is_err());
        assert!(tau_continuation(&data, &groups, &base, &[]).is_err());
    }

    #[test]
    fn model_data_fit_runs() {
        let data = sample_dataset(1, Case::A, 60, 40, 11).unwrap();
        let config = SolverConfig {
            lambda: 0.1,
            eta: 0.3,
            ..Default::default()
        };
        let fit = fit_rct(&data, &GroupPartition::singletons(40), &config).unwrap();
        assert!(fit.beta.iter().all(|v| v.is_finite()));
        assert_eq!(fit.beta_thresholded.len(), 40);
    }
}
