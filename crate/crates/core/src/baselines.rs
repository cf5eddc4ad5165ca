//! Lasso and adaptive lasso comparators.
//!
//! Both minimize `(1/2n)|y - X beta|^2 + lambda sum_j w_j |beta_j|` by
//! proximal gradient with step `1/L`, where `L` is a power-iteration estimate
//! of the top eigenvalue of `X^T X / n`. Momentum with objective-based
//! restart is used on top of the plain step.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::optimizer::{DescentOutput, FitResult, StopReason};
use crate::penalty::{GroupPartition, GroupPenalty};
use crate::risk::{CoefficientMap, ColumnDesign, LinearRisk, SmoothRisk, SquaredLoss};
use crate::thresholding::ThresholdParams;

/// Stabilizer in the adaptive weights `1 / (|pilot_j| + ADAPTIVE_EPS)`.
pub const ADAPTIVE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub power_iters: usize,
    #[serde(skip)]
    pub init: Option<Array1<f64>>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            tol: 1e-7,
            power_iters: 100,
            init: None,
        }
    }
}

/// Least-squares risk with a cached Lipschitz estimate, reusable along a
/// lambda path.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    risk: LinearRisk<SquaredLoss>,
    lipschitz: f64,
}

impl LassoProblem {
    pub fn new(data: &Dataset, power_iters: usize) -> Self {
        let risk = LinearRisk::new(data, CoefficientMap::Identity, SquaredLoss);
        let lipschitz = top_eigenvalue(risk.design(), power_iters);
        Self { risk, lipschitz }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn risk(&self) -> &LinearRisk<SquaredLoss> {
        &self.risk
    }

    /// Smallest lambda with an all-zero solution: `max_j |X^T y / n|_j / w_j`.
    pub fn lambda_max(&self, weights: Option<&[f64]>) -> f64 {
        let p = self.risk.dim();
        let mut grad = Array1::zeros(p);
        self.risk.value_and_gradient(Array1::zeros(p).view(), &mut grad);
        (0..p)
            .map(|j| {
                let w = weights.map_or(1.0, |w| w[j]);
                if w > 0.0 {
                    grad[j].abs() / w
                } else if grad[j] != 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn fit(&self, lambda: f64, weights: Option<&[f64]>, config: &LassoConfig) -> Result<FitResult> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda must be nonnegative and finite, got {lambda}"
            )));
        }
        if !(config.tol > 0.0) || config.max_iter == 0 {
            return Err(Error::Parameter("lasso needs tol > 0 and max_iter >= 1".into()));
        }
        let p = self.risk.dim();
        let groups = GroupPartition::singletons(p);
        let penalty = match weights {
            Some(w) => GroupPenalty::weighted(groups.clone(), w.to_vec())?,
            None => GroupPenalty::new(groups.clone()),
        };
        let out = accelerated_descent(
            &self.risk,
            &penalty,
            lambda,
            1.0 / self.lipschitz.max(f64::MIN_POSITIVE),
            config,
        )?;
        Ok(FitResult::from_descent(out, &groups, lambda, None, ThresholdParams::identity()))
    }
}

/// Power iteration for the top eigenvalue of `X^T X / n`.
fn top_eigenvalue(design: &ColumnDesign, iters: usize) -> f64 {
    let (n, p) = (design.n() as f64, design.p());
    let mut v = Array1::from_elem(p, 1.0 / (p as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let w = design.apply_transpose(design.apply(v.view()).view()) / n;
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = v.dot(&w);
        v = w / norm;
    }
    estimate
}

fn accelerated_descent<R: SmoothRisk>(
    risk: &R,
    penalty: &GroupPenalty,
    lambda: f64,
    step: f64,
    config: &LassoConfig,
) -> Result<DescentOutput> {
    let p = risk.dim();
    let mut x = match &config.init {
        Some(b) => {
            check_len("initial beta", b.len(), p)?;
            b.clone()
        }
        None => Array1::zeros(p),
    };
    let mut grad_x = Array1::zeros(p);
    let mut objective = risk.value_and_gradient(x.view(), &mut grad_x) + penalty.value(x.view(), lambda);
    let mut y = x.clone();
    let mut grad_y = grad_x.clone();
    let mut t = 1.0_f64;
    let mut objective_trace = Vec::new();
    let mut stationarity_trace = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;

    for k in 1..=config.max_iter {
        let mut next = y.clone();
        next.scaled_add(-step, &grad_y);
        penalty.prox_in_place(next.view_mut(), step * lambda);
        let smooth = risk.value_and_gradient(next.view(), &mut grad_x);
        let value = smooth + penalty.value(next.view(), lambda);
        if !value.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                detail: format!("lasso objective became {value}"),
            });
        }
        let stationarity = penalty.stationarity(grad_x.view(), next.view(), lambda);
        objective_trace.push(value);
        stationarity_trace.push(stationarity);

        if value > objective {
            // restart the momentum from the last accepted point
            t = 1.0;
            y.assign(&x);
            risk.value_and_gradient(y.view(), &mut grad_y);
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y = &next + &((&next - &x) * momentum);
        t = t_next;
        let change = (&next - &x).mapv(|d| d * d).sum().sqrt();
        x = next;
        objective = value;
        if stationarity <= config.tol {
            stop_reason = StopReason::Stationary;
            break;
        }
        if change == 0.0 {
            stop_reason = StopReason::StepStalled;
            break;
        }
        if momentum == 0.0 {
            grad_y.assign(&grad_x);
        } else {
            risk.value_and_gradient(y.view(), &mut grad_y);
        }
    }

    Ok(DescentOutput {
        beta: x,
        iterations: objective_trace.len(),
        converged: stop_reason == StopReason::Stationary,
        stop_reason,
        objective_trace,
        stationarity_trace,
    })
}

pub fn fit_lasso(data: &Dataset, lambda: f64, config: &LassoConfig) -> Result<FitResult> {
    LassoProblem::new(data, config.power_iters).fit(lambda, None, config)
}

/// Weights `1 / (|pilot_j| + 1e-6)`.
pub fn adaptive_weights(pilot: ArrayView1<f64>) -> Vec<f64> {
    pilot.iter().map(|b| 1.0 / (b.abs() + ADAPTIVE_EPS)).collect()
}

pub fn fit_adaptive_lasso(
    data: &Dataset,
    lambda: f64,
    pilot: &FitResult,
    config: &LassoConfig,
) -> Result<FitResult> {
    check_len("pilot coefficients", pilot.beta.len(), data.p())?;
    let weights = adaptive_weights(pilot.beta.view());
    LassoProblem::new(data, config.power_iters).fit(lambda, Some(&weights), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, p), || rng.sample::<f64, _>(StandardNormal));
        let truth = Array1::from_shape_fn(p, |j| if j < 2 { 2.0 - j as f64 } else { 0.0 });
        let y = x.dot(&truth) + Array1::from_shape_simple_fn(n, || 0.5 * rng.sample::<f64, _>(StandardNormal));
        Dataset::new(x, y).unwrap().standardized()
    }

    fn objective(data: &Dataset, beta: &Array1<f64>, lambda: f64, w: &[f64]) -> f64 {
        let r = &data.response() - &data.design().dot(beta);
        r.dot(&r) / (2.0 * data.n() as f64)
            + lambda * beta.iter().zip(w).map(|(b, w)| w * b.abs()).sum::<f64>()
    }

    // cyclic coordinate descent, run to machine precision
    fn coordinate_descent(data: &Dataset, lambda: f64, w: &[f64]) -> Array1<f64> {
        let (n, p) = (data.n() as f64, data.p());
        let x = data.design();
        let y = data.response();
        let mut beta = Array1::<f64>::zeros(p);
        for _ in 0..20_000 {
            let mut max_change = 0.0_f64;
            for j in 0..p {
                let col = x.column(j);
                let norm_sq = col.dot(&col) / n;
                let partial = &y - &x.dot(&beta) + &(&col * beta[j]);
                let z = col.dot(&partial) / n;
                let level = lambda * w[j];
                let new = z.signum() * (z.abs() - level).max(0.0) / norm_sq;
                max_change = max_change.max((new - beta[j]).abs());
                beta[j] = new;
            }
            if max_change < 1e-14 {
                break;
            }
        }
        beta
    }

    #[test]
    fn power_iteration_matches_gram_spectrum() {
        let data = random_data(30, 4, 1);
        let problem = LassoProblem::new(&data, 100);
        let gram = data.design().t().dot(&data.design()) / 30.0;
        // top eigenvalue by repeated squaring of the 4x4 Gram matrix
        let mut m = gram.clone();
        for _ in 0..8 {
            let trace: f64 = m.diag().sum();
            m = m.dot(&m) / (trace * trace);
        }
        let col = m.column(0).to_owned();
        let v = &col / col.dot(&col).sqrt();
        let exact = v.dot(&gram.dot(&v));
        // the Rayleigh quotient approaches the top eigenvalue from below
        assert!(problem.lipschitz() <= exact * (1.0 + 1e-12));
        assert!(exact - problem.lipschitz() < 1e-5 * exact);
        let long = LassoProblem::new(&data, 2000);
        assert!((long.lipschitz() - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn lambda_max_zeroes_the_fit() {
        let data = random_data(40, 8, 2);
        let problem = LassoProblem::new(&data, 100);
        let lmax = problem.lambda_max(None);
        let xty = data.design().t().dot(&data.response()) / 40.0;
        assert!((lmax - xty.iter().fold(0.0_f64, |m, v| m.max(v.abs()))).abs() < 1e-14);
        let fit = fit_lasso(&data, lmax, &LassoConfig::default()).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        let fit = fit_lasso(&data, 0.9 * lmax, &LassoConfig::default()).unwrap();
        assert!(fit.beta.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn orthonormal_design_closed_form() {
        // columns scaled so that X^T X / n = I
        let n = 8;
        let mut x = Array2::<f64>::zeros((n, 4));
        let s = (n as f64 / 2.0).sqrt();
        for j in 0..4 {
            x[[2 * j, j]] = s;
            x[[2 * j + 1, j]] = s;
        }
        let y = Array1::from(vec![1.0, 0.4, -0.3, -0.5, 0.05, 0.02, 2.0, -1.0]);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let lambda = 0.2;
        let fit = fit_lasso(&data, lambda, &LassoConfig::default()).unwrap();
        let z = x.t().dot(&y) / n as f64;
        for j in 0..4 {
            let expected = z[j].signum() * (z[j].abs() - lambda).max(0.0);
            assert!((fit.beta[j] - expected).abs() < 1e-10, "{j}: {} vs {expected}", fit.beta[j]);
        }
        assert_eq!(fit.beta[2], 0.0);
    }

    #[test]
    fn matches_coordinate_descent_oracle() {
        for seed in 0..5 {
            let data = random_data(20, 5, seed);
            let lambda = 0.1 + 0.05 * seed as f64;
            let ones = vec![1.0; 5];
            let fit = fit_lasso(&data, lambda, &LassoConfig::default()).unwrap();
            let oracle = coordinate_descent(&data, lambda, &ones);
            let gap = objective(&data, &fit.beta, lambda, &ones) - objective(&data, &oracle, lambda, &ones);
            assert!(gap.abs() < 1e-6, "seed {seed}: gap {gap}");
            assert!(fit.converged);
        }
    }

    #[test]
    fn kkt_conditions_hold() {
        let data = random_data(50, 30, 7);
        let lambda = 0.08;
        let fit = fit_lasso(&data, lambda, &LassoConfig::default()).unwrap();
        let r = &data.response() - &data.design().dot(&fit.beta);
        let corr = data.design().t().dot(&r) / 50.0;
        for j in 0..30 {
            if fit.beta[j] == 0.0 {
                assert!(corr[j].abs() <= lambda + 1e-6);
            } else {
                assert!((corr[j] - lambda * fit.beta[j].signum()).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn adaptive_lasso_examples() {
        let data = random_data(30, 6, 9);
        let zero_pilot = FitResult::from_descent(
            DescentOutput {
                beta: Array1::zeros(6),
                iterations: 0,
                converged: true,
                stop_reason: StopReason::Stationary,
                objective_trace: vec![],
                stationarity_trace: vec![],
            },
            &GroupPartition::singletons(6),
            0.0,
            None,
            ThresholdParams::identity(),
        );
        let lmax = LassoProblem::new(&data, 100).lambda_max(None);
        let fit = fit_adaptive_lasso(&data, 1e-6 * lmax * 1.0001, &zero_pilot, &LassoConfig::default()).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));

        // uniform weights c reproduce the lasso at lambda * c
        let mut pilot = zero_pilot.clone();
        pilot.beta.fill(0.5 - ADAPTIVE_EPS);
        let ada = fit_adaptive_lasso(&data, 0.05, &pilot, &LassoConfig::default()).unwrap();
        let plain = fit_lasso(&data, 0.1, &LassoConfig::default()).unwrap();
        let diff = &ada.beta - &plain.beta;
        assert!(diff.dot(&diff).sqrt() < 1e-6);

        let lasso = fit_lasso(&data, 0.05, &LassoConfig::default()).unwrap();
        let w = adaptive_weights(lasso.beta.view());
        let ada = fit_adaptive_lasso(&data, 0.01, &lasso, &LassoConfig::default()).unwrap();
        let oracle = coordinate_descent(&data, 0.01, &w);
        let gap = objective(&data, &ada.beta, 0.01, &w) - objective(&data, &oracle, 0.01, &w);
        assert!(gap.abs() < 1e-6, "gap {gap}");
    }

    #[test]
    fn rejects_negative_lambda() {
        let data = random_data(10, 3, 0);
        assert!(matches!(
            fit_lasso(&data, -0.1, &LassoConfig::default()),
            Err(Error::Parameter(_))
        ));
    }
}
