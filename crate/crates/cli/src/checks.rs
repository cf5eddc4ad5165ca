//! Self-contained numerical checks: finite-difference gradients, prox and
//! projection oracles, stationarity decay and tau continuation.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rct_core::baselines::{fit_lasso, LassoConfig};
use rct_core::loss::mad_scale;
use rct_core::optimizer::{composite_gradient_descent, DescentOptions};
use rct_core::penalty::{group_soft_threshold, project_l2_ball};
use rct_core::risk::{empirical_gradient, ThresholdedRisk};
use rct_core::{fit_rct, tau_continuation, Dataset, GroupPartition, GroupPenalty, HuberParams, SolverConfig, ThresholdParams};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against `threshold`.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} {}: measured {:.3e} (limit {:.1e}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Central difference with one Richardson step, accurate to `O(h^4)`.
fn richardson(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn oracle_map(u: f64, tau: f64, eta: f64) -> f64 {
    let h = |w: f64| 0.5 + (w / tau).atan() / std::f64::consts::PI;
    u * (h(u - eta) + h(-u - eta))
}

/// `L(b + d) - L(b)` for the pseudo-Huber loss, written as
/// `d (2b + d) / (s(b + d) + s(b))` with `s(a) = sqrt(1 + (a/omega)^2)` so
/// that small increments do not cancel.
fn loss_increment(b: f64, d: f64, omega: f64) -> f64 {
    let s = |a: f64| (1.0 + (a / omega) * (a / omega)).sqrt();
    d * (2.0 * b + d) / (s(b + d) + s(b))
}

/// `R(beta + t e_j) - R(beta)` from residuals at `beta`, accumulated per
/// observation.
fn risk_increment(x: &Array2<f64>, resid: &[f64], j: usize, dg: f64, omega: f64) -> f64 {
    let n = resid.len();
    (0..n).map(|i| loss_increment(resid[i], -x[[i, j]] * dg, omega)).sum::<f64>() / n as f64
}

/// Maximum per-coordinate relative error between the analytic gradient and
/// finite differences of the risk over random instances with
/// `n <= 30`, `p <= 50`, `tau` in `[1e-3, 1e-1]`, `eta` in `[0, 1]`,
/// `omega` in `[0.5, 5]`.
///
/// The differences are taken of the exact risk increment along each
/// coordinate, evaluated with plain loops from the definitions.
/// `perturb` scales the analytic gradient by `1 + perturb`; nonzero values
/// exist to confirm that the check can fail.
pub fn gradient_check(seed: u64, instances: usize, perturb: f64) -> CheckOutcome {
    let mut rng = rng_for(seed, 1);
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for _ in 0..instances {
        let n = rng.random_range(5..=30);
        let p = rng.random_range(2..=50);
        let tau = 10f64.powf(rng.random_range(-3.0..=-1.0));
        let eta = rng.random_range(0.0..=1.0);
        let omega = rng.random_range(0.5..=5.0);
        let x = Array2::from_shape_simple_fn((n, p), || normal(&mut rng));
        let y = Array1::from_shape_simple_fn(n, || 2.0 * normal(&mut rng));
        let beta = Array1::from_shape_simple_fn(p, || {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(-2.0..2.0)
            }
        });
        let mapped: Vec<f64> = beta.iter().map(|&b| oracle_map(b, tau, eta)).collect();
        let resid: Vec<f64> = (0..n)
            .map(|i| y[i] - (0..p).map(|k| x[[i, k]] * mapped[k]).sum::<f64>())
            .collect();
        let data = Dataset::new(x.clone(), y).expect("shapes agree");
        let thresh = ThresholdParams::new(tau, eta).expect("valid tau");
        let huber = HuberParams::new(omega).expect("valid omega");
        let grad = empirical_gradient(&data, beta.view(), &thresh, &huber).expect("shapes agree") * (1.0 + perturb);
        for j in 0..p {
            // the map varies on the scale of tau near +-eta and of the
            // distance to the nearer kink elsewhere
            let kink = (beta[j].abs() - eta).abs();
            let h = 1e-3 * tau.hypot(kink).min(1.0);
            let fd = richardson(
                |t| risk_increment(&x, &resid, j, oracle_map(beta[j] + t, tau, eta) - mapped[j], omega),
                h,
            );
            let scale = fd.abs().max(grad[j].abs()).max(1e-300);
            worst = worst.max((fd - grad[j]).abs() / scale);
            coords += 1;
        }
    }
    CheckOutcome {
        name: "gradient".into(),
        passed: worst <= 1e-6,
        measured: worst,
        threshold: 1e-6,
        detail: format!("max relative error over {instances} instances, {coords} coordinates"),
    }
}

fn block_objective(u: &[f64], xi: &[f64], t: f64) -> f64 {
    let dist: f64 = u.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    0.5 * dist + t * norm
}

/// Coarse-to-fine grid search for `argmin 0.5 |u - xi|^2 + t |u|` in up to
/// three dimensions.
fn grid_argmin(xi: &[f64], t: f64) -> Vec<f64> {
    let d = xi.len();
    let side = 41usize;
    let mut center = vec![0.0; d];
    let mut half = xi.iter().map(|v| v.abs()).fold(0.0, f64::max) + 0.5;
    let mut best = center.clone();
    let mut best_val = block_objective(&best, xi, t);
    let mut point = vec![0.0; d];
    for _ in 0..14 {
        let spacing = 2.0 * half / (side - 1) as f64;
        for idx in 0..side.pow(d as u32) {
            let mut rest = idx;
            for k in 0..d {
                point[k] = center[k] - half + spacing * (rest % side) as f64;
                rest /= side;
            }
            let v = block_objective(&point, xi, t);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&point);
            }
        }
        center.copy_from_slice(&best);
        half = 2.0 * spacing;
    }
    best
}

/// Group soft thresholding against grid search on random blocks, reporting
/// the largest amount by which the grid beats the prox.
pub fn prox_check(seed: u64, blocks: usize) -> CheckOutcome {
    let mut rng = rng_for(seed, 2);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut zeros = 0;
    for _ in 0..blocks {
        let d = rng.random_range(1..=3);
        let scale = 10f64.powf(rng.random_range(-1.0..=1.0));
        let xi: Vec<f64> = (0..d).map(|_| scale * normal(&mut rng)).collect();
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let t = rng.random_range(0.0..=1.5) * norm;
        let prox = group_soft_threshold(
            Array1::from(xi.clone()).view(),
            &GroupPartition::new(vec![(0..d).collect()]).expect("one block"),
            t,
        )
        .expect("valid threshold");
        if prox.iter().all(|v| *v == 0.0) {
            zeros += 1;
        }
        let grid = grid_argmin(&xi, t);
        let gap = block_objective(prox.as_slice().expect("contiguous"), &xi, t) - block_objective(&grid, &xi, t);
        worst_gap = worst_gap.max(gap);
    }
    CheckOutcome {
        name: "prox".into(),
        passed: worst_gap <= 1e-5,
        measured: worst_gap.max(0.0),
        threshold: 1e-5,
        detail: format!("objective gap to grid search over {blocks} blocks ({zeros} thresholded to zero)"),
    }
}

/// Feasibility and idempotence of the l2-ball projection on random vectors.
pub fn projection_check(seed: u64, vectors: usize) -> CheckOutcome {
    let mut rng = rng_for(seed, 3);
    let mut worst_excess: f64 = 0.0;
    let mut moved = 0;
    for _ in 0..vectors {
        let d = rng.random_range(1..=20);
        let scale = 10f64.powf(rng.random_range(-1.0..=2.0));
        let v = Array1::from_shape_simple_fn(d, || scale * normal(&mut rng));
        let r = rng.random_range(0.5..=20.0);
        let once = project_l2_ball(v.view(), r).expect("positive radius");
        let twice = project_l2_ball(once.view(), r).expect("positive radius");
        let norm = once.dot(&once).sqrt();
        worst_excess = worst_excess.max((norm - r) / r);
        if twice != once {
            moved += 1;
        }
        if v.dot(&v).sqrt() <= r && once != v {
            moved += 1;
        }
    }
    CheckOutcome {
        name: "projection".into(),
        passed: worst_excess <= 1e-12 && moved == 0,
        measured: worst_excess.max(0.0),
        threshold: 1e-12,
        detail: format!("relative norm excess over {vectors} vectors; {moved} idempotence failures"),
    }
}

/// A standardized sparse regression instance.
pub fn sparse_instance(seed: u64, n: usize, p: usize, truth: &[f64], noise_sd: f64) -> Dataset {
    let mut rng = rng_for(seed, 4);
    let x = Array2::from_shape_simple_fn((n, p), || normal(&mut rng));
    let mut beta = Array1::zeros(p);
    for (j, &b) in truth.iter().enumerate() {
        beta[j] = b;
    }
    let y = x.dot(&beta) + Array1::from_shape_simple_fn(n, || noise_sd * normal(&mut rng));
    Dataset::new(x, y)
        .and_then(|d| d.with_truth(beta))
        .expect("shapes agree")
        .standardized()
}

/// Least-squares slope of `log(running min of stationarity)` against
/// `log(k)` over `k` in `[k_lo, k_hi]`, sampled on a log grid.
pub fn decay_slope(stationarity: &[f64], k_lo: usize, k_hi: usize) -> Option<f64> {
    let k_hi = k_hi.min(stationarity.len());
    if k_hi <= k_lo {
        return None;
    }
    let mut running = Vec::with_capacity(stationarity.len());
    let mut m = f64::INFINITY;
    for &s in stationarity {
        m = m.min(s);
        running.push(m);
    }
    let (lo, hi) = ((k_lo as f64).ln(), (k_hi as f64).ln());
    let mut pts: Vec<(f64, f64)> = (0..50)
        .map(|i| {
            let k = (lo + (hi - lo) * i as f64 / 49.0).exp().round() as usize;
            let k = k.clamp(k_lo, k_hi);
            ((k as f64).ln(), running[k - 1].max(f64::MIN_POSITIVE).ln())
        })
        .collect();
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() < 2 {
        return None;
    }
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRun {
    pub iterations: usize,
    pub slope: Option<f64>,
    pub final_stationarity: f64,
}

/// Runs the solver on five `n = 100`, `p = 50` instances with a tight
/// tolerance, starting from the marginal correlations `X^T y / n`, and
/// records the decay of the stationarity norm.
pub fn decay_runs(seed: u64) -> Vec<DecayRun> {
    (0..5)
        .map(|k| {
            let data = sparse_instance(seed.wrapping_add(k), 100, 50, &[1.5, -1.0, 1.0, 2.0, -1.5], 0.5);
            let risk = ThresholdedRisk::thresholded(
                &data,
                ThresholdParams::new(0.01, 0.1).expect("valid"),
                HuberParams::new(1.0).expect("valid"),
            );
            let penalty = GroupPenalty::new(GroupPartition::singletons(50));
            let opts = DescentOptions {
                step: 0.1,
                radius: 20.0,
                max_iter: 10_000,
                tol: 1e-12,
                backtrack: true,
                prox_threshold: Default::default(),
            };
            let init = data.design().t().dot(&data.response()) / data.n() as f64;
            let out = composite_gradient_descent(&risk, &penalty, 0.02, &opts, Some(init.view())).expect("finite objective");
            let trace = &out.stationarity_trace;
            DecayRun {
                iterations: out.iterations,
                slope: decay_slope(trace, 100, 10_000),
                final_stationarity: trace.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect()
}

/// Stationarity decays at least like `k^-0.4` and reaches `1e-4`.
pub fn decay_check(seed: u64) -> CheckOutcome {
    let runs = decay_runs(seed);
    // a run that is already stationary before k = 100 has nothing left to decay
    let worst_slope = runs
        .iter()
        .map(|r| r.slope.unwrap_or(f64::NEG_INFINITY))
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_final = runs.iter().map(|r| r.final_stationarity).fold(0.0, f64::max);
    CheckOutcome {
        name: "stationarity-decay".into(),
        passed: worst_slope <= -0.4 && worst_final <= 1e-4,
        measured: worst_slope,
        threshold: -0.4,
        detail: format!(
            "worst log-log slope over k from 100 to the end of each run; worst final stationarity {worst_final:.2e} (limit 1e-4); iterations {:?}",
            runs.iter().map(|r| r.iterations).collect::<Vec<_>>()
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationReport {
    pub taus: Vec<f64>,
    pub distances: Vec<f64>,
    pub supports: Vec<Vec<usize>>,
}

/// Tau continuation on a well-separated instance (`min |beta*_j| = 1`,
/// `eta = 0.5`).
pub fn continuation_run(seed: u64) -> ContinuationReport {
    let truth = [1.0, -1.5, 2.0, -1.0, 1.2];
    let data = sparse_instance(seed, 120, 30, &truth, 0.3);
    let base = SolverConfig {
        lambda: 0.02,
        eta: 0.5,
        step: 0.1,
        omega: Some(1.0),
        tol: 1e-10,
        max_iter: 50_000,
        ..Default::default()
    };
    let taus = [1e-1, 1e-2, 1e-3, 1e-4];
    let res = tau_continuation(&data, &GroupPartition::singletons(30), &base, &taus).expect("valid continuation");
    ContinuationReport {
        taus: taus.to_vec(),
        distances: res.distances,
        supports: res
            .fits
            .iter()
            .map(|f| f.beta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect())
            .collect(),
    }
}

pub fn continuation_check(seed: u64) -> CheckOutcome {
    let r = continuation_run(seed);
    let decreasing = r.distances.windows(2).all(|w| w[1] < w[0]);
    let k = r.supports.len();
    let stable = r.supports[k - 1] == r.supports[k - 2];
    let ratio = r.distances.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    CheckOutcome {
        name: "tau-continuation".into(),
        passed: decreasing && stable,
        measured: ratio,
        threshold: 1.0,
        detail: format!(
            "largest ratio of consecutive distances; distances {:?}; final support stable: {stable}",
            r.distances.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()
        ),
    }
}

/// With `eta = 0`, singleton groups and a loss scale far above the response
/// scale, the estimator is the lasso. Reports the largest coefficient
/// distance over `instances` standardized `n = 50`, `p = 20` problems.
pub fn collapse_check(seed: u64, instances: u64) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for k in 0..instances {
        let data = sparse_instance(seed.wrapping_add(1000 + k), 50, 20, &[2.0, -1.5, 1.0, 0.5], 1.0);
        let scale = mad_scale(data.response().as_slice().expect("contiguous"));
        let lambda = 0.1;
        let config = SolverConfig {
            lambda,
            eta: 0.0,
            step: 0.1,
            omega: Some(1e6 * scale),
            tol: 1e-10,
            max_iter: 100_000,
            ..Default::default()
        };
        let rct = fit_rct(&data, &GroupPartition::singletons(20), &config).expect("valid config");
        let lasso = fit_lasso(
            &data,
            lambda,
            &LassoConfig {
                tol: 1e-12,
                ..Default::default()
            },
        )
        .expect("valid config");
        let diff = &rct.beta - &lasso.beta;
        worst = worst.max(diff.dot(&diff).sqrt());
        let support = |b: &Array1<f64>| b.iter().map(|v| *v != 0.0).collect::<Vec<_>>();
        if support(&rct.beta) != support(&lasso.beta) {
            mismatched += 1;
        }
    }
    CheckOutcome {
        name: "eta-zero-collapse".into(),
        passed: worst <= 1e-3 && mismatched == 0,
        measured: worst,
        threshold: 1e-3,
        detail: format!("max l2 distance to the lasso over {instances} instances; {mismatched} support mismatches"),
    }
}

/// Every check, in reporting order.
pub fn run_all(seed: u64, gradient_perturb: f64) -> Vec<CheckOutcome> {
    vec![
        gradient_check(seed, 100, gradient_perturb),
        prox_check(seed, 50),
        projection_check(seed, 1000),
        decay_check(seed),
        continuation_check(seed),
    ]
}
