//! Empirical risk of the thresholded linear model and its gradient.
//!
//! [`LinearRisk`] is the evaluator shared by every solver in the crate: it
//! stores the design column-major so that both `X xi` (over the nonzero
//! coefficients only) and `X^T r` touch contiguous memory.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::loss::HuberParams;
use crate::penalty::{GroupPartition, GroupPenalty};
use crate::thresholding::ThresholdParams;

/// A smooth, differentiable data-fit term `f(beta)`.
pub trait SmoothRisk: Sync {
    fn dim(&self) -> usize;

    fn value(&self, beta: ArrayView1<f64>) -> f64;

    /// Returns `f(beta)` and writes `grad f(beta)` into `grad`.
    fn value_and_gradient(&self, beta: ArrayView1<f64>, grad: &mut Array1<f64>) -> f64;
}

/// Per-observation loss of a residual `a = y - <x, xi>`.
pub trait ScalarLoss: Copy + Send + Sync {
    fn loss(&self, a: f64) -> f64;
    fn deriv(&self, a: f64) -> f64;
}

impl ScalarLoss for HuberParams {
    #[inline]
    fn loss(&self, a: f64) -> f64 {
        HuberParams::loss(self, a)
    }

    #[inline]
    fn deriv(&self, a: f64) -> f64 {
        HuberParams::deriv(self, a)
    }
}

/// `a^2 / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl ScalarLoss for SquaredLoss {
    #[inline]
    fn loss(&self, a: f64) -> f64 {
        0.5 * a * a
    }

    #[inline]
    fn deriv(&self, a: f64) -> f64 {
        a
    }
}

/// How coefficients enter the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientMap {
    Identity,
    Threshold(ThresholdParams),
}

/// Design stored as a `p x n` row-major array (one contiguous row per predictor).
#[derive(Debug, Clone)]
pub struct ColumnDesign {
    cols: Array2<f64>,
}

impl ColumnDesign {
    pub fn new(design: ArrayView2<f64>) -> Self {
        Self {
            cols: design.t().as_standard_layout().into_owned(),
        }
    }

    pub fn n(&self) -> usize {
        self.cols.ncols()
    }

    pub fn p(&self) -> usize {
        self.cols.nrows()
    }

    /// `X v` as a sum of scaled columns, skipping zero coefficients.
    pub fn apply(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.n());
        for (j, &c) in v.iter().enumerate() {
            if c != 0.0 {
                out.scaled_add(c, &self.cols.row(j));
            }
        }
        out
    }

    /// `X^T r`.
    pub fn apply_transpose(&self, r: ArrayView1<f64>) -> Array1<f64> {
        self.cols.dot(&r)
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.cols.row(j)
    }
}

/// `(1/n) sum_i loss(y_i - <x_i, map(beta)>)`.
#[derive(Debug, Clone)]
pub struct LinearRisk<L: ScalarLoss> {
    design: ColumnDesign,
    response: Array1<f64>,
    map: CoefficientMap,
    loss: L,
}

impl<L: ScalarLoss> LinearRisk<L> {
    pub fn new(data: &Dataset, map: CoefficientMap, loss: L) -> Self {
        Self {
            design: ColumnDesign::new(data.design()),
            response: data.response().to_owned(),
            map,
            loss,
        }
    }

    pub fn design(&self) -> &ColumnDesign {
        &self.design
    }

    pub fn map(&self) -> CoefficientMap {
        self.map
    }

    pub fn loss(&self) -> L {
        self.loss
    }

    fn mapped(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        match &self.map {
            CoefficientMap::Identity => beta.to_owned(),
            CoefficientMap::Threshold(t) => beta.mapv(|b| if b == 0.0 { 0.0 } else { t.map(b) }),
        }
    }

    fn residuals(&self, xi: ArrayView1<f64>) -> Array1<f64> {
        let fitted = self.design.apply(xi);
        &self.response - &fitted
    }
}

impl<L: ScalarLoss> SmoothRisk for LinearRisk<L> {
    fn dim(&self) -> usize {
        self.design.p()
    }

    fn value(&self, beta: ArrayView1<f64>) -> f64 {
        let resid = self.residuals(self.mapped(beta).view());
        resid.iter().map(|&a| self.loss.loss(a)).sum::<f64>() / self.design.n() as f64
    }

    fn value_and_gradient(&self, beta: ArrayView1<f64>, grad: &mut Array1<f64>) -> f64 {
        let n = self.design.n() as f64;
        let resid = self.residuals(self.mapped(beta).view());
        let value = resid.iter().map(|&a| self.loss.loss(a)).sum::<f64>() / n;
        // d/dxi L(y - X xi) = X^T L'(X xi - y), and L' is odd.
        let score = resid.mapv(|a| -self.loss.deriv(a));
        let back = self.design.apply_transpose(score.view());
        match &self.map {
            CoefficientMap::Identity => Zip::from(grad).and(&back).for_each(|g, &s| *g = s / n),
            CoefficientMap::Threshold(t) => {
                // iterates are mostly exact zeros; G'(0) = g(0) is shared
                let at_zero = t.map_deriv(0.0);
                Zip::from(grad).and(&back).and(beta).for_each(|g, &s, &b| {
                    *g = (s / n) * if b == 0.0 { at_zero } else { t.map_deriv(b) }
                })
            }
        }
        value
    }
}

/// The pseudo-Huber risk of the thresholded coefficients.
pub type ThresholdedRisk = LinearRisk<HuberParams>;

impl ThresholdedRisk {
    pub fn thresholded(data: &Dataset, thresh: ThresholdParams, huber: HuberParams) -> Self {
        LinearRisk::new(data, CoefficientMap::Threshold(thresh), huber)
    }
}

/// Empirical risk `(1/n) sum_i L(y_i - <x_i, G(beta)>)`.
pub fn empirical_risk(
    data: &Dataset,
    beta: ArrayView1<f64>,
    thresh: &ThresholdParams,
    huber: &HuberParams,
) -> Result<f64> {
    check_len("beta", beta.len(), data.p())?;
    Ok(ThresholdedRisk::thresholded(data, *thresh, *huber).value(beta))
}

/// Exact gradient of [`empirical_risk`].
pub fn empirical_gradient(
    data: &Dataset,
    beta: ArrayView1<f64>,
    thresh: &ThresholdParams,
    huber: &HuberParams,
) -> Result<Array1<f64>> {
    check_len("beta", beta.len(), data.p())?;
    let risk = ThresholdedRisk::thresholded(data, *thresh, *huber);
    let mut grad = Array1::zeros(data.p());
    risk.value_and_gradient(beta, &mut grad);
    Ok(grad)
}

/// Norm of the minimum-norm element of `grad + lambda * d(sum_b ||beta_b||)`.
///
/// Zero exactly when `beta` is a first-order stationary point of the
/// unconstrained penalized objective.
pub fn stationarity_norm(
    grad: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    groups: &GroupPartition,
    lambda: f64,
) -> Result<f64> {
    check_len("grad", grad.len(), groups.dim())?;
    check_len("beta", beta.len(), groups.dim())?;
    Ok(GroupPenalty::new(groups.clone()).stationarity(grad, beta, lambda))
}

/// Forward-difference estimate of `v^T H v` along a unit direction `v`.
pub fn directional_curvature(
    data: &Dataset,
    beta: ArrayView1<f64>,
    v: ArrayView1<f64>,
    eps: f64,
    thresh: &ThresholdParams,
    huber: &HuberParams,
) -> Result<f64> {
    check_len("beta", beta.len(), data.p())?;
    check_len("direction", v.len(), data.p())?;
    let norm = v.dot(&v).sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Parameter(format!(
            "direction must have unit norm, got {norm}"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let risk = ThresholdedRisk::thresholded(data, *thresh, *huber);
    let mut g0 = Array1::zeros(data.p());
    let mut g1 = Array1::zeros(data.p());
    risk.value_and_gradient(beta, &mut g0);
    let shifted = &beta + &(&v * eps);
    risk.value_and_gradient(shifted.view(), &mut g1);
    Ok(v.dot(&(&g1 - &g0)) / eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Dataset {
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.5..1.5));
        let y = Array1::from_shape_fn(n, |_| rng.random_range(-3.0..3.0));
        Dataset::new(x, y).unwrap()
    }

    fn naive_risk(data: &Dataset, beta: &[f64], t: &ThresholdParams, h: &HuberParams) -> f64 {
        let (x, y) = (data.design(), data.response());
        let mut total = 0.0;
        for i in 0..data.n() {
            let mut fit = 0.0;
            for j in 0..data.p() {
                fit += x[[i, j]] * beta[j] * t.weight(beta[j]);
            }
            let a = y[i] - fit;
            let w = h.omega();
            total += w * w * ((1.0 + (a / w) * (a / w)).sqrt() - 1.0);
        }
        total / data.n() as f64
    }

    #[test]
    fn risk_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_dataset(&mut rng, 5, 3);
        let t = ThresholdParams::new(0.05, 0.3).unwrap();
        let h = HuberParams::new(1.3).unwrap();
        for _ in 0..10 {
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fast = empirical_risk(&data, Array1::from(beta.clone()).view(), &t, &h).unwrap();
            assert!((fast - naive_risk(&data, &beta, &t, &h)).abs() < 1e-12);
        }
    }

    #[test]
    fn risk_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = ThresholdParams::new(0.01, 0.2).unwrap();
        let h = HuberParams::new(2.0).unwrap();
        let x = Array2::from_shape_fn((8, 4), |_| rng.random_range(-1.0..1.0));
        let beta = array![1.0, -0.5, 0.0, 0.7];
        let xi = crate::thresholding::apply_g(beta.view(), &t);
        let y = x.dot(&xi);
        let data = Dataset::new(x, y.clone()).unwrap();
        assert!(empirical_risk(&data, beta.view(), &t, &h).unwrap().abs() < 1e-15);
        let g = empirical_gradient(&data, beta.view(), &t, &h).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));

        let at_zero = empirical_risk(&data, Array1::zeros(4).view(), &t, &h).unwrap();
        let direct = y.iter().map(|&v| h.loss(v)).sum::<f64>() / 8.0;
        assert!((at_zero - direct).abs() < 1e-14);
        assert!(empirical_risk(&data, array![1.0].view(), &t, &h).is_err());
    }

    #[test]
    fn eta_zero_gradient_is_plain_huber_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = random_dataset(&mut rng, 12, 5);
        let t = ThresholdParams::new(0.01, 0.0).unwrap();
        let h = HuberParams::new(0.8).unwrap();
        let beta = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
        let g = empirical_gradient(&data, beta.view(), &t, &h).unwrap();
        let (x, y) = (data.design(), data.response());
        for j in 0..5 {
            let mut s = 0.0;
            for i in 0..12 {
                let r = x.row(i).dot(&beta) - y[i];
                s += h.deriv(r) * x[[i, j]];
            }
            assert!((g[j] - s / 12.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_dataset(&mut rng, 10, 6);
        let t = ThresholdParams::new(0.05, 0.4).unwrap();
        let h = HuberParams::new(1.0).unwrap();
        let beta = Array1::from_shape_fn(6, |_| rng.random_range(-1.5..1.5));
        let g = empirical_gradient(&data, beta.view(), &t, &h).unwrap();
        let step = 1e-6;
        for j in 0..6 {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += step;
            down[j] -= step;
            let fd = (empirical_risk(&data, up.view(), &t, &h).unwrap()
                - empirical_risk(&data, down.view(), &t, &h).unwrap())
                / (2.0 * step);
            let scale = fd.abs().max(g[j].abs());
            assert!((fd - g[j]).abs() <= 1e-6 * scale, "coordinate {j}");
        }
    }

    #[test]
    fn risk_invariant_under_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = random_dataset(&mut rng, 9, 4);
        let t = ThresholdParams::new(0.02, 0.5).unwrap();
        let h = HuberParams::new(1.5).unwrap();
        let beta = array![0.9, -0.1, 0.6, 2.0];
        let order = [4, 2, 8, 0, 1, 7, 3, 6, 5];
        let permuted = data.subset_rows(&order).unwrap();
        let a = empirical_risk(&data, beta.view(), &t, &h).unwrap();
        let b = empirical_risk(&permuted, beta.view(), &t, &h).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn large_omega_approaches_least_squares() {
        for &a in &[1e-3, 0.5, 3.0, 20.0] {
            for &w in &[10.0, 1e3, 1e6] {
                let h = HuberParams::new(w).unwrap();
                let gap = (h.loss(a) - 0.5 * a * a).abs();
                assert!(gap <= a.powi(4) / (8.0 * w * w) + 8.0 * f64::EPSILON * a * a);
            }
        }
    }

    #[test]
    fn curvature_of_quadratic_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = random_dataset(&mut rng, 30, 4);
        let t = ThresholdParams::new(0.01, 0.0).unwrap();
        let h = HuberParams::new(1e6).unwrap();
        let beta = array![0.3, -0.2, 0.1, 0.0];
        let mut v = array![0.5_f64, -1.0, 0.25, 2.0];
        let norm: f64 = v.dot(&v).sqrt();
        v /= norm;
        let gram = data.design().t().dot(&data.design()) / 30.0;
        let exact = v.dot(&gram.dot(&v));
        let probe = directional_curvature(&data, beta.view(), v.view(), 1e-5, &t, &h).unwrap();
        assert!((probe - exact).abs() < 1e-4);
        let neg = -&v;
        let back = directional_curvature(&data, beta.view(), neg.view(), 1e-5, &t, &h).unwrap();
        assert!((back - exact).abs() < 1e-4);
        assert!(directional_curvature(&data, beta.view(), (&v * 2.0).view(), 1e-5, &t, &h).is_err());
    }
}
