//! Smooth coefficient thresholding.
//!
//! The weight `g(u)` is a smoothed indicator of `|u| >= eta` built from two
//! arctangent steps of width `tau`. The coefficient map `G(beta)` multiplies
//! every coordinate by its own weight, so coefficients below the threshold
//! barely enter the fitted values.

use std::f64::consts::PI;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing scale and threshold level of the weight function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    tau: f64,
    eta: f64,
}

impl ThresholdParams {
    pub fn new(tau: f64, eta: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::Parameter(format!(
                "eta must be nonnegative, got {eta}"
            )));
        }
        Ok(Self { tau, eta })
    }

    /// Parameters with `eta = 0`, for which the weight is identically one.
    pub fn identity() -> Self {
        Self { tau: 0.01, eta: 0.0 }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(tau, self.eta)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.tau, eta)
    }

    /// `g(u) = h(u - eta) + h(-u - eta)`.
    #[inline]
    pub fn weight(&self, u: f64) -> f64 {
        if self.eta == 0.0 {
            return 1.0;
        }
        step(u - self.eta, self.tau) + step(-u - self.eta, self.tau)
    }

    /// `g'(u) = h'(u - eta) - h'(-u - eta)`.
    #[inline]
    pub fn weight_deriv(&self, u: f64) -> f64 {
        if self.eta == 0.0 {
            return 0.0;
        }
        step_deriv(u - self.eta, self.tau) - step_deriv(-u - self.eta, self.tau)
    }

    /// `u * g(u)`, one coordinate of `G`.
    #[inline]
    pub fn map(&self, u: f64) -> f64 {
        u * self.weight(u)
    }

    /// Derivative of `u * g(u)`; the diagonal of the Jacobian of `G`.
    #[inline]
    pub fn map_deriv(&self, u: f64) -> f64 {
        self.weight(u) + u * self.weight_deriv(u)
    }
}

// arctan(tau / |w|) / pi is the exact tail mass and avoids the cancellation
// in 1/2 - arctan(|w| / tau) / pi when |w| >> tau.
#[inline]
fn step(w: f64, tau: f64) -> f64 {
    if w < 0.0 {
        (tau / -w).atan() / PI
    } else if w > 0.0 {
        1.0 - (tau / w).atan() / PI
    } else {
        0.5
    }
}

#[inline]
fn step_deriv(w: f64, tau: f64) -> f64 {
    tau / (tau * tau + w * w) / PI
}

/// The arctangent step `h(w) = 1/2 + arctan(w / tau) / pi`.
pub fn h_step(w: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
    }
    Ok(step(w, tau))
}

pub fn g_weight(u: f64, params: &ThresholdParams) -> f64 {
    params.weight(u)
}

pub fn g_weight_deriv(u: f64, params: &ThresholdParams) -> f64 {
    params.weight_deriv(u)
}

/// Apply `G` componentwise: `xi_j = beta_j * g(beta_j)`.
pub fn apply_g(beta: ArrayView1<f64>, params: &ThresholdParams) -> Array1<f64> {
    beta.mapv(|b| params.map(b))
}

/// Diagonal of the Jacobian of `G`: `g(beta_j) + beta_j * g'(beta_j)`.
pub fn dg_diag(beta: ArrayView1<f64>, params: &ThresholdParams) -> Array1<f64> {
    beta.mapv(|b| params.map_deriv(b))
}

/// Solves `u * g(u) = v` for `u` by bisection.
///
/// `u -> u * g(u)` is odd and strictly increasing, and `g(u) >= 1/2` once
/// `|u| >= eta`, so the root for `v > 0` lies in `[0, max(eta, 2v)]`.
pub fn invert_g_scalar(v: f64, params: &ThresholdParams) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    if v < 0.0 {
        return -invert_g_scalar(-v, params);
    }
    let mut lo = 0.0_f64;
    let mut hi = params.eta.max(2.0 * v);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if params.map(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // both ends bracket the root to within one ulp
    if (params.map(lo) - v).abs() <= (params.map(hi) - v).abs() {
        lo
    } else {
        hi
    }
}
