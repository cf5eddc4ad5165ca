//! Pseudo-Huber loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Consistency constant turning the median absolute deviation into a
/// standard-deviation estimate under normality.
const MAD_TO_SD: f64 = 0.6745;
/// Classic Huber tuning constant (95% efficiency at the normal).
const HUBER_EFFICIENCY: f64 = 1.345;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberParams {
    omega: f64,
}

impl HuberParams {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::Parameter(format!(
                "omega must be positive and finite, got {omega}"
            )));
        }
        Ok(Self { omega })
    }

    /// `omega = 1.345 * median(|y - median(y)|) / 0.6745`.
    ///
    /// Falls back to `omega = 1` for a constant response.
    pub fn from_response(y: &[f64]) -> Self {
        let scale = mad_scale(y);
        let omega = HUBER_EFFICIENCY * scale;
        if omega > 0.0 && omega.is_finite() {
            Self { omega }
        } else {
            Self { omega: 1.0 }
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `omega^2 (sqrt(1 + (a/omega)^2) - 1)`, evaluated as
    /// `omega a^2 / (hypot(omega, a) + omega)` to stay accurate for small `a`.
    #[inline]
    pub fn loss(&self, a: f64) -> f64 {
        let w = self.omega;
        w * a * a / (w.hypot(a) + w)
    }

    /// `L'(a) = a / sqrt(1 + (a/omega)^2)`.
    #[inline]
    pub fn deriv(&self, a: f64) -> f64 {
        a * self.weight(a)
    }

    /// `L'(r) / r = 1 / sqrt(1 + (r/omega)^2)`, equal to 1 at `r = 0`.
    #[inline]
    pub fn weight(&self, r: f64) -> f64 {
        self.omega / self.omega.hypot(r)
    }
}

pub fn pseudo_huber(a: f64, params: &HuberParams) -> f64 {
    params.loss(a)
}

pub fn pseudo_huber_deriv(a: f64, params: &HuberParams) -> f64 {
    params.deriv(a)
}

pub fn irls_weight(residual: f64, params: &HuberParams) -> f64 {
    params.weight(residual)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// `median(|y - median(y)|) / 0.6745`.
pub fn mad_scale(y: &[f64]) -> f64 {
    let mut buf = y.to_vec();
    let center = median(&mut buf);
    let mut dev: Vec<f64> = y.iter().map(|v| (v - center).abs()).collect();
    median(&mut dev) / MAD_TO_SD
}
