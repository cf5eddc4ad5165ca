//! Robust high-dimensional regression with smooth coefficient thresholding.
//!
//! The estimator minimizes a pseudo-Huber risk of the thresholded
//! coefficients `G(beta) = beta * g(beta)` plus a group-lasso penalty, using
//! composite gradient descent with an l2-ball projection.

pub mod baselines;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod loss;
pub mod optimizer;
pub mod penalty;
pub mod risk;
pub mod thresholding;

pub use dataset::{Dataset, DatasetMeta};
pub use error::{Error, Result};
pub use loss::HuberParams;
pub use optimizer::{fit_rct, tau_continuation, FitResult, ProxThreshold, SolverConfig};
pub use penalty::{GroupPartition, GroupPenalty};
pub use thresholding::ThresholdParams;
