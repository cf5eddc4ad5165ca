//! Group partitions, the group-lasso penalty and its proximal map.

use ndarray::{Array1, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Disjoint blocks of coordinate indices covering `0..p`.
///
/// Blocks need not be contiguous in index order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct GroupPartition {
    blocks: Vec<Vec<usize>>,
    dim: usize,
}

impl GroupPartition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let dim: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; dim];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::Parameter(format!("group {b} is empty")));
            }
            for &j in block {
                if j >= dim {
                    return Err(Error::Parameter(format!(
                        "group {b} contains index {j} outside 0..{dim}"
                    )));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::Parameter(format!(
                        "index {j} appears in more than one group"
                    )));
                }
            }
        }
        Ok(Self { blocks, dim })
    }

    /// One block per coordinate; the group penalty becomes the l1 norm.
    pub fn singletons(p: usize) -> Self {
        Self {
            blocks: (0..p).map(|j| vec![j]).collect(),
            dim: p,
        }
    }

    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut start = 0;
        let blocks = sizes
            .iter()
            .map(|&d| {
                let block: Vec<usize> = (start..start + d).collect();
                start += d;
                block
            })
            .collect();
        Self::new(blocks)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// Block index of every coordinate.
    pub fn membership(&self) -> Vec<usize> {
        let mut owner = vec![0; self.dim];
        for (b, block) in self.blocks.iter().enumerate() {
            for &j in block {
                owner[j] = b;
            }
        }
        owner
    }

    pub fn block_norm(&self, b: usize, v: ArrayView1<f64>) -> f64 {
        self.blocks[b]
            .iter()
            .map(|&j| v[j] * v[j])
            .sum::<f64>()
            .sqrt()
    }

    /// Indices of blocks with at least one nonzero entry.
    pub fn active_blocks(&self, v: ArrayView1<f64>) -> Vec<usize> {
        (0..self.blocks.len())
            .filter(|&b| self.blocks[b].iter().any(|&j| v[j] != 0.0))
            .collect()
    }

    pub(crate) fn check_dim(&self, what: &str, len: usize) -> Result<()> {
        check_len(what, len, self.dim)
    }
}

impl TryFrom<Vec<Vec<usize>>> for GroupPartition {
    type Error = Error;

    fn try_from(blocks: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(blocks)
    }
}

impl From<GroupPartition> for Vec<Vec<usize>> {
    fn from(g: GroupPartition) -> Self {
        g.blocks
    }
}

/// Weighted group-lasso penalty `lambda * sum_b w_b ||beta_b||_2`.
///
/// Unit weights give the plain group lasso; per-coordinate weights on a
/// singleton partition give the adaptive lasso.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPenalty {
    groups: GroupPartition,
    weights: Vec<f64>,
}

impl GroupPenalty {
    pub fn new(groups: GroupPartition) -> Self {
        let weights = vec![1.0; groups.len()];
        Self { groups, weights }
    }

    pub fn weighted(groups: GroupPartition, weights: Vec<f64>) -> Result<Self> {
        check_len("group weights", weights.len(), groups.len())?;
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Parameter(
                "group weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { groups, weights })
    }

    pub fn groups(&self) -> &GroupPartition {
        &self.groups
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn value(&self, beta: ArrayView1<f64>, lambda: f64) -> f64 {
        let total: f64 = (0..self.groups.len())
            .map(|b| self.weights[b] * self.groups.block_norm(b, beta))
            .sum();
        lambda * total
    }

    /// In-place group soft thresholding at level `t * w_b` per block.
    pub fn prox_in_place(&self, mut xi: ArrayViewMut1<f64>, t: f64) {
        for (b, block) in self.groups.blocks.iter().enumerate() {
            let norm = self.groups.block_norm(b, xi.view());
            let level = t * self.weights[b];
            if norm <= level || norm == 0.0 {
                for &j in block {
                    xi[j] = 0.0;
                }
            } else {
                let scale = (norm - level) / norm;
                for &j in block {
                    xi[j] *= scale;
                }
            }
        }
    }

    /// Norm of the minimum-norm element of `grad + lambda * d(penalty)(beta)`.
    pub fn stationarity(&self, grad: ArrayView1<f64>, beta: ArrayView1<f64>, lambda: f64) -> f64 {
        let mut total = 0.0;
        for (b, block) in self.groups.blocks.iter().enumerate() {
            let level = lambda * self.weights[b];
            let norm = self.groups.block_norm(b, beta);
            if norm > 0.0 {
                total += block
                    .iter()
                    .map(|&j| {
                        let r = grad[j] + level * beta[j] / norm;
                        r * r
                    })
                    .sum::<f64>();
            } else {
                let excess = (self.groups.block_norm(b, grad) - level).max(0.0);
                total += excess * excess;
            }
        }
        total.sqrt()
    }
}

/// `lambda * sum_b ||beta_b||_2`.
pub fn penalty_value(beta: ArrayView1<f64>, groups: &GroupPartition, lambda: f64) -> Result<f64> {
    groups.check_dim("beta", beta.len())?;
    let total: f64 = (0..groups.len()).map(|b| groups.block_norm(b, beta)).sum();
    Ok(lambda * total)
}

/// Group-wise soft thresholding `S_t`.
pub fn group_soft_threshold(
    xi: ArrayView1<f64>,
    groups: &GroupPartition,
    t: f64,
) -> Result<Array1<f64>> {
    groups.check_dim("xi", xi.len())?;
    if !(t >= 0.0) {
        return Err(Error::Parameter(format!("threshold must be nonnegative, got {t}")));
    }
    let mut out = xi.to_owned();
    GroupPenalty::new(groups.clone()).prox_in_place(out.view_mut(), t);
    Ok(out)
}

/// Projection onto the centered l2 ball of the given radius.
pub fn project_l2_ball(beta: ArrayView1<f64>, radius: f64) -> Result<Array1<f64>> {
    if !(radius > 0.0) {
        return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
    }
    let mut out = beta.to_owned();
    project_in_place(out.view_mut(), radius);
    Ok(out)
}

pub(crate) fn project_in_place(mut beta: ArrayViewMut1<f64>, radius: f64) {
    let norm = beta.dot(&beta).sqrt();
    // rescaling leaves the norm within a few ulps of the radius; the slack
    // keeps a second projection from moving the point again
    if norm > radius * (1.0 + 4.0 * f64::EPSILON) {
        let scale = radius / norm;
        beta.mapv_inplace(|v| v * scale);
    }
}
