//! Seeded generators for the simulation models.
//!
//! Models 1-6 are high-dimensional linear designs with AR(1) or compound
//! symmetry correlation; Models 7-8 are Gaussian-process images on a square
//! lattice with a disk of signal; Models 9-10 add shared region means and put
//! the signal inside two of 25 regions.
//!
//! Every dataset is a pure function of `(model, case, n, p, seed)`. The seed
//! drives three independent ChaCha streams (coefficients, design, noise), so
//! changing one part of the model never shifts the draws of another.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::penalty::GroupPartition;

const PATTERN_STREAM: u64 = 0;
const DESIGN_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
    C,
}

impl Case {
    fn index(self) -> usize {
        match self {
            Case::A => 0,
            Case::B => 1,
            Case::C => 2,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
        })
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Case::A),
            "b" => Ok(Case::B),
            "c" => Ok(Case::C),
            other => Err(Error::Parameter(format!(
                "unknown case '{other}', expected one of a, b, c"
            ))),
        }
    }
}

/// Predictor covariance structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSpec {
    /// `sigma_ij = rho^|i-j|`
    Ar1 { rho: f64 },
    /// `sigma_ij = rho + (1 - rho) I(i = j)`
    CompoundSymmetry { rho: f64 },
    /// `sigma_ij = exp(-|s_i|^2 - |s_j|^2 - scale |s_i - s_j|^2)` on a lattice over `[-1, 1]^2`
    GpGrid { scale: f64, grid_side: usize },
    /// Gaussian-process blocks within square regions plus a shared region
    /// mean with unit variance and correlation `between_corr` across regions.
    BlockGp {
        scale: f64,
        grid_side: usize,
        regions_per_side: usize,
        between_corr: f64,
    },
}

impl CovarianceSpec {
    fn validate(&self, p: usize) -> Result<()> {
        let check_rho = |rho: f64| {
            if rho > 0.0 && rho < 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("rho must lie in (0, 1), got {rho}")))
            }
        };
        match *self {
            CovarianceSpec::Ar1 { rho } | CovarianceSpec::CompoundSymmetry { rho } => check_rho(rho),
            CovarianceSpec::GpGrid { scale, grid_side } => check_grid(scale, grid_side, p),
            CovarianceSpec::BlockGp {
                scale,
                grid_side,
                regions_per_side,
                between_corr,
            } => {
                check_grid(scale, grid_side, p)?;
                if regions_per_side == 0 || regions_per_side > grid_side {
                    return Err(Error::Parameter(format!(
                        "regions_per_side must lie in 1..={grid_side}, got {regions_per_side}"
                    )));
                }
                if !(between_corr.abs() < 1.0) {
                    return Err(Error::Parameter(format!(
                        "between-region correlation must lie in (-1, 1), got {between_corr}"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn check_grid(scale: f64, grid_side: usize, p: usize) -> Result<()> {
    if !(scale > 0.0) {
        return Err(Error::Parameter(format!("GP scale must be positive, got {scale}")));
    }
    if grid_side < 2 || grid_side * grid_side != p {
        return Err(Error::Parameter(format!(
            "grid side {grid_side} is inconsistent with p = {p}"
        )));
    }
    Ok(())
}

/// Two-component normal mixture for the errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub contamination: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

impl NoiseSpec {
    pub fn new(contamination: f64, sigma1_sq: f64, sigma2_sq: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&contamination) {
            return Err(Error::Parameter(format!(
                "contamination must lie in [0, 1], got {contamination}"
            )));
        }
        if !(sigma1_sq > 0.0 && sigma2_sq >= sigma1_sq) {
            return Err(Error::Parameter(format!(
                "need 0 < sigma1^2 <= sigma2^2, got {sigma1_sq} and {sigma2_sq}"
            )));
        }
        Ok(Self {
            contamination,
            sigma1_sq,
            sigma2_sq,
        })
    }

    pub fn variance(&self) -> f64 {
        (1.0 - self.contamination) * self.sigma1_sq + self.contamination * self.sigma2_sq
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Array1<f64> {
        let (sd1, sd2) = (self.sigma1_sq.sqrt(), self.sigma2_sq.sqrt());
        Array1::from_shape_simple_fn(n, || {
            let u: f64 = rng.random();
            let z: f64 = rng.sample(StandardNormal);
            if u < self.contamination {
                sd2 * z
            } else {
                sd1 * z
            }
        })
    }
}

/// Ground-truth coefficient layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientPattern {
    /// First `s` coefficients equal `value`, the rest zero.
    DenseHead { s: usize, value: f64 },
    /// A disk with uniformly drawn center in `[-0.5, 0.5]^2`; lattice points
    /// inside get values uniform on `[value_low, value_high]`.
    Disk {
        grid_side: usize,
        radius: f64,
        value_low: f64,
        value_high: f64,
    },
    /// `count` distinct regions drawn at random, each carrying a disk of
    /// constant `value` centred on the region centroid.
    RegionDisks {
        grid_side: usize,
        regions_per_side: usize,
        count: usize,
        radius: f64,
        value: f64,
    },
}

impl CoefficientPattern {
    pub fn generate<R: Rng>(&self, p: usize, rng: &mut R) -> Result<Array1<f64>> {
        let mut beta = Array1::zeros(p);
        match *self {
            CoefficientPattern::DenseHead { s, value } => {
                if s > p {
                    return Err(Error::Parameter(format!("support size {s} exceeds p = {p}")));
                }
                beta.slice_mut(s![..s]).fill(value);
            }
            CoefficientPattern::Disk {
                grid_side,
                radius,
                value_low,
                value_high,
            } => {
                check_grid(1.0, grid_side, p)?;
                let points = lattice(grid_side);
                let center = [rng.random_range(-0.5..=0.5), rng.random_range(-0.5..=0.5)];
                let mut inside: Vec<usize> = (0..p)
                    .filter(|&j| dist(points[j], center) <= radius)
                    .collect();
                if inside.is_empty() {
                    let nearest = (0..p)
                        .min_by(|&a, &b| dist(points[a], center).total_cmp(&dist(points[b], center)))
                        .unwrap_or(0);
                    inside.push(nearest);
                }
                for j in inside {
                    beta[j] = rng.random_range(value_low..=value_high);
                }
            }
            CoefficientPattern::RegionDisks {
                grid_side,
                regions_per_side,
                count,
                radius,
                value,
            } => {
                check_grid(1.0, grid_side, p)?;
                let regions = region_partition(grid_side, regions_per_side)?;
                if count > regions.len() {
                    return Err(Error::Parameter(format!(
                        "cannot place {count} disks in {} regions",
                        regions.len()
                    )));
                }
                let chosen = rand::seq::index::sample(rng, regions.len(), count);
                let points = lattice(grid_side);
                for b in chosen.iter() {
                    let block = &regions.blocks()[b];
                    let k = block.len() as f64;
                    let center = block.iter().fold([0.0, 0.0], |acc, &j| {
                        [acc[0] + points[j][0] / k, acc[1] + points[j][1] / k]
                    });
                    let mut hit = false;
                    for &j in block {
                        if dist(points[j], center) <= radius {
                            beta[j] = value;
                            hit = true;
                        }
                    }
                    if !hit {
                        let nearest = *block
                            .iter()
                            .min_by(|&&a, &&b| dist(points[a], center).total_cmp(&dist(points[b], center)))
                            .expect("regions are nonempty");
                        beta[nearest] = value;
                    }
                }
            }
        }
        Ok(beta)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform lattice over `[-1, 1]^2` in row-major order: index `r * side + c`
/// sits at `(x_c, y_r)`.
pub fn lattice(grid_side: usize) -> Vec<[f64; 2]> {
    let coord = |k: usize| -1.0 + 2.0 * k as f64 / (grid_side - 1) as f64;
    (0..grid_side)
        .flat_map(|r| (0..grid_side).map(move |c| [coord(c), coord(r)]))
        .collect()
}

/// Splits the lattice into `regions_per_side^2` rectangular regions.
pub fn region_partition(grid_side: usize, regions_per_side: usize) -> Result<GroupPartition> {
    if regions_per_side == 0 || regions_per_side > grid_side {
        return Err(Error::Parameter(format!(
            "cannot split a side of {grid_side} into {regions_per_side} regions"
        )));
    }
    let band = |k: usize| k * regions_per_side / grid_side;
    let mut blocks = vec![Vec::new(); regions_per_side * regions_per_side];
    for r in 0..grid_side {
        for c in 0..grid_side {
            blocks[band(r) * regions_per_side + band(c)].push(r * grid_side + c);
        }
    }
    GroupPartition::new(blocks)
}

fn gp_kernel(a: [f64; 2], b: [f64; 2], scale: f64) -> f64 {
    let na = a[0] * a[0] + a[1] * a[1];
    let nb = b[0] * b[0] + b[1] * b[1];
    let d = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    (-na - nb - scale * d).exp()
}

/// Marginal covariance of one row of the design.
pub fn build_covariance(spec: &CovarianceSpec, p: usize) -> Result<Array2<f64>> {
    spec.validate(p)?;
    let sigma = match *spec {
        CovarianceSpec::Ar1 { rho } => {
            Array2::from_shape_fn((p, p), |(i, j)| rho.powi(i.abs_diff(j) as i32))
        }
        CovarianceSpec::CompoundSymmetry { rho } => {
            Array2::from_shape_fn((p, p), |(i, j)| if i == j { 1.0 } else { rho })
        }
        CovarianceSpec::GpGrid { scale, grid_side } => {
            let pts = lattice(grid_side);
            Array2::from_shape_fn((p, p), |(i, j)| gp_kernel(pts[i], pts[j], scale))
        }
        CovarianceSpec::BlockGp {
            scale,
            grid_side,
            regions_per_side,
            between_corr,
        } => {
            let pts = lattice(grid_side);
            let owner = region_partition(grid_side, regions_per_side)?.membership();
            Array2::from_shape_fn((p, p), |(i, j)| {
                if owner[i] == owner[j] {
                    gp_kernel(pts[i], pts[j], scale) + 1.0
                } else {
                    between_corr
                }
            })
        }
    };
    Ok(sigma)
}

/// Lower-triangular factor with `L L^T = sigma + jitter I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub lower: Array2<f64>,
    pub jitter: f64,
}

/// Cholesky factorization with an escalating diagonal jitter.
///
/// Tries `jitter = m * mean(diag)` for `m` in `{jitter_base, 1e-10, 1e-8, 1e-6}`
/// (rungs below `jitter_base` are skipped) and returns the first success.
pub fn cholesky_factor(sigma: &Array2<f64>, jitter_base: f64) -> Result<CholeskyFactor> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::Shape(format!("covariance is {p}x{}", sigma.ncols())));
    }
    if !(jitter_base >= 0.0) {
        return Err(Error::Parameter(format!(
            "jitter base must be nonnegative, got {jitter_base}"
        )));
    }
    let mean_diag = sigma.diag().sum() / p.max(1) as f64;
    let mut ladder = vec![jitter_base];
    ladder.extend(JITTER_LADDER.iter().copied().filter(|&m| m > jitter_base));
    for m in ladder {
        let jitter = m * mean_diag;
        if let Some(lower) = try_cholesky(sigma, jitter) {
            return Ok(CholeskyFactor { lower, jitter });
        }
    }
    Err(Error::Decomposition(format!(
        "matrix of order {p} is not positive definite even with jitter {:e}",
        JITTER_LADDER[3] * mean_diag
    )))
}

fn try_cholesky(sigma: &Array2<f64>, jitter: f64) -> Option<Array2<f64>> {
    let p = sigma.nrows();
    let mut l = vec![0.0_f64; p * p];
    for i in 0..p {
        for j in 0..=i {
            let (row_i, row_j) = (&l[i * p..i * p + j], &l[j * p..j * p + j]);
            let mut s = sigma[[i, j]] - dot(row_i, row_j);
            if i == j {
                s += jitter;
                if !(s > 0.0) {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Array2::from_shape_vec((p, p), l).ok()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for lane in 0..4 {
            acc[lane] += a[4 * k + lane] * b[4 * k + lane];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Full description of one simulation model at a given case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: u8,
    pub case: Case,
    pub covariance: CovarianceSpec,
    pub noise: NoiseSpec,
    pub pattern: CoefficientPattern,
}

impl ModelSpec {
    pub fn new(model_id: u8, case: Case, p: usize) -> Result<Self> {
        let side = || {
            let side = (p as f64).sqrt().round() as usize;
            if side * side != p {
                Err(Error::Parameter(format!(
                    "model {model_id} needs a square number of predictors, got p = {p}"
                )))
            } else {
                Ok(side)
            }
        };
        let c = case.index();
        let (covariance, noise, pattern) = match model_id {
            1..=3 => (
                CovarianceSpec::Ar1 {
                    rho: [0.5, 0.6, 0.7][model_id as usize - 1],
                },
                NoiseSpec::new(0.1, [1.0, 2.0, 3.0][c], 10.0)?,
                CoefficientPattern::DenseHead { s: p.min(20), value: 1.0 },
            ),
            4..=6 => (
                CovarianceSpec::CompoundSymmetry {
                    rho: [0.4, 0.5, 0.6][model_id as usize - 4],
                },
                NoiseSpec::new(0.1, [0.1, 0.3, 1.0][c], 3.0)?,
                CoefficientPattern::DenseHead { s: p.min(20), value: 1.0 },
            ),
            7 | 8 => {
                let grid_side = side()?;
                (
                    CovarianceSpec::GpGrid {
                        scale: if model_id == 7 { 10.0 } else { 5.0 },
                        grid_side,
                    },
                    NoiseSpec::new(0.1, [2.0, 4.0, 8.0][c], 30.0)?,
                    CoefficientPattern::Disk {
                        grid_side,
                        radius: 0.1,
                        value_low: 0.5,
                        value_high: 1.0,
                    },
                )
            }
            9 | 10 => {
                let grid_side = side()?;
                (
                    CovarianceSpec::BlockGp {
                        scale: if model_id == 9 { 10.0 } else { 5.0 },
                        grid_side,
                        regions_per_side: 5,
                        between_corr: 0.9,
                    },
                    NoiseSpec::new(0.1, [2.0, 4.0, 8.0][c], 30.0)?,
                    CoefficientPattern::RegionDisks {
                        grid_side,
                        regions_per_side: 5,
                        count: 2,
                        radius: 0.13,
                        value: 2.0,
                    },
                )
            }
            other => {
                return Err(Error::Parameter(format!(
                    "unknown model {other}; valid model ids are 1-10"
                )))
            }
        };
        Ok(Self {
            model_id,
            case,
            covariance,
            noise,
            pattern,
        })
    }

    /// Sample size and dimension used by the published simulation study.
    pub fn default_size(model_id: u8) -> (usize, usize) {
        match model_id {
            7..=10 => (500, 2500),
            _ => (100, 2000),
        }
    }

    pub fn groups(&self) -> Result<Option<GroupPartition>> {
        match self.covariance {
            CovarianceSpec::BlockGp {
                grid_side,
                regions_per_side,
                ..
            } => region_partition(grid_side, regions_per_side).map(Some),
            _ => Ok(None),
        }
    }
}

/// Precomputed factors for repeated draws from one model.
#[derive(Debug, Clone)]
pub struct ModelSampler {
    spec: ModelSpec,
    n: usize,
    p: usize,
    design: DesignSampler,
    jitter: f64,
    groups: Option<GroupPartition>,
}

#[derive(Debug, Clone)]
enum DesignSampler {
    Dense {
        lower: Array2<f64>,
    },
    /// Per-region factors plus the factor of the region-mean covariance.
    Regional {
        blocks: Vec<(Vec<usize>, Array2<f64>)>,
        means: Array2<f64>,
        owner: Vec<usize>,
    },
}

impl ModelSampler {
    pub fn new(model_id: u8, case: Case, n: usize, p: usize) -> Result<Self> {
        Self::from_spec(ModelSpec::new(model_id, case, p)?, n, p)
    }

    pub fn from_spec(spec: ModelSpec, n: usize, p: usize) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Parameter(format!("need n, p >= 1, got n = {n}, p = {p}")));
        }
        spec.covariance.validate(p)?;
        let groups = spec.groups()?;
        let (design, jitter) = match spec.covariance {
            CovarianceSpec::BlockGp {
                scale,
                grid_side,
                regions_per_side,
                between_corr,
            } => {
                let regions = region_partition(grid_side, regions_per_side)?;
                let within = build_covariance(&CovarianceSpec::GpGrid { scale, grid_side }, p)?;
                let mut jitter: f64 = 0.0;
                let mut blocks = Vec::with_capacity(regions.len());
                for block in regions.blocks() {
                    let sub = within.select(Axis(0), block).select(Axis(1), block);
                    let factor = cholesky_factor(&sub, 0.0)?;
                    jitter = jitter.max(factor.jitter);
                    blocks.push((block.clone(), factor.lower));
                }
                let k = regions.len();
                let gamma = Array2::from_shape_fn((k, k), |(a, b)| {
                    if a == b {
                        1.0
                    } else {
                        between_corr
                    }
                });
                let means = cholesky_factor(&gamma, 0.0)?.lower;
                (
                    DesignSampler::Regional {
                        blocks,
                        means,
                        owner: regions.membership(),
                    },
                    jitter,
                )
            }
            _ => {
                let factor = cholesky_factor(&build_covariance(&spec.covariance, p)?, 0.0)?;
                (DesignSampler::Dense { lower: factor.lower }, factor.jitter)
            }
        };
        Ok(Self {
            spec,
            n,
            p,
            design,
            jitter,
            groups,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn sample_design<R: Rng>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let p = self.p;
        match &self.design {
            DesignSampler::Dense { lower } => {
                let z = Array2::from_shape_simple_fn((n, p), || rng.sample(StandardNormal));
                z.dot(&lower.t())
            }
            DesignSampler::Regional {
                blocks,
                means,
                owner,
            } => {
                let k = means.nrows();
                let mut x = Array2::zeros((n, p));
                for mut row in x.rows_mut() {
                    let u = Array1::from_shape_simple_fn(k, || rng.sample(StandardNormal));
                    let mu = means.dot(&u);
                    for (block, lower) in blocks {
                        let z = Array1::from_shape_simple_fn(block.len(), || rng.sample(StandardNormal));
                        let local = lower.dot(&z);
                        for (&j, v) in block.iter().zip(local.iter()) {
                            row[j] = v + mu[owner[j]];
                        }
                    }
                }
                x
            }
        }
    }

    pub fn sample(&self, seed: u64) -> Result<Dataset> {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        let truth = self.spec.pattern.generate(self.p, &mut stream(PATTERN_STREAM))?;
        let x = self.sample_design(self.n, &mut stream(DESIGN_STREAM));
        let noise = self.spec.noise.sample(self.n, &mut stream(NOISE_STREAM));
        let y = x.dot(&truth) + noise;
        let meta = DatasetMeta {
            model_id: Some(self.spec.model_id),
            case: Some(self.spec.case),
            seed: Some(seed),
            covariance: Some(self.spec.covariance),
            noise: Some(self.spec.noise),
            pattern: Some(self.spec.pattern),
            cholesky_jitter: Some(self.jitter),
            source: Some("simulation".into()),
        };
        let mut data = Dataset::new(x, y)?.with_truth(truth)?.with_meta(meta);
        if let Some(groups) = &self.groups {
            data = data.with_groups(groups.clone())?;
        }
        Ok(data)
    }
}

/// One dataset from simulation model `model_id` (1-10) at the given case.
pub fn sample_dataset(model_id: u8, case: Case, n: usize, p: usize, seed: u64) -> Result<Dataset> {
    ModelSampler::new(model_id, case, n, p)?.sample(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_and_cs_entries() {
        let ar = build_covariance(&CovarianceSpec::Ar1 { rho: 0.5 }, 5).unwrap();
        assert_eq!(ar[[3, 3]], 1.0);
        assert_eq!(ar[[1, 3]], 0.25);
        assert_eq!(ar[[4, 0]], 0.0625);
        let cs = build_covariance(&CovarianceSpec::CompoundSymmetry { rho: 0.4 }, 4).unwrap();
        assert_eq!(cs[[0, 2]], 0.4);
        assert_eq!(cs[[2, 2]], 1.0);
        assert!(build_covariance(&CovarianceSpec::Ar1 { rho: 1.0 }, 4).is_err());
    }

    #[test]
    fn gp_grid_entries() {
        let spec = CovarianceSpec::GpGrid { scale: 10.0, grid_side: 3 };
        let sigma = build_covariance(&spec, 9).unwrap();
        // index 0 is (-1,-1); index 4 is the origin
        assert!((sigma[[4, 4]] - 1.0).abs() < 1e-15);
        assert!((sigma[[0, 0]] - (-4.0_f64).exp()).abs() < 1e-15);
        assert!((sigma[[0, 4]] - (-2.0 - 20.0_f64).exp()).abs() < 1e-20);
        assert_eq!(sigma, sigma.t());
        assert!(build_covariance(&spec, 10).is_err());
    }

    #[test]
    fn lattice_is_row_major() {
        let pts = lattice(3);
        assert_eq!(pts[0], [-1.0, -1.0]);
        assert_eq!(pts[1], [0.0, -1.0]);
        assert_eq!(pts[3], [-1.0, 0.0]);
        assert_eq!(pts[8], [1.0, 1.0]);
    }

    #[test]
    fn regions_tile_the_grid() {
        let g = region_partition(30, 5).unwrap();
        assert_eq!(g.len(), 25);
        assert!(g.sizes().iter().all(|&s| s == 36));
        let owner = g.membership();
        assert_eq!(owner[0], 0);
        assert_eq!(owner[29], 4);
        assert_eq!(owner[6 * 30], 5);
        assert_eq!(owner[899], 24);
    }

    #[test]
    fn cholesky_examples() {
        let eye = Array2::<f64>::eye(4);
        let f = cholesky_factor(&eye, 0.0).unwrap();
        assert_eq!(f.lower, eye);
        assert_eq!(f.jitter, 0.0);

        let sigma = build_covariance(&CovarianceSpec::Ar1 { rho: 0.5 }, 3).unwrap();
        let f = cholesky_factor(&sigma, 0.0).unwrap();
        let back = f.lower.dot(&f.lower.t());
        assert!((&back - &sigma).iter().all(|v| v.abs() < 1e-12));
        for i in 0..3 {
            for j in i + 1..3 {
                assert_eq!(f.lower[[i, j]], 0.0);
            }
        }

        let ones = Array2::<f64>::ones((4, 4));
        let f = cholesky_factor(&ones, 0.0).unwrap();
        assert!(f.jitter > 0.0);
        let back = f.lower.dot(&f.lower.t());
        let target = &ones + &(Array2::<f64>::eye(4) * f.jitter);
        assert!((&back - &target).iter().all(|v| v.abs() < 1e-12));

        let mut indefinite = Array2::<f64>::eye(2);
        indefinite[[0, 1]] = 2.0;
        indefinite[[1, 0]] = 2.0;
        assert!(matches!(
            cholesky_factor(&indefinite, 0.0),
            Err(Error::Decomposition(_))
        ));
    }

    #[test]
    fn model_one_metadata() {
        let data = sample_dataset(1, Case::A, 30, 40, 7).unwrap();
        let meta = data.meta();
        assert_eq!(meta.covariance, Some(CovarianceSpec::Ar1 { rho: 0.5 }));
        let noise = meta.noise.unwrap();
        assert_eq!((noise.sigma1_sq, noise.sigma2_sq, noise.contamination), (1.0, 10.0, 0.1));
        assert_eq!(meta.seed, Some(7));
        let truth = data.truth().unwrap();
        assert_eq!(truth.iter().filter(|v| **v != 0.0).count(), 20);
        assert!(truth.iter().take(20).all(|&v| v == 1.0));
        assert!(data.groups().is_none());
    }

    #[test]
    fn case_parameters() {
        let noise = |m, c| ModelSpec::new(m, c, 2500).unwrap().noise;
        assert_eq!(noise(2, Case::C).sigma1_sq, 3.0);
        assert_eq!(noise(5, Case::B).sigma1_sq, 0.3);
        assert_eq!(noise(5, Case::B).sigma2_sq, 3.0);
        assert_eq!(noise(8, Case::C).sigma1_sq, 8.0);
        assert_eq!(noise(10, Case::A).sigma2_sq, 30.0);
        assert!(ModelSpec::new(11, Case::A, 100).is_err());
        assert!(ModelSpec::new(7, Case::A, 99).is_err());
        assert_eq!("B".parse::<Case>().unwrap(), Case::B);
        assert!("d".parse::<Case>().is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = sample_dataset(3, Case::B, 20, 50, 42).unwrap();
        let b = sample_dataset(3, Case::B, 20, 50, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_dataset(3, Case::B, 20, 50, 43).unwrap();
        assert_ne!(a.design(), c.design());
        assert_ne!(a.response(), c.response());
    }

    #[test]
    fn patterns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = CoefficientPattern::DenseHead { s: 20, value: 1.0 }
            .generate(2000, &mut rng)
            .unwrap();
        assert_eq!(head.iter().filter(|v| **v != 0.0).count(), 20);
        assert!(head.iter().filter(|v| **v != 0.0).all(|&v| v == 1.0));

        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let disk = CoefficientPattern::Disk {
                grid_side: 30,
                radius: 0.1,
                value_low: 0.5,
                value_high: 1.0,
            }
            .generate(900, &mut rng)
            .unwrap();
            let nz: Vec<f64> = disk.iter().copied().filter(|v| *v != 0.0).collect();
            assert!(!nz.is_empty());
            assert!(nz.iter().all(|v| (0.5..=1.0).contains(v)));

            let regions = region_partition(30, 5).unwrap();
            let pattern = CoefficientPattern::RegionDisks {
                grid_side: 30,
                regions_per_side: 5,
                count: 2,
                radius: 0.13,
                value: 2.0,
            };
            let beta = pattern.generate(900, &mut rng).unwrap();
            assert!(beta.iter().filter(|v| **v != 0.0).all(|&v| v == 2.0));
            assert_eq!(regions.active_blocks(beta.view()).len(), 2);
        }
    }

    #[test]
    fn region_models_carry_groups() {
        let data = sample_dataset(9, Case::A, 10, 100, 3).unwrap();
        let groups = data.groups().unwrap();
        assert_eq!(groups.len(), 25);
        assert_eq!(data.p(), 100);
    }

    #[test]
    fn noise_variance_matches_mixture() {
        let spec = NoiseSpec::new(0.1, 2.0, 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let eps = spec.sample(100_000, &mut rng);
        let mean = eps.mean().unwrap();
        let var = eps.mapv(|e| (e - mean).powi(2)).sum() / (eps.len() - 1) as f64;
        let target = spec.variance();
        assert!((target - (0.9 * 2.0 + 0.1 * 30.0)).abs() < 1e-12);
        assert!((var - target).abs() < 0.02 * target, "var {var} vs {target}");
        assert!(NoiseSpec::new(0.1, 3.0, 2.0).is_err());
        assert!(NoiseSpec::new(1.5, 1.0, 2.0).is_err());
    }
}
