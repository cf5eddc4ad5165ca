use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::datagen::{Case, CoefficientPattern, CovarianceSpec, NoiseSpec};
use crate::error::{check_len, Error, Result};
use crate::penalty::GroupPartition;

/// Record of how a dataset was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<Case>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<CoefficientPattern>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cholesky_jitter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Design matrix (rows are observations), response and optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: Array2<f64>,
    response: Array1<f64>,
    truth: Option<Array1<f64>>,
    groups: Option<GroupPartition>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(design: Array2<f64>, response: Array1<f64>) -> Result<Self> {
        check_len("response", response.len(), design.nrows())?;
        Ok(Self {
            design,
            response,
            truth: None,
            groups: None,
            meta: DatasetMeta::default(),
        })
    }

    pub fn with_truth(mut self, truth: Array1<f64>) -> Result<Self> {
        check_len("truth", truth.len(), self.p())?;
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn with_groups(mut self, groups: GroupPartition) -> Result<Self> {
        check_len("group partition", groups.dim(), self.p())?;
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn with_meta(mut self, meta: DatasetMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> ArrayView2<'_, f64> {
        self.design.view()
    }

    pub fn response(&self) -> ArrayView1<'_, f64> {
        self.response.view()
    }

    pub fn truth(&self) -> Option<ArrayView1<'_, f64>> {
        self.truth.as_ref().map(|t| t.view())
    }

    pub fn groups(&self) -> Option<&GroupPartition> {
        self.groups.as_ref()
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    /// Rows `rows` of the design and response, keeping truth and groups.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n()) {
            return Err(Error::Shape(format!("row {bad} out of range 0..{}", self.n())));
        }
        Ok(Self {
            design: self.design.select(Axis(0), rows),
            response: self.response.select(Axis(0), rows),
            truth: self.truth.clone(),
            groups: self.groups.clone(),
            meta: self.meta.clone(),
        })
    }

    /// Centers every column and scales it to unit sample standard deviation;
    /// the response is centered. Constant columns are only centered.
    pub fn standardized(&self) -> Self {
        let mut design = self.design.clone();
        let n = self.n() as f64;
        for mut col in design.columns_mut() {
            let mean = col.sum() / n;
            col.mapv_inplace(|v| v - mean);
            let sd = (col.dot(&col) / n).sqrt();
            if sd > 0.0 {
                col.mapv_inplace(|v| v / sd);
            }
        }
        let mean_y = self.response.sum() / n;
        Self {
            design,
            response: self.response.mapv(|v| v - mean_y),
            truth: self.truth.clone(),
            groups: self.groups.clone(),
            meta: self.meta.clone(),
        }
    }
}
