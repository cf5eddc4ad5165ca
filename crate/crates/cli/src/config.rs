//! The resolved run configuration: defaults, overlaid by a TOML file,
//! overlaid by command-line flags.

use std::path::{Path, PathBuf};

use rct_core::baselines::LassoConfig;
use rct_core::datagen::Case;
use rct_core::evaluation::{Method, OmegaRule, TuningConfig, TuningRule};
use rct_core::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; unset uses `RCT_WORKERS` or the available parallelism.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub solver: SolverConfig,
    pub lasso: LassoConfig,
    pub tuning: TuningSection,
    pub generate: GenerateSection,
    pub fit: FitSection,
    pub cv: CvSection,
    pub benchmark: BenchmarkSection,
    pub check: CheckSection,
}

/// Grid and cross-validation settings shared by `cv` and `benchmark`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    pub folds: usize,
    pub lambda_count: usize,
    pub lambda_ratio: f64,
    pub eta_quantiles: Vec<f64>,
    pub include_eta_zero: bool,
    pub rule: TuningRule,
    pub eta_quantile: f64,
    pub omega_rule: OmegaRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_scale: Option<f64>,
}

impl Default for TuningSection {
    fn default() -> Self {
        let t = TuningConfig::default();
        Self {
            folds: t.folds,
            lambda_count: t.lambda_count,
            lambda_ratio: t.lambda_ratio,
            eta_quantiles: t.eta_quantiles,
            include_eta_zero: t.include_eta_zero,
            rule: t.rule,
            eta_quantile: t.eta_quantile,
            omega_rule: t.omega_rule,
            step_scale: t.step_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub model: u8,
    pub case: Case,
    /// Unset uses the model's default size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            model: 1,
            case: Case::A,
            n: None,
            p: None,
            seed: 7,
            out: "data.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// A groups file, or `singleton`. Unset uses the dataset's own groups
    /// when its metadata has them, singletons otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<String>,
    pub method: Method,
    pub standardize: bool,
    pub out: PathBuf,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            data: None,
            groups: None,
            method: Method::Rct,
            standardize: false,
            out: "fit.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<String>,
    pub standardize: bool,
    pub seed: u64,
    /// Explicit grids; unset builds them from `tuning`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    pub refit: bool,
    pub out: PathBuf,
}

impl Default for CvSection {
    fn default() -> Self {
        Self {
            data: None,
            groups: None,
            standardize: false,
            seed: 0,
            lambdas: None,
            etas: None,
            refit: true,
            out: "cv.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    /// Entries such as `3a` or `10c`.
    pub models: Vec<String>,
    pub methods: Vec<Method>,
    pub replications: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    pub seed: u64,
    pub csv: PathBuf,
    pub json: PathBuf,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            models: vec!["1a".into()],
            methods: Method::ALL.to_vec(),
            replications: 50,
            n: None,
            p: None,
            seed: 2024,
            csv: "benchmark.csv".into(),
            json: "benchmark.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { seed: 13, out: None }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn tuning_config(&self) -> TuningConfig {
        TuningConfig {
            folds: self.tuning.folds,
            lambda_count: self.tuning.lambda_count,
            lambda_ratio: self.tuning.lambda_ratio,
            eta_quantiles: self.tuning.eta_quantiles.clone(),
            include_eta_zero: self.tuning.include_eta_zero,
            rule: self.tuning.rule,
            eta_quantile: self.tuning.eta_quantile,
            omega_rule: self.tuning.omega_rule,
            step_scale: self.tuning.step_scale,
            solver: self.solver.clone(),
            lasso: self.lasso.clone(),
        }
    }
}

/// Parses `3a` into model 3, case a.
pub fn parse_model_case(s: &str) -> Result<(u8, Case), CliError> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, case) = s.split_at(split);
    let model: u8 = digits
        .parse()
        .map_err(|_| CliError::Usage(format!("bad model entry {s:?}; expected e.g. 3a")))?;
    if !(1..=10).contains(&model) {
        return Err(CliError::Usage(format!("unknown model {model}; valid ids are 1-10")));
    }
    let case = if case.is_empty() { Case::A } else { case.parse().map_err(usage)? };
    Ok((model, case))
}

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}
