//! Workflow configuration file (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub level: usize,
    #[serde(default = "default_cap")]
    pub max_points: usize,
}

fn default_cap() -> usize {
    crate::sparsegrid::DEFAULT_POINT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub variance_threshold: f64,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    /// Total degree of the chaos basis; defaults to the design level.
    #[serde(default)]
    pub degree: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub delta: f64,
    pub diagonal_tolerance: f64,
    pub off_diagonal_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub command: String,
    /// Scratch directory for the batch files, relative to the config file.
    #[serde(default)]
    pub workdir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowConfig {
    pub design: DesignConfig,
    pub reduce: ReduceConfig,
    pub verify: VerifyConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub external: Option<ExternalConfig>,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("bundled default config parses")
    }
}

impl WorkflowConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn dim(&self) -> usize {
        self.model.parameters.len()
    }

    pub fn theta0(&self) -> Vec<f64> {
        self.reduce.theta0.clone().unwrap_or_else(|| vec![0.5; self.dim()])
    }

    pub fn degree(&self) -> usize {
        self.reduce.degree.unwrap_or(self.design.level)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.reduce;
        if !(r.variance_threshold > 0.0 && r.variance_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "reduce.variance_threshold {} not in (0, 1]",
                r.variance_threshold
            )));
        }
        if let Some(t0) = &r.theta0 {
            if t0.len() != self.dim() || t0.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(Error::Config(
                    "reduce.theta0 must lie strictly inside the unit cube".into(),
                ));
            }
        }
        let v = &self.verify;
        if v.delta.is_nan() || v.delta <= 0.0 || v.diagonal_tolerance < 0.0 || v.off_diagonal_tolerance < 0.0 {
            return Err(Error::Config("verify settings must be positive".into()));
        }
        self.model.parameter_space()?;
        if self.external.is_none() {
            self.model.validate_builtin()?;
        }
        Ok(())
    }
}
