//! JSON configuration shared by the command-line tools.
//!
//! ```json
//! {
//!   "epsilons": [0.0, 1.0, 2.3],
//!   "field": {"bx": 0.3, "by": 0.4, "bz": 0.5},
//!   "weights": [1.0, 0.5, 0.25],
//!   "solver": {"newton_tol": 1e-12},
//!   "gap_tol": 1e-9
//! }
//! ```
//!
//! `weights`, `solver` and `gap_tol` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bethe::SolverOptions;
use crate::model::DEFAULT_GAP_TOL;
use crate::{GaudinError, SpinSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub epsilons: Vec<f64>,
    pub field: FieldConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

fn default_gap_tol() -> f64 {
    DEFAULT_GAP_TOL
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] GaudinError),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "ConfigIo",
            ConfigError::Parse(_) => "ConfigParse",
            ConfigError::Invalid(e) => e.code(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Config = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), GaudinError> {
        self.system()?;
        self.solver.validate()?;
        if let Some(w) = &self.weights {
            if w.len() != self.epsilons.len() {
                return Err(GaudinError::LengthMismatch {
                    expected: self.epsilons.len(),
                    got: w.len(),
                });
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(GaudinError::NonFinite("weights"));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> [f64; 3] {
        [self.field.bx, self.field.by, self.field.bz]
    }

    pub fn system(&self) -> Result<SpinSystem, GaudinError> {
        SpinSystem::with_gap_tol(&self.epsilons, self.field(), self.gap_tol)
    }
}
