//! Built-in reference predictors and the external-process adapter.

mod design;
mod external;
mod linear;
mod logistic;
mod tree;

pub use design::{encode_terms, Term};
pub use external::{
    decode_request, encode_request, encode_response, serve_predictor, wire_number, ExternalPredictor, DEFAULT_TIMEOUT,
};
pub use linear::{fit_linear, LinearModel, RIDGE};
pub use logistic::{fit_logistic, sigmoid, LogisticModel, DEFAULT_ITERATIONS, DEFAULT_LEARNING_RATE};
pub use tree::{fit_tree, TreeModel};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ExplainError, Result};
use crate::global::{DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF};
use crate::predictor::Predictor;

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}
fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_max_depth() -> usize {
    DEFAULT_MAX_DEPTH
}
fn default_min_leaf() -> usize {
    DEFAULT_MIN_LEAF
}
fn default_timeout() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

/// Contents of a model specification file.
///
/// `linear` with neither `coefficients` nor `intercept` is fitted by least
/// squares; otherwise the given values are used as-is (missing terms are 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelSpec {
    Linear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coefficients: Option<BTreeMap<String, f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        intercept: Option<f64>,
    },
    Logistic {
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
    },
    Tree {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_seconds: f64,
    },
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ExplainError::Parse(format!("model specification: {e}")))
    }

    /// Reads a specification file. A relative program path containing a
    /// separator in an `external` command is resolved against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExplainError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut spec = Self::from_json(&text).map_err(|e| ExplainError::Parse(format!("{}: {e}", path.display())))?;
        if let ModelSpec::External { command, .. } = &mut spec {
            if let (Some(program), Some(dir)) = (command.first_mut(), path.parent()) {
                let p = Path::new(program.as_str());
                if p.is_relative() && p.components().count() > 1 {
                    *program = dir.join(p).to_string_lossy().into_owned();
                }
            }
        }
        Ok(spec)
    }

    /// Fits (or spawns) the predictor described by this specification.
    pub fn build(&self, data: &Dataset) -> Result<Arc<dyn Predictor>> {
        Ok(match self {
            ModelSpec::Linear {
                coefficients: None,
                intercept: None,
            } => Arc::new(fit_linear(data)?),
            ModelSpec::Linear {
                coefficients,
                intercept,
            } => Arc::new(LinearModel::from_named(
                intercept.unwrap_or(0.0),
                &coefficients.clone().unwrap_or_default(),
                data.features().schema(),
            )?),
            ModelSpec::Logistic {
                iterations,
                learning_rate,
            } => Arc::new(fit_logistic(data, *iterations, *learning_rate)?),
            ModelSpec::Tree { max_depth, min_leaf } => Arc::new(fit_tree(data, *max_depth, *min_leaf)?),
            ModelSpec::External {
                command,
                timeout_seconds,
            } => {
                if !(timeout_seconds.is_finite() && *timeout_seconds > 0.0) {
                    return Err(ExplainError::param("timeout_seconds", "must be positive"));
                }
                Arc::new(ExternalPredictor::spawn(
                    command.clone(),
                    Duration::from_secs_f64(*timeout_seconds),
                )?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_type() {
        assert_eq!(
            ModelSpec::from_json(r#"{"type":"linear"}"#).unwrap(),
            ModelSpec::Linear {
                coefficients: None,
                intercept: None
            }
        );
        assert_eq!(
            ModelSpec::from_json(r#"{"type":"tree","max_depth":2}"#).unwrap(),
            ModelSpec::Tree {
                max_depth: 2,
                min_leaf: DEFAULT_MIN_LEAF
            }
        );
        assert!(matches!(
            ModelSpec::from_json(r#"{"type":"logistic"}"#).unwrap(),
            ModelSpec::Logistic { iterations: 500, .. }
        ));
        assert!(matches!(
            ModelSpec::from_json(r#"{"type":"external","command":["x"]}"#).unwrap(),
            ModelSpec::External { .. }
        ));
        assert!(ModelSpec::from_json(r#"{"type":"forest"}"#).is_err());
    }
}
