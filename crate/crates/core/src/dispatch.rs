//! Runs any explanation method from a kind name plus a flat parameter record.
//!
//! This is the single path used by the CLI and the arena service, which is
//! what makes their payloads byte-identical for the same inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::error::{ExplainError, Result};
use crate::explainer::{model_performance, Explainer, Instance};
use crate::explanation::Explanation;
use crate::fairness::{fairness_check, DEFAULT_EPSILON};
use crate::global::{
    fit_surrogate_tree, model_profile, permutation_importance, residual_diagnostics, ImportanceMode, ImportanceOptions,
    Loss, ProfileKind, ProfileOptions, DEFAULT_IMPORTANCE_B, DEFAULT_IMPORTANCE_SAMPLE, DEFAULT_MAX_DEPTH,
    DEFAULT_MIN_LEAF, DEFAULT_PROFILE_SAMPLE,
};
use crate::grid::{GridSpacing, DEFAULT_GRID_SIZE};
use crate::local::{
    break_down, ceteris_paribus, shapley_values, BreakDownOptions, CeterisParibusOptions, ShapleyOptions,
    DEFAULT_BACKGROUND_SIZE, DEFAULT_SHAPLEY_B,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Performance,
    Breakdown,
    Shapley,
    Cp,
    Importance,
    Profile,
    Residuals,
    Surrogate,
    Fairness,
}

impl MethodKind {
    pub const ALL: [MethodKind; 9] = [
        MethodKind::Performance,
        MethodKind::Breakdown,
        MethodKind::Shapley,
        MethodKind::Cp,
        MethodKind::Importance,
        MethodKind::Profile,
        MethodKind::Residuals,
        MethodKind::Surrogate,
        MethodKind::Fairness,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Performance => "performance",
            MethodKind::Breakdown => "breakdown",
            MethodKind::Shapley => "shapley",
            MethodKind::Cp => "cp",
            MethodKind::Importance => "importance",
            MethodKind::Profile => "profile",
            MethodKind::Residuals => "residuals",
            MethodKind::Surrogate => "surrogate",
            MethodKind::Fairness => "fairness",
        }
    }

    /// Kinds that explain one observation and so need an instance.
    pub fn is_predict_level(&self) -> bool {
        matches!(self, MethodKind::Breakdown | MethodKind::Shapley | MethodKind::Cp)
    }

    pub fn required_params(&self) -> &'static [&'static str] {
        match self {
            MethodKind::Breakdown | MethodKind::Shapley | MethodKind::Cp => &["instance"],
            MethodKind::Fairness => &["protected", "privileged"],
            _ => &[],
        }
    }

    pub fn optional_params(&self) -> &'static [&'static str] {
        match self {
            MethodKind::Performance | MethodKind::Residuals => &[],
            MethodKind::Breakdown => &["overrides", "order", "background_size"],
            MethodKind::Shapley => &["overrides", "b", "background_size", "full_enumeration"],
            MethodKind::Cp => &["overrides", "variables", "grid_size", "uniform_grid"],
            MethodKind::Importance => &["loss", "mode", "b", "sample_size"],
            MethodKind::Profile => &[
                "profile_kind",
                "variables",
                "grid_size",
                "uniform_grid",
                "sample_size",
                "center_ice",
            ],
            MethodKind::Surrogate => &["max_depth", "min_leaf"],
            MethodKind::Fairness => &["epsilon", "cutoffs"],
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = MethodKind::ALL.iter().map(|k| k.as_str()).collect();
            ExplainError::param(
                "kind",
                format!("unknown kind '{s}' (expected one of: {})", names.join(", ")),
            )
        })
    }
}

/// Every tunable of every method; fields irrelevant to a kind are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<usize>,
    /// What-if values per variable, applied to the instance row. Numbers or
    /// level names.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, Json>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variables: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform_grid: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub background_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_enumeration: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<Loss>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ImportanceMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_kind: Option<ProfileKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_ice: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_leaf: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub privileged: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<BTreeMap<String, f64>>,
}

impl MethodParams {
    fn spacing(&self) -> GridSpacing {
        if self.uniform_grid.unwrap_or(false) {
            GridSpacing::Uniform
        } else {
            GridSpacing::Quantile
        }
    }

    /// The instance row with any overrides applied.
    pub fn resolve_instance(&self, explainer: &Explainer) -> Result<Instance> {
        let row = self
            .instance
            .ok_or_else(|| ExplainError::param("instance", "required for predict-level methods"))?;
        let schema = explainer.features().schema();
        let mut instance = explainer.instance(row)?;
        for (name, value) in &self.overrides {
            let text = match value {
                Json::String(s) => s.clone(),
                Json::Number(n) => n.to_string(),
                _ => {
                    return Err(ExplainError::param(
                        format!("overrides.{name}"),
                        "must be a number or a level name",
                    ))
                }
            };
            instance = instance.with_override(schema, name, &text).map_err(|e| match e {
                ExplainError::Parameter { .. } => e,
                other => ExplainError::param(format!("overrides.{name}"), other.to_string()),
            })?;
        }
        Ok(instance)
    }
}

fn required<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| ExplainError::param(field, "required"))
}

/// Computes one explanation. `seed` drives every random choice.
pub fn run(explainer: &Explainer, kind: MethodKind, params: &MethodParams, seed: u64) -> Result<Explanation> {
    let label = explainer.label();
    let explanation = match kind {
        MethodKind::Performance => model_performance(explainer)?.to_explanation(label),
        MethodKind::Breakdown => {
            let instance = params.resolve_instance(explainer)?;
            let options = BreakDownOptions {
                order: params.order.clone(),
                background_size: params.background_size.unwrap_or(DEFAULT_BACKGROUND_SIZE),
                seed,
            };
            break_down(explainer, &instance, &options)?.to_explanation(label, &options)
        }
        MethodKind::Shapley => {
            let instance = params.resolve_instance(explainer)?;
            let options = ShapleyOptions {
                b: params.b.unwrap_or(DEFAULT_SHAPLEY_B),
                background_size: params.background_size.unwrap_or(DEFAULT_BACKGROUND_SIZE),
                full_enumeration: params.full_enumeration.unwrap_or(false),
                seed,
            };
            shapley_values(explainer, &instance, &options)?.to_explanation(label, &options)
        }
        MethodKind::Cp => {
            let instance = params.resolve_instance(explainer)?;
            let options = CeterisParibusOptions {
                variables: params.variables.clone(),
                grid_size: params.grid_size.unwrap_or(DEFAULT_GRID_SIZE),
                spacing: params.spacing(),
            };
            ceteris_paribus(explainer, &instance, &options)?.to_explanation(
                label,
                explainer.features().schema(),
                &options,
            )
        }
        MethodKind::Importance => {
            let options = ImportanceOptions {
                loss: params.loss,
                mode: params.mode.unwrap_or_default(),
                b: params.b.unwrap_or(DEFAULT_IMPORTANCE_B),
                sample_size: params.sample_size.unwrap_or(DEFAULT_IMPORTANCE_SAMPLE),
                seed,
            };
            permutation_importance(explainer, &options)?.to_explanation(label, &options)
        }
        MethodKind::Profile => {
            let options = ProfileOptions {
                kind: params.profile_kind.unwrap_or_default(),
                variables: params.variables.clone(),
                grid_size: params.grid_size.unwrap_or(DEFAULT_GRID_SIZE),
                sample_size: params.sample_size.unwrap_or(DEFAULT_PROFILE_SAMPLE),
                center_ice: params.center_ice.unwrap_or(true),
                spacing: params.spacing(),
                seed,
            };
            model_profile(explainer, &options)?.to_explanation(label, explainer, &options)
        }
        MethodKind::Residuals => residual_diagnostics(explainer)?.to_explanation(label),
        MethodKind::Surrogate => fit_surrogate_tree(
            explainer,
            params.max_depth.unwrap_or(DEFAULT_MAX_DEPTH),
            params.min_leaf.unwrap_or(DEFAULT_MIN_LEAF),
        )?
        .to_explanation(label),
        MethodKind::Fairness => {
            let protected = required(&params.protected, "protected")?;
            let privileged = required(&params.privileged, "privileged")?;
            fairness_check(
                explainer,
                protected,
                privileged,
                params.epsilon.unwrap_or(DEFAULT_EPSILON),
                &params.cutoffs.clone().unwrap_or_default(),
            )?
            .to_explanation(label)
        }
    };
    let mut explanation = explanation.with_meta("seed", seed);
    if kind.is_predict_level() {
        explanation = explanation.with_meta("instance", params.instance.map(|i| i as u64));
        if !params.overrides.is_empty() {
            explanation = explanation.with_meta("overrides", json!(params.overrides));
        }
    }
    Ok(explanation)
}
