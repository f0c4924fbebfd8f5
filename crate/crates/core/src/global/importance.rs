use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Table;
use crate::error::{ExplainError, Result};
use crate::explainer::{Explainer, TaskType};
use crate::explanation::{ColumnValues, Explanation, ResultTable};
use crate::rng;
use crate::stats;

pub const DEFAULT_IMPORTANCE_B: usize = 10;
pub const DEFAULT_IMPORTANCE_SAMPLE: usize = 1000;

/// Row label for the unpermuted model loss.
pub const FULL_MODEL: &str = "_full_model_";
/// Row label for the loss with every explanatory column permuted jointly.
pub const BASELINE: &str = "_baseline_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Rmse,
    OneMinusAuc,
}

impl Loss {
    pub fn default_for(task: TaskType) -> Loss {
        match task {
            TaskType::Regression => Loss::Rmse,
            TaskType::Classification => Loss::OneMinusAuc,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Loss::Rmse => "rmse",
            Loss::OneMinusAuc => "one_minus_auc",
        }
    }

    pub fn evaluate(&self, target: &[f64], predicted: &[f64]) -> Result<f64> {
        match self {
            Loss::Rmse => Ok(stats::rmse(target, predicted)),
            Loss::OneMinusAuc => stats::auc(target, predicted).map(|a| 1.0 - a).ok_or_else(|| {
                ExplainError::DegenerateTarget("AUC is undefined: the sampled rows contain a single class".into())
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    Raw,
    #[default]
    Difference,
    Ratio,
}

impl ImportanceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImportanceMode::Raw => "raw",
            ImportanceMode::Difference => "difference",
            ImportanceMode::Ratio => "ratio",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImportanceOptions {
    /// `None` picks the task default: RMSE for regression, 1 − AUC for classification.
    pub loss: Option<Loss>,
    pub mode: ImportanceMode,
    pub b: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        ImportanceOptions {
            loss: None,
            mode: ImportanceMode::Difference,
            b: DEFAULT_IMPORTANCE_B,
            sample_size: DEFAULT_IMPORTANCE_SAMPLE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableImportance {
    pub variable: String,
    /// Loss after each permutation, one entry per repetition.
    pub dropout: Vec<f64>,
    /// Mean over repetitions of (permuted loss − baseline loss).
    pub difference: f64,
    /// Baseline loss plus `difference`: the mean permuted loss.
    pub raw: f64,
    /// `raw / baseline loss`; undefined when the baseline loss is 0.
    pub ratio: Option<f64>,
}

impl VariableImportance {
    fn from_dropout(variable: String, baseline: f64, dropout: Vec<f64>) -> Self {
        let difference = dropout.iter().map(|l| l - baseline).sum::<f64>() / dropout.len() as f64;
        let raw = baseline + difference;
        let ratio = (baseline != 0.0).then(|| raw / baseline);
        VariableImportance {
            variable,
            dropout,
            difference,
            raw,
            ratio,
        }
    }

    pub fn importance(&self, mode: ImportanceMode) -> Option<f64> {
        match mode {
            ImportanceMode::Raw => Some(self.raw),
            ImportanceMode::Difference => Some(self.difference),
            ImportanceMode::Ratio => self.ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Importance {
    pub loss: Loss,
    pub mode: ImportanceMode,
    /// Loss of the unpermuted model on the sampled rows.
    pub full_model_loss: f64,
    /// Per explanatory variable, in column order.
    pub variables: Vec<VariableImportance>,
    /// All explanatory columns permuted together.
    pub baseline: VariableImportance,
    pub sample_rows: usize,
}

impl Importance {
    pub fn get(&self, variable: &str) -> Option<&VariableImportance> {
        self.variables.iter().find(|v| v.variable == variable)
    }

    fn full_model_row(&self) -> VariableImportance {
        VariableImportance {
            variable: FULL_MODEL.to_string(),
            dropout: vec![self.full_model_loss; self.baseline.dropout.len()],
            difference: 0.0,
            raw: self.full_model_loss,
            ratio: (self.full_model_loss != 0.0).then_some(1.0),
        }
    }

    pub fn to_explanation(&self, label: &str, options: &ImportanceOptions) -> Explanation {
        let full = self.full_model_row();
        let rows: Vec<&VariableImportance> = std::iter::once(&full)
            .chain(&self.variables)
            .chain(std::iter::once(&self.baseline))
            .collect();
        let b = self.baseline.dropout.len();
        let mut names = Vec::new();
        let mut permutation = Vec::new();
        let mut loss = Vec::new();
        let mut importance = Vec::new();
        for r in &rows {
            names.push(r.variable.clone());
            permutation.push(0);
            loss.push(r.raw);
            importance.push(r.importance(self.mode));
        }
        for k in 0..b {
            for r in &rows {
                let single =
                    VariableImportance::from_dropout(r.variable.clone(), self.full_model_loss, vec![r.dropout[k]]);
                names.push(r.variable.clone());
                permutation.push(k as i64 + 1);
                loss.push(r.dropout[k]);
                importance.push(single.importance(self.mode));
            }
        }
        let result = ResultTable::new()
            .with("variable", ColumnValues::Text(names))
            .with("permutation", ColumnValues::Int(permutation))
            .with("dropout_loss", ColumnValues::Float(loss))
            .with("importance", ColumnValues::MaybeFloat(importance));

        let mut order: Vec<&VariableImportance> = self.variables.iter().collect();
        order.sort_by(|a, b| b.raw.total_cmp(&a.raw));
        let bars: Vec<_> = order
            .iter()
            .map(|v| {
                json!({
                    "variable": v.variable,
                    "importance": v.importance(self.mode),
                    "dropout_loss": v.raw,
                    "dropout": v.dropout,
                })
            })
            .collect();
        let chart = json!({
            "type": "importance",
            "loss": self.loss.as_str(),
            "mode": self.mode.as_str(),
            "full_model": self.full_model_loss,
            "baseline": self.baseline.raw,
            "bars": bars,
        });
        Explanation::new("importance", label, result, chart)
            .with_meta("seed", options.seed)
            .with_meta("b", options.b as u64)
            .with_meta("sample_size", options.sample_size as u64)
            .with_meta("sample_rows", self.sample_rows as u64)
            .with_meta("loss", self.loss.as_str())
            .with_meta("mode", self.mode.as_str())
    }
}

/// Row permutation for (variable key, repetition). Key `p` is the joint permutation.
pub fn permutation_for(seed: u64, variable: usize, repetition: usize, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = rng::substream(seed, &[rng::IMPORTANCE_PERMUTATION, variable as u64, repetition as u64]);
    perm.shuffle(&mut rng);
    perm
}

/// Loss increase when each column's values are shuffled.
///
/// The loss is evaluated on a seeded row sample. Each (variable, repetition)
/// pair draws its permutation from an independent substream, so the result
/// does not depend on evaluation order.
pub fn permutation_importance(explainer: &Explainer, options: &ImportanceOptions) -> Result<Importance> {
    let loss = options.loss.unwrap_or_else(|| Loss::default_for(explainer.task()));
    match (loss, explainer.task()) {
        (Loss::Rmse, TaskType::Regression) | (Loss::OneMinusAuc, TaskType::Classification) => {}
        (l, t) => {
            return Err(ExplainError::param(
                "loss",
                format!("{} is not applicable to {} models", l.as_str(), t.as_str()),
            ))
        }
    }
    if options.b < 1 {
        return Err(ExplainError::param("b", "must be at least 1"));
    }
    if options.sample_size < 2 {
        return Err(ExplainError::param("sample_size", "must be at least 2"));
    }

    let rows = rng::sample_rows(
        options.seed,
        rng::IMPORTANCE_SAMPLE,
        explainer.features().n_rows(),
        options.sample_size,
    );
    let x = explainer.features().take_rows(&rows);
    let y: Vec<f64> = rows.iter().map(|&r| explainer.target()[r]).collect();
    let full_model_loss = loss.evaluate(&y, &explainer.score_checked(&x)?)?;
    let p = x.n_cols();
    let m = x.n_rows();

    let permuted_loss = |key: usize, rep: usize| -> Result<f64> {
        let perm = permutation_for(options.seed, key, rep, m);
        let shuffled: Table = if key == p {
            x.take_rows(&perm)
        } else {
            let mut t = x.clone();
            t.replace_column(key, x.take_rows(&perm).column(key).clone());
            t
        };
        loss.evaluate(&y, &explainer.score_checked(&shuffled)?)
    };

    let mut per_key: Vec<Result<VariableImportance>> = (0..=p)
        .into_par_iter()
        .map(|key| {
            let dropout = (0..options.b)
                .map(|rep| permuted_loss(key, rep))
                .collect::<Result<Vec<f64>>>()?;
            let name = if key == p {
                BASELINE.to_string()
            } else {
                x.schema()[key].name.clone()
            };
            Ok(VariableImportance::from_dropout(name, full_model_loss, dropout))
        })
        .collect();
    let baseline = per_key.pop().expect("baseline entry")?;
    Ok(Importance {
        loss,
        mode: options.mode,
        full_model_loss,
        variables: per_key.into_iter().collect::<Result<_>>()?,
        baseline,
        sample_rows: m,
    })
}
