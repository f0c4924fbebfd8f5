//! The [`Explainer`]: a validated binding of a predictor to a dataset, and the
//! single entry point for every explanation method.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{ColumnKind, ColumnSchema, Dataset, Table, Value};
use crate::error::{ExplainError, Result};
use crate::explanation::{ColumnValues, Explanation, ResultTable};
use crate::predictor::Predictor;
use crate::stats;

/// Rows scored twice at construction to check determinism.
const PROBE_ROWS: usize = 10;

/// Cutoff for classification performance metrics.
pub const PERFORMANCE_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Regression,
    Classification,
}

impl TaskType {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskType::Regression => "regression",
            TaskType::Classification => "classification",
        }
    }
}

/// One observation: a value per explanatory column, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    values: Vec<Value>,
}

impl Instance {
    pub fn new(schema: &[ColumnSchema], values: Vec<Value>) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(ExplainError::Schema(format!(
                "instance has {} values for {} columns",
                values.len(),
                schema.len()
            )));
        }
        for (s, v) in schema.iter().zip(&values) {
            match (s.kind, v) {
                (ColumnKind::Numeric, Value::Num(x)) if x.is_finite() => {}
                (ColumnKind::Categorical, Value::Level(l)) if (*l as usize) < s.levels.len() => {}
                (ColumnKind::Categorical, Value::Level(l)) => {
                    return Err(ExplainError::Level {
                        column: s.name.clone(),
                        level: format!("#{l}"),
                    })
                }
                _ => {
                    return Err(ExplainError::Schema(format!(
                        "value for '{}' does not match its column kind",
                        s.name
                    )))
                }
            }
        }
        Ok(Instance { values })
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn get(&self, col: usize) -> Value {
        self.values[col]
    }

    /// Copy with one variable replaced, parsing `text` against the schema.
    pub fn with_override(&self, schema: &[ColumnSchema], name: &str, text: &str) -> Result<Self> {
        let col = schema
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| ExplainError::Schema(format!("unknown variable '{name}'")))?;
        let mut values = self.values.clone();
        values[col] = schema[col].parse_value(text)?;
        Ok(Instance { values })
    }
}

pub struct Explainer {
    predictor: Arc<dyn Predictor>,
    data: Dataset,
    features: Table,
    target: Vec<f64>,
    label: String,
    task: TaskType,
    seed: u64,
    full_predictions: OnceLock<Vec<f64>>,
}

impl fmt::Debug for Explainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Explainer")
            .field("label", &self.label)
            .field("task", &self.task)
            .field("n_rows", &self.data.n_rows())
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl Explainer {
    /// Binds `predictor` to `data` after validating both.
    ///
    /// When `task` is absent it is inferred: classification iff every target
    /// value is 0 or 1. The first `min(10, n)` rows are scored twice and the
    /// outputs compared bitwise.
    pub fn new(
        predictor: Arc<dyn Predictor>,
        data: Dataset,
        label: impl Into<String>,
        task: Option<TaskType>,
        seed: u64,
    ) -> Result<Self> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(ExplainError::param("label", "must be non-empty"));
        }
        if data.n_rows() == 0 {
            return Err(ExplainError::Schema("dataset has no rows".into()));
        }
        let target = data.target_values()?.to_vec();
        let features = data.features();
        if features.n_cols() == 0 {
            return Err(ExplainError::Schema("dataset has no explanatory columns".into()));
        }
        let binary = target.iter().all(|&y| y == 0.0 || y == 1.0);
        let task = match task {
            Some(TaskType::Classification) if !binary => {
                return Err(ExplainError::param(
                    "task",
                    "classification requires a target coded 0/1",
                ))
            }
            Some(t) => t,
            None if binary => TaskType::Classification,
            None => TaskType::Regression,
        };

        let explainer = Explainer {
            predictor,
            data,
            features,
            target,
            label,
            task,
            seed,
            full_predictions: OnceLock::new(),
        };
        explainer.probe()?;
        Ok(explainer)
    }

    fn probe(&self) -> Result<()> {
        let rows = self.features.slice(0..self.features.n_rows().min(PROBE_ROWS));
        let first = self.score_checked(&rows)?;
        let second = self.score_checked(&rows)?;
        for (row, (a, b)) in first.iter().zip(&second).enumerate() {
            if a.to_bits() != b.to_bits() {
                return Err(ExplainError::NonDeterministicPredictor {
                    row,
                    first: *a,
                    second: *b,
                });
            }
        }
        Ok(())
    }

    /// Calls the predictor and enforces the output contract.
    pub(crate) fn score_checked(&self, rows: &Table) -> Result<Vec<f64>> {
        if rows.n_rows() == 0 {
            return Ok(Vec::new());
        }
        let scores = self.predictor.score(rows)?;
        if scores.len() != rows.n_rows() {
            return Err(ExplainError::PredictorContract(format!(
                "returned {} scores for {} rows",
                scores.len(),
                rows.n_rows()
            )));
        }
        if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ExplainError::PredictorContract(format!(
                "non-finite score {} at row {row}",
                scores[row]
            )));
        }
        if self.task == TaskType::Classification {
            if let Some(row) = scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
                return Err(ExplainError::Range {
                    row,
                    score: scores[row],
                });
            }
        }
        Ok(scores)
    }

    /// Scores rows that conform to the explanatory schema.
    pub fn predict_batch(&self, rows: &Table) -> Result<Vec<f64>> {
        let expected = self.features.schema();
        if rows.n_cols() != expected.len() {
            return Err(ExplainError::Schema(format!(
                "expected {} columns, got {}",
                expected.len(),
                rows.n_cols()
            )));
        }
        for (want, got) in expected.iter().zip(rows.schema()) {
            if want.name != got.name || want.kind != got.kind {
                return Err(ExplainError::Schema(format!(
                    "column '{}' does not match schema column '{}'",
                    got.name, want.name
                )));
            }
            if want.levels != got.levels {
                // Row tables built against a different level table: remap by name.
                if let Some(level) = got.levels.iter().find(|l| want.level_index(l).is_none()) {
                    return Err(ExplainError::Level {
                        column: want.name.clone(),
                        level: level.clone(),
                    });
                }
            }
        }
        let conformed = self.conform(rows);
        self.score_checked(&conformed)
    }

    fn conform(&self, rows: &Table) -> Table {
        let mut out = rows.clone();
        for (col, (want, got)) in self.features.schema().iter().zip(rows.schema()).enumerate() {
            if want.levels != got.levels {
                for r in 0..rows.n_rows() {
                    if let Value::Level(l) = rows.get(r, col) {
                        let idx = want.level_index(&got.levels[l as usize]).expect("levels checked");
                        out.set(r, col, Value::Level(idx));
                    }
                }
            }
        }
        if out.schema() != self.features.schema() {
            Table::new(self.features.schema().to_vec(), out.columns().to_vec()).expect("conformed table matches schema")
        } else {
            out
        }
    }

    pub fn predict_instance(&self, instance: &Instance) -> Result<f64> {
        let t = Table::repeat(self.features.schema(), instance.values(), 1);
        Ok(self.score_checked(&t)?[0])
    }

    /// Predictions for every row of the dataset, computed once.
    pub fn predictions(&self) -> Result<&[f64]> {
        if let Some(p) = self.full_predictions.get() {
            return Ok(p);
        }
        let p = self.score_checked(&self.features)?;
        Ok(self.full_predictions.get_or_init(|| p))
    }

    pub fn instance(&self, row: usize) -> Result<Instance> {
        if row >= self.features.n_rows() {
            return Err(ExplainError::param(
                "instance",
                format!("row {row} out of range (dataset has {} rows)", self.features.n_rows()),
            ));
        }
        Ok(Instance {
            values: self.features.row(row),
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Explanatory columns only.
    pub fn features(&self) -> &Table {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn task(&self) -> TaskType {
        self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.features
            .column_index(name)
            .ok_or_else(|| ExplainError::Schema(format!("unknown variable '{name}'")))
    }

    /// Resolves an optional list of variable names; `None` means all columns.
    pub(crate) fn resolve_variables(&self, names: Option<&[String]>) -> Result<Vec<usize>> {
        match names {
            None => Ok((0..self.features.n_cols()).collect()),
            Some(names) => {
                let mut out = Vec::with_capacity(names.len());
                for n in names {
                    let i = self.variable_index(n)?;
                    if !out.contains(&i) {
                        out.push(i);
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Performance metrics, keyed by metric name. `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq)]
pub struct Performance {
    pub task: TaskType,
    pub metrics: BTreeMap<&'static str, Option<f64>>,
    order: Vec<&'static str>,
}

impl Performance {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }

    pub fn to_explanation(&self, label: &str) -> Explanation {
        let names: Vec<String> = self.order.iter().map(|s| s.to_string()).collect();
        let values: Vec<Option<f64>> = self.order.iter().map(|k| self.metrics[k]).collect();
        let result = ResultTable::new()
            .with("metric", ColumnValues::Text(names))
            .with("value", ColumnValues::MaybeFloat(values));
        let chart = json!({
            "type": "performance",
            "task": self.task.as_str(),
            "metrics": self.metrics,
        });
        let mut e = Explanation::new("performance", label, result, chart).with_meta("task", self.task.as_str());
        if self.task == TaskType::Classification {
            e = e.with_meta("cutoff", PERFORMANCE_CUTOFF);
        }
        e
    }
}

/// Overall goodness of fit on the full dataset.
///
/// Regression reports MSE, RMSE, MAE and R²; classification at cutoff 0.5
/// reports accuracy, precision, recall, F1 and AUC.
pub fn model_performance(explainer: &Explainer) -> Result<Performance> {
    let y = explainer.target();
    let p = explainer.predictions()?;
    let n = y.len() as f64;
    let mut metrics = BTreeMap::new();
    let order: Vec<&'static str> = match explainer.task() {
        TaskType::Regression => {
            let mse = stats::mse(y, p);
            let mae = y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
            let y_mean = stats::mean(y);
            let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
            let sse: f64 = y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            let r2 = if sse == 0.0 {
                Some(1.0)
            } else if sst == 0.0 {
                None
            } else {
                Some(1.0 - sse / sst)
            };
            metrics.insert("mse", Some(mse));
            metrics.insert("rmse", Some(mse.sqrt()));
            metrics.insert("mae", Some(mae));
            metrics.insert("r2", r2);
            vec!["mse", "rmse", "mae", "r2"]
        }
        TaskType::Classification => {
            let auc = stats::auc(y, p)
                .ok_or_else(|| ExplainError::DegenerateTarget("AUC is undefined for a single-class target".into()))?;
            let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
            for (&yi, &pi) in y.iter().zip(p) {
                match (yi == 1.0, pi >= PERFORMANCE_CUTOFF) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (false, false) => tn += 1,
                    (true, false) => fn_ += 1,
                }
            }
            let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = match (precision, recall) {
                (Some(pr), Some(rc)) if pr + rc > 0.0 => Some(2.0 * pr * rc / (pr + rc)),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            metrics.insert("accuracy", Some((tp + tn) as f64 / n));
            metrics.insert("precision", precision);
            metrics.insert("recall", recall);
            metrics.insert("f1", f1);
            metrics.insert("auc", Some(auc));
            vec!["accuracy", "precision", "recall", "f1", "auc"]
        }
    };
    Ok(Performance {
        task: explainer.task(),
        metrics,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset_str;
    use crate::predictor::{row_fn, FnPredictor};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn explainer_for(csv: &str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Result<Explainer> {
        let data = load_dataset_str(csv, Some("y")).unwrap();
        Explainer::new(Arc::new(row_fn(f)), data, "m", None, 1)
    }

    #[test]
    fn infers_classification_from_binary_target() {
        let e = explainer_for("x,y\n0.1,0\n0.9,1", |r| r[0]).unwrap();
        assert_eq!(e.task(), TaskType::Classification);
        let e = explainer_for("x,y\n0,1\n1,3", |r| 2.0 * r[0] + 1.0).unwrap();
        assert_eq!(e.task(), TaskType::Regression);
        assert_eq!(e.predictions().unwrap(), &[1.0, 3.0]);
    }

    #[test]
    fn rejects_nondeterministic_predictor() {
        let data = load_dataset_str("x,y\n1,2\n2,3", Some("y")).unwrap();
        let calls = AtomicUsize::new(0);
        let p = FnPredictor(move |t: &Table| {
            let c = calls.fetch_add(1, Ordering::SeqCst) as f64;
            vec![c; t.n_rows()]
        });
        let err = Explainer::new(Arc::new(p), data, "m", None, 0).unwrap_err();
        assert!(matches!(err, ExplainError::NonDeterministicPredictor { .. }), "{err}");
    }

    #[test]
    fn rejects_short_output() {
        let data = load_dataset_str("x,y\n1,2\n2,3", Some("y")).unwrap();
        let p = FnPredictor(|t: &Table| vec![0.0; t.n_rows() - 1]);
        let err = Explainer::new(Arc::new(p), data, "m", None, 0).unwrap_err();
        assert!(matches!(err, ExplainError::PredictorContract(_)), "{err}");
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        let err = explainer_for("x,y\n2,0\n3,1", |r| r[0]).unwrap_err();
        assert!(matches!(err, ExplainError::Range { .. }), "{err}");
    }

    #[test]
    fn rejects_missing_target_and_empty_label() {
        let data = load_dataset_str("x\n1", None).unwrap();
        assert!(Explainer::new(Arc::new(row_fn(|r| r[0])), data.clone(), "m", None, 0).is_err());
        let data = load_dataset_str("x,y\n1,1", Some("y")).unwrap();
        assert!(Explainer::new(Arc::new(row_fn(|r| r[0])), data, " ", None, 0).is_err());
    }

    #[test]
    fn predict_batch_squares() {
        let e = explainer_for("x1,y\n2,4\n3,9", |r| r[0] * r[0]).unwrap();
        let rows = Table::from_records(e.features().schema().to_vec(), &[["2"], ["3"]]).unwrap();
        assert_eq!(e.predict_batch(&rows).unwrap(), vec![4.0, 9.0]);
        assert!(e.predict_batch(&rows.slice(0..0)).unwrap().is_empty());
    }

    #[test]
    fn predict_batch_rejects_unknown_level() {
        let e = explainer_for("c,y\nred,1\nblue,2", |r| r[0]).unwrap();
        let foreign = vec![ColumnSchema::categorical("c", ["green"])];
        let rows = Table::from_records(foreign, &[["green"]]).unwrap();
        assert!(matches!(e.predict_batch(&rows), Err(ExplainError::Level { .. })));
        let err = e.features().schema()[0].parse_value("green").unwrap_err();
        assert!(matches!(err, ExplainError::Level { .. }));
    }

    #[test]
    fn predict_batch_remaps_subset_levels() {
        let e = explainer_for("c,y\nred,1\nblue,2", |r| r[0]).unwrap();
        let subset = vec![ColumnSchema::categorical("c", ["red"])];
        let rows = Table::from_records(subset, &[["red"]]).unwrap();
        // red is level 1 in the explainer's table
        assert_eq!(e.predict_batch(&rows).unwrap(), vec![1.0]);
    }

    #[test]
    fn regression_performance_by_hand() {
        // y = [0, 2], yhat = [0, 0]: SSE 4, SST 2
        let e = explainer_for("x,y\n0,0\n1,2", |_| 0.0).unwrap();
        let perf = model_performance(&e).unwrap();
        assert_eq!(perf.get("mse"), Some(2.0));
        assert_eq!(perf.get("rmse"), Some(2f64.sqrt()));
        assert_eq!(perf.get("mae"), Some(1.0));
        assert_eq!(perf.get("r2"), Some(-1.0));
    }

    #[test]
    fn classification_performance_by_hand() {
        let e = explainer_for("x,y\n0.4,0\n0.6,1", |r| r[0]).unwrap();
        let perf = model_performance(&e).unwrap();
        assert_eq!(perf.get("auc"), Some(1.0));
        assert_eq!(perf.get("accuracy"), Some(1.0));

        let e = explainer_for("x,y\n0.4,0\n0.6,1", |_| 0.5).unwrap();
        assert_eq!(model_performance(&e).unwrap().get("auc"), Some(0.5));
    }

    #[test]
    fn single_class_target_is_degenerate() {
        let data = load_dataset_str("x,y\n0.4,1\n0.6,1", Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[0])), data, "m", None, 0).unwrap();
        assert!(matches!(model_performance(&e), Err(ExplainError::DegenerateTarget(_))));
    }

    #[test]
    fn perfect_model_has_unit_r2() {
        let e = explainer_for("x,y\n1,1\n2,2\n3,3", |r| r[0]).unwrap();
        assert_eq!(model_performance(&e).unwrap().get("r2"), Some(1.0));
    }
}
