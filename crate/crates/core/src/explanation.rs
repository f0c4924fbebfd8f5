//! The uniform result record shared by every method.
//!
//! An [`Explanation`] carries a long-format result table, a chart payload for
//! the dashboard, and the parameters needed to reproduce it. The JSON layout is
//! `{kind, model_label, result: {columns, values}, chart, meta}`; `values` is
//! column-oriented (one array per column).

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value as Json;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ColumnValues {
    Float(Vec<f64>),
    /// Floats that may be undefined; `None` serializes as `null`.
    MaybeFloat(Vec<Option<f64>>),
    Int(Vec<i64>),
    Text(Vec<String>),
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Float(v) => v.len(),
            ColumnValues::MaybeFloat(v) => v.len(),
            ColumnValues::Int(v) => v.len(),
            ColumnValues::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Column-oriented table; every column has the same length.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResultTable {
    columns: Vec<String>,
    values: Vec<ColumnValues>,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a column. Panics if its length differs from existing columns.
    pub fn with(mut self, name: &str, values: ColumnValues) -> Self {
        if let Some(first) = self.values.first() {
            assert_eq!(
                first.len(),
                values.len(),
                "result column '{name}' has mismatched length"
            );
        }
        self.columns.push(name.to_string());
        self.values.push(values);
        self
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.values.first().map_or(0, ColumnValues::len)
    }

    pub fn get(&self, name: &str) -> Option<&ColumnValues> {
        self.columns.iter().position(|c| c == name).map(|i| &self.values[i])
    }

    pub fn floats(&self, name: &str) -> Option<&[f64]> {
        match self.get(name)? {
            ColumnValues::Float(v) => Some(v),
            _ => None,
        }
    }

    pub fn maybe_floats(&self, name: &str) -> Option<&[Option<f64>]> {
        match self.get(name)? {
            ColumnValues::MaybeFloat(v) => Some(v),
            _ => None,
        }
    }

    pub fn ints(&self, name: &str) -> Option<&[i64]> {
        match self.get(name)? {
            ColumnValues::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn texts(&self, name: &str) -> Option<&[String]> {
        match self.get(name)? {
            ColumnValues::Text(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub kind: String,
    pub model_label: String,
    pub result: ResultTable,
    pub chart: Json,
    pub meta: BTreeMap<String, Json>,
}

impl Explanation {
    pub fn new(kind: &str, model_label: &str, result: ResultTable, chart: Json) -> Self {
        Explanation {
            kind: kind.to_string(),
            model_label: model_label.to_string(),
            result,
            chart,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Json>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    /// Canonical compact JSON encoding; identical inputs give identical bytes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("explanation is always serializable")
    }
}

/// Chart payload `type` for each method kind.
pub const CHART_TYPES: &[(&str, &str)] = &[
    ("performance", "performance"),
    ("breakdown", "breakdown"),
    ("shapley", "shapley"),
    ("cp", "cp_profile"),
    ("importance", "importance"),
    ("profile", "profile"),
    ("residuals", "residuals"),
    ("surrogate", "tree"),
    ("fairness", "fairness_check"),
];

/// Structural check of a serialized explanation against the chart-payload schema.
///
/// Verifies the envelope, the column-oriented table, and the required fields
/// of the kind-specific chart payload. Returns a description of the first
/// problem found.
pub fn validate_payload(doc: &Json) -> Result<(), String> {
    let obj = doc.as_object().ok_or("explanation must be an object")?;
    for key in ["kind", "model_label", "result", "chart", "meta"] {
        if !obj.contains_key(key) {
            return Err(format!("missing field '{key}'"));
        }
    }
    if obj.len() != 5 {
        return Err("unexpected top-level fields".into());
    }
    let kind = obj["kind"].as_str().ok_or("kind must be a string")?;
    obj["model_label"].as_str().ok_or("model_label must be a string")?;
    obj["meta"].as_object().ok_or("meta must be an object")?;

    let result = obj["result"].as_object().ok_or("result must be an object")?;
    let columns = result
        .get("columns")
        .and_then(Json::as_array)
        .ok_or("result.columns must be an array")?;
    let values = result
        .get("values")
        .and_then(Json::as_array)
        .ok_or("result.values must be an array")?;
    if columns.len() != values.len() {
        return Err("result.columns and result.values differ in length".into());
    }
    if columns.iter().any(|c| !c.is_string()) {
        return Err("result.columns must hold strings".into());
    }
    let mut n_rows = None;
    for v in values {
        let arr = v.as_array().ok_or("each result.values entry must be an array")?;
        if *n_rows.get_or_insert(arr.len()) != arr.len() {
            return Err("result columns have unequal lengths".into());
        }
    }

    let chart_type = CHART_TYPES
        .iter()
        .find(|(k, _)| *k == kind)
        .map(|(_, t)| *t)
        .ok_or_else(|| format!("unknown kind '{kind}'"))?;
    let chart = obj["chart"].as_object().ok_or("chart must be an object")?;
    if chart.get("type").and_then(Json::as_str) != Some(chart_type) {
        return Err(format!("chart.type must be '{chart_type}'"));
    }
    let required: &[&str] = match chart_type {
        "performance" => &["task", "metrics"],
        "breakdown" => &["intercept", "prediction", "bars"],
        "shapley" => &["intercept", "prediction", "bars"],
        "cp_profile" => &["prediction", "series"],
        "importance" => &["loss", "mode", "full_model", "bars"],
        "profile" => &["profile_kind", "series"],
        "residuals" => &["points", "histogram"],
        "tree" => &["fidelity", "max_depth", "root"],
        "fairness_check" => &["epsilon", "band", "metrics", "verdict", "narrative"],
        _ => unreachable!(),
    };
    for key in required {
        if !chart.contains_key(*key) {
            return Err(format!("chart '{chart_type}' is missing '{key}'"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn serializes_column_oriented() {
        let t = ResultTable::new()
            .with("name", ColumnValues::Text(vec!["a".into(), "b".into()]))
            .with("v", ColumnValues::MaybeFloat(vec![Some(1.5), None]));
        let e = Explanation::new(
            "performance",
            "m",
            t,
            json!({"type": "performance", "task": "regression", "metrics": {}}),
        )
        .with_meta("seed", 42);
        let s = String::from_utf8(e.to_json_bytes()).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"performance","model_label":"m","result":{"columns":["name","v"],"values":[["a","b"],[1.5,null]]},"chart":{"metrics":{},"task":"regression","type":"performance"},"meta":{"seed":42}}"#
        );
        validate_payload(&serde_json::from_str(&s).unwrap()).unwrap();
    }

    #[test]
    #[should_panic(expected = "mismatched length")]
    fn rejects_ragged_result() {
        let _ = ResultTable::new()
            .with("a", ColumnValues::Int(vec![1]))
            .with("b", ColumnValues::Int(vec![1, 2]));
    }

    #[test]
    fn validator_flags_wrong_chart_type() {
        let doc = json!({"kind": "cp", "model_label": "m", "result": {"columns": [], "values": []},
                         "chart": {"type": "breakdown"}, "meta": {}});
        assert!(validate_payload(&doc).is_err());
    }
}
