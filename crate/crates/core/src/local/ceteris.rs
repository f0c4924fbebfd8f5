use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::data::{ColumnData, ColumnKind, ColumnSchema, Table, Value};
use crate::error::Result;
use crate::explainer::{Explainer, Instance};
use crate::explanation::{ColumnValues, Explanation, ResultTable};
use crate::grid::{grid_for_column, GridSpacing, DEFAULT_GRID_SIZE};

#[derive(Debug, Clone)]
pub struct CeterisParibusOptions {
    /// `None` profiles every explanatory variable.
    pub variables: Option<Vec<String>>,
    pub grid_size: usize,
    pub spacing: GridSpacing,
}

impl Default for CeterisParibusOptions {
    fn default() -> Self {
        CeterisParibusOptions {
            variables: None,
            grid_size: DEFAULT_GRID_SIZE,
            spacing: GridSpacing::Quantile,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableProfile {
    pub variable: String,
    pub column: usize,
    pub grid: Vec<Value>,
    pub predictions: Vec<f64>,
    /// Position of the observed value within `grid`.
    pub observed_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeterisParibus {
    pub profiles: Vec<VariableProfile>,
    pub prediction: f64,
    pub instance: Instance,
}

impl CeterisParibus {
    pub fn profile(&self, variable: &str) -> Option<&VariableProfile> {
        self.profiles.iter().find(|p| p.variable == variable)
    }

    pub fn to_explanation(&self, label: &str, schema: &[ColumnSchema], options: &CeterisParibusOptions) -> Explanation {
        let mut vname = Vec::new();
        let mut x = Vec::new();
        let mut yhat = Vec::new();
        let mut observed = Vec::new();
        let mut series = Vec::new();
        for p in &self.profiles {
            let s = &schema[p.column];
            for (k, (g, y)) in p.grid.iter().zip(&p.predictions).enumerate() {
                vname.push(p.variable.clone());
                x.push(s.render(*g));
                yhat.push(*y);
                observed.push(i64::from(k == p.observed_index));
            }
            let xs: Vec<Json> = p.grid.iter().map(|g| json_value(s, *g)).collect();
            series.push(json!({
                "variable": p.variable,
                "kind": s.kind,
                "x": xs,
                "y": p.predictions,
                "anchor": {
                    "x": json_value(s, self.instance.get(p.column)),
                    "y": p.predictions[p.observed_index],
                },
            }));
        }
        let result = ResultTable::new()
            .with("variable", ColumnValues::Text(vname))
            .with("x", ColumnValues::Text(x))
            .with("yhat", ColumnValues::Float(yhat))
            .with("observed", ColumnValues::Int(observed));
        let chart = json!({
            "type": "cp_profile",
            "prediction": self.prediction,
            "series": series,
        });
        let names: Vec<&str> = self.profiles.iter().map(|p| p.variable.as_str()).collect();
        Explanation::new("cp", label, result, chart)
            .with_meta("grid_size", options.grid_size as u64)
            .with_meta("grid_spacing", spacing_name(options.spacing))
            .with_meta("variables", json!(names))
    }
}

pub(crate) fn spacing_name(s: GridSpacing) -> &'static str {
    match s {
        GridSpacing::Quantile => "quantile",
        GridSpacing::Uniform => "uniform",
    }
}

pub(crate) fn json_value(schema: &ColumnSchema, v: Value) -> Json {
    match (schema.kind, v) {
        (ColumnKind::Numeric, Value::Num(x)) => json!(x),
        _ => json!(schema.render(v)),
    }
}

/// Inserts `value` into an ascending grid if absent; returns its position.
fn insert_observed(grid: &mut Vec<Value>, value: Value) -> usize {
    if let Some(i) = grid.iter().position(|g| g.same_bits(&value)) {
        return i;
    }
    let i = match value {
        Value::Num(x) => grid
            .iter()
            .position(|g| matches!(g, Value::Num(y) if *y > x))
            .unwrap_or(grid.len()),
        Value::Level(_) => grid.len(),
    };
    grid.insert(i, value);
    i
}

/// Evaluates `rows` with column `col` swept over `grid`, one block per row.
pub(crate) fn sweep(table: &Table, col: usize, grid: &[Value]) -> Table {
    let n = table.n_rows();
    let idx: Vec<usize> = (0..grid.len()).flat_map(|_| 0..n).collect();
    let mut out = table.take_rows(&idx);
    let data = match table.column(col) {
        ColumnData::Numeric(_) => ColumnData::Numeric(
            grid.iter()
                .flat_map(|g| match g {
                    Value::Num(x) => std::iter::repeat_n(*x, n),
                    Value::Level(_) => unreachable!(),
                })
                .collect(),
        ),
        ColumnData::Categorical(_) => ColumnData::Categorical(
            grid.iter()
                .flat_map(|g| match g {
                    Value::Level(l) => std::iter::repeat_n(*l, n),
                    Value::Num(_) => unreachable!(),
                })
                .collect(),
        ),
    };
    out.replace_column(col, data);
    out
}

/// What-if curves: the prediction as one variable moves over its grid while
/// every other variable keeps the instance's value.
pub fn ceteris_paribus(
    explainer: &Explainer,
    instance: &Instance,
    options: &CeterisParibusOptions,
) -> Result<CeterisParibus> {
    let columns = explainer.resolve_variables(options.variables.as_deref())?;
    let features = explainer.features();
    let prediction = explainer.predict_instance(instance)?;
    let single = Table::repeat(features.schema(), instance.values(), 1);
    let profiles: Vec<Result<VariableProfile>> = columns
        .par_iter()
        .map(|&col| {
            let name = &features.schema()[col].name;
            let mut grid = grid_for_column(features, name, options.grid_size, options.spacing)?;
            let observed_index = insert_observed(&mut grid, instance.get(col));
            let predictions = explainer.score_checked(&sweep(&single, col, &grid))?;
            Ok(VariableProfile {
                variable: name.clone(),
                column: col,
                grid,
                predictions,
                observed_index,
            })
        })
        .collect();
    Ok(CeterisParibus {
        profiles: profiles.into_iter().collect::<Result<_>>()?,
        prediction,
        instance: instance.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset_str;
    use crate::predictor::row_fn;
    use std::sync::Arc;

    #[test]
    fn square_profile_on_small_grid() {
        let data = load_dataset_str("x,y\n0,0\n1,1\n2,4\n3,9", Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[0] * r[0])), data, "sq", None, 0).unwrap();
        let inst = e.instance(2).unwrap();
        let opts = CeterisParibusOptions {
            grid_size: 4,
            ..Default::default()
        };
        let cp = ceteris_paribus(&e, &inst, &opts).unwrap();
        let p = cp.profile("x").unwrap();
        assert_eq!(
            p.grid,
            vec![Value::Num(0.0), Value::Num(1.0), Value::Num(2.0), Value::Num(3.0)]
        );
        assert_eq!(p.predictions, vec![0.0, 1.0, 4.0, 9.0]);
        assert_eq!(p.predictions[p.observed_index], cp.prediction);
    }

    #[test]
    fn observed_value_is_inserted() {
        let data = load_dataset_str("x,y\n0,0\n10,1\n2.5,4\n7,9", Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[0].sin())), data, "s", None, 0).unwrap();
        let inst = e.instance(2).unwrap();
        let opts = CeterisParibusOptions {
            grid_size: 3,
            ..Default::default()
        };
        let cp = ceteris_paribus(&e, &inst, &opts).unwrap();
        let p = cp.profile("x").unwrap();
        assert_eq!(p.grid.len(), 4);
        assert_eq!(p.grid[p.observed_index], Value::Num(2.5));
        assert_eq!(p.predictions[p.observed_index].to_bits(), cp.prediction.to_bits());
        let xs: Vec<f64> = p
            .grid
            .iter()
            .map(|v| match v {
                Value::Num(x) => *x,
                _ => panic!(),
            })
            .collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn categorical_profile_has_one_point_per_level() {
        let data = load_dataset_str("c,x,y\na,1,0\nb,2,1\nc,3,2\na,4,3", Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[0] * 10.0 + r[1])), data, "c", None, 0).unwrap();
        let inst = e.instance(0).unwrap();
        let cp = ceteris_paribus(&e, &inst, &CeterisParibusOptions::default()).unwrap();
        let p = cp.profile("c").unwrap();
        assert_eq!(p.grid.len(), 3);
        assert_eq!(p.predictions, vec![1.0, 11.0, 21.0]);
    }
}
