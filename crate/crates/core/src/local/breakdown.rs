use serde_json::json;

use super::{sign_label, SubsetMeans, DEFAULT_BACKGROUND_SIZE};
use crate::error::{ExplainError, Result};
use crate::explainer::{Explainer, Instance};
use crate::explanation::{ColumnValues, Explanation, ResultTable};

#[derive(Debug, Clone)]
pub struct BreakDownOptions {
    /// Variables fixed in this order. Unlisted variables follow in the
    /// default order. `None` uses the default order throughout.
    pub order: Option<Vec<String>>,
    pub background_size: usize,
    pub seed: u64,
}

impl Default for BreakDownOptions {
    fn default() -> Self {
        BreakDownOptions {
            order: None,
            background_size: DEFAULT_BACKGROUND_SIZE,
            seed: 0,
        }
    }
}

/// Sequential additive attribution of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// Column indices in the order they were fixed.
    pub order: Vec<usize>,
    pub variables: Vec<String>,
    pub values: Vec<String>,
    pub contributions: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub intercept: f64,
    pub prediction: f64,
    pub background_rows: usize,
}

impl Attribution {
    pub fn contribution_of(&self, variable: &str) -> Option<f64> {
        self.variables
            .iter()
            .position(|v| v == variable)
            .map(|i| self.contributions[i])
    }

    pub fn to_explanation(&self, label: &str, options: &BreakDownOptions) -> Explanation {
        let n = self.variables.len();
        let mut names = Vec::with_capacity(n + 2);
        let mut values = Vec::with_capacity(n + 2);
        let mut contrib = Vec::with_capacity(n + 2);
        let mut cumulative = Vec::with_capacity(n + 2);
        let mut signs = Vec::with_capacity(n + 2);
        let mut position = Vec::with_capacity(n + 2);

        names.push("intercept".to_string());
        values.push(String::new());
        contrib.push(self.intercept);
        cumulative.push(self.intercept);
        signs.push(sign_label(self.intercept).to_string());
        position.push(0);
        for i in 0..n {
            names.push(self.variables[i].clone());
            values.push(self.values[i].clone());
            contrib.push(self.contributions[i]);
            cumulative.push(self.cumulative[i]);
            signs.push(sign_label(self.contributions[i]).to_string());
            position.push(i as i64 + 1);
        }
        names.push("prediction".to_string());
        values.push(String::new());
        contrib.push(self.prediction);
        cumulative.push(self.prediction);
        signs.push(sign_label(self.prediction).to_string());
        position.push(n as i64 + 1);

        let result = ResultTable::new()
            .with("variable", ColumnValues::Text(names))
            .with("variable_value", ColumnValues::Text(values))
            .with("contribution", ColumnValues::Float(contrib))
            .with("cumulative", ColumnValues::Float(cumulative))
            .with("sign", ColumnValues::Text(signs))
            .with("position", ColumnValues::Int(position));

        let mut start = self.intercept;
        let bars: Vec<_> = (0..n)
            .map(|i| {
                let bar = json!({
                    "variable": self.variables[i],
                    "value": self.values[i],
                    "contribution": self.contributions[i],
                    "start": start,
                    "end": self.cumulative[i],
                    "sign": sign_label(self.contributions[i]),
                });
                start = self.cumulative[i];
                bar
            })
            .collect();
        let chart = json!({
            "type": "breakdown",
            "intercept": self.intercept,
            "prediction": self.prediction,
            "bars": bars,
        });
        Explanation::new("breakdown", label, result, chart)
            .with_meta("seed", options.seed)
            .with_meta("background_size", options.background_size as u64)
            .with_meta("background_rows", self.background_rows as u64)
            .with_meta("order", json!(self.variables))
    }
}

/// Resolves the user order (if any) into a full permutation of column indices.
fn resolve_order(
    explainer: &Explainer,
    requested: Option<&[String]>,
    default: impl FnOnce() -> Result<Vec<usize>>,
) -> Result<Vec<usize>> {
    let p = explainer.features().n_cols();
    let mut order = Vec::with_capacity(p);
    if let Some(names) = requested {
        for name in names {
            let j = explainer.variable_index(name)?;
            if order.contains(&j) {
                return Err(ExplainError::param("order", format!("variable '{name}' listed twice")));
            }
            order.push(j);
        }
        if order.len() == p {
            return Ok(order);
        }
    }
    for j in default()? {
        if !order.contains(&j) {
            order.push(j);
        }
    }
    Ok(order)
}

/// Default ordering: descending absolute single-variable effect, ties by column order.
fn default_order(means: &SubsetMeans<'_>, base: f64) -> Result<Vec<usize>> {
    let p = means.n_variables();
    let mut effects = Vec::with_capacity(p);
    for j in 0..p {
        effects.push((means.mean(&[j])? - base).abs());
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| effects[b].total_cmp(&effects[a]));
    Ok(order)
}

pub(crate) fn attribute_ordering(
    explainer: &Explainer,
    instance: &Instance,
    means: &SubsetMeans<'_>,
    intercept: f64,
    order: Vec<usize>,
    lookup: &dyn Fn(&[usize]) -> Result<f64>,
) -> Result<Attribution> {
    let schema = explainer.features().schema();
    let mut fixed = Vec::with_capacity(order.len());
    let mut previous = intercept;
    let mut running = intercept;
    let mut contributions = Vec::with_capacity(order.len());
    let mut cumulative = Vec::with_capacity(order.len());
    for &j in &order {
        fixed.push(j);
        let current = lookup(&fixed)?;
        let c = current - previous;
        contributions.push(c);
        running += c;
        cumulative.push(running);
        previous = current;
    }
    Ok(Attribution {
        variables: order.iter().map(|&j| schema[j].name.clone()).collect(),
        values: order.iter().map(|&j| schema[j].render(instance.get(j))).collect(),
        order,
        contributions,
        cumulative,
        intercept,
        prediction: means.prediction(),
        background_rows: means.background_rows(),
    })
}

/// Break-down attribution of `instance`.
///
/// Variables are fixed to the instance's values one at a time; each
/// contribution is the change in mean prediction over the background sample.
/// The contributions telescope, so intercept plus contributions equals the
/// prediction.
pub fn break_down(explainer: &Explainer, instance: &Instance, options: &BreakDownOptions) -> Result<Attribution> {
    if options.background_size == 0 {
        return Err(ExplainError::param("background_size", "must be at least 1"));
    }
    let means = SubsetMeans::new(explainer, instance, options.background_size, options.seed)?;
    let intercept = means.mean(&[])?;
    let order = resolve_order(explainer, options.order.as_deref(), || default_order(&means, intercept))?;
    attribute_ordering(explainer, instance, &means, intercept, order, &|s| means.mean(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset_str;
    use crate::predictor::row_fn;
    use crate::stats;
    use std::sync::Arc;

    fn linear_explainer() -> Explainer {
        let mut csv = String::from("x1,x2,y\n");
        for i in 0..30 {
            let x1 = (i * 7 % 11) as f64 * 0.5;
            let x2 = (i * 3 % 13) as f64 - 4.0;
            csv.push_str(&format!("{x1},{x2},{}\n", 1.0 + 2.0 * x1 - 3.0 * x2));
        }
        let data = load_dataset_str(&csv, Some("y")).unwrap();
        Explainer::new(
            Arc::new(row_fn(|r| 1.0 + 2.0 * r[0] - 3.0 * r[1])),
            data,
            "lin",
            None,
            0,
        )
        .unwrap()
    }

    #[test]
    fn linear_contributions_match_centered_coefficients() {
        let e = linear_explainer();
        let inst = e.instance(4).unwrap();
        let opts = BreakDownOptions {
            background_size: 10,
            seed: 5,
            ..Default::default()
        };
        let bd = break_down(&e, &inst, &opts).unwrap();

        // oracle: background means computed directly from the sampled rows
        let rows = crate::rng::sample_rows(5, crate::rng::BACKGROUND, 30, 10);
        let x1: Vec<f64> = rows.iter().map(|&r| e.features().numeric(0).unwrap()[r]).collect();
        let x2: Vec<f64> = rows.iter().map(|&r| e.features().numeric(1).unwrap()[r]).collect();
        let v = inst.values();
        let (crate::data::Value::Num(a), crate::data::Value::Num(b)) = (v[0], v[1]) else {
            panic!()
        };
        let expected1 = 2.0 * (a - stats::mean(&x1));
        let expected2 = -3.0 * (b - stats::mean(&x2));
        assert!((bd.contribution_of("x1").unwrap() - expected1).abs() < 1e-9);
        assert!((bd.contribution_of("x2").unwrap() - expected2).abs() < 1e-9);

        for order in [vec!["x1", "x2"], vec!["x2", "x1"]] {
            let opts = BreakDownOptions {
                order: Some(order.iter().map(|s| s.to_string()).collect()),
                background_size: 10,
                seed: 5,
            };
            let other = break_down(&e, &inst, &opts).unwrap();
            assert!((other.contribution_of("x1").unwrap() - expected1).abs() < 1e-9);
            assert!((other.contribution_of("x2").unwrap() - expected2).abs() < 1e-9);
        }
    }

    #[test]
    fn ignored_variable_contributes_exactly_zero() {
        let data = load_dataset_str("x1,x2,y\n1,5,0\n2,3,1\n3,8,2\n4,1,3", Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[0] * r[0])), data, "m", None, 0).unwrap();
        let inst = e.instance(2).unwrap();
        for order in [vec!["x1", "x2"], vec!["x2", "x1"]] {
            let opts = BreakDownOptions {
                order: Some(order.iter().map(|s| s.to_string()).collect()),
                ..Default::default()
            };
            let bd = break_down(&e, &inst, &opts).unwrap();
            assert_eq!(bd.contribution_of("x2"), Some(0.0));
        }
    }

    #[test]
    fn additivity_and_cumulative() {
        let e = linear_explainer();
        let inst = e.instance(11).unwrap();
        let bd = break_down(&e, &inst, &BreakDownOptions::default()).unwrap();
        let total = bd.intercept + bd.contributions.iter().sum::<f64>();
        assert!((total - bd.prediction).abs() <= 1e-9 * bd.prediction.abs().max(1.0));
        assert_eq!(bd.prediction, e.predict_instance(&inst).unwrap());
        let mut run = bd.intercept;
        for (c, cum) in bd.contributions.iter().zip(&bd.cumulative) {
            run += c;
            assert_eq!(run, *cum);
        }
    }

    #[test]
    fn default_order_is_by_absolute_effect() {
        let e = linear_explainer();
        let inst = e.instance(0).unwrap();
        let bd = break_down(&e, &inst, &BreakDownOptions::default()).unwrap();
        let abs: Vec<f64> = bd.contributions.iter().map(|c| c.abs()).collect();
        // additive model: single-variable effect equals the contribution
        assert!(abs[0] >= abs[1]);
    }

    #[test]
    fn unknown_order_variable_is_schema_error() {
        let e = linear_explainer();
        let inst = e.instance(0).unwrap();
        let opts = BreakDownOptions {
            order: Some(vec!["nope".into()]),
            ..Default::default()
        };
        assert!(matches!(break_down(&e, &inst, &opts), Err(ExplainError::Schema(_))));
    }

    #[test]
    fn explanation_rows_frame_the_variables() {
        let e = linear_explainer();
        let inst = e.instance(0).unwrap();
        let opts = BreakDownOptions::default();
        let ex = break_down(&e, &inst, &opts).unwrap().to_explanation("lin", &opts);
        let vars = ex.result.texts("variable").unwrap();
        assert_eq!(vars.first().unwrap(), "intercept");
        assert_eq!(vars.last().unwrap(), "prediction");
        assert_eq!(ex.result.n_rows(), 4);
    }
}
