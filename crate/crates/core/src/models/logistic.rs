use serde::Serialize;

use super::design::{encode_terms, linear_predictor, term_columns};
use super::linear::LinearModel;
use crate::data::{Dataset, Table};
use crate::error::{ExplainError, Result};
use crate::predictor::Predictor;

pub const DEFAULT_ITERATIONS: usize = 500;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

/// Probabilities are kept this far from 0 and 1.
const PROBABILITY_MARGIN: f64 = 1e-12;

/// Logistic regression: a linear model on the log-odds scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticModel {
    pub logit: LinearModel,
}

pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(PROBABILITY_MARGIN, 1.0 - PROBABILITY_MARGIN)
}

impl Predictor for LogisticModel {
    fn score(&self, rows: &Table) -> Result<Vec<f64>> {
        Ok(self.logit.eval(rows)?.into_iter().map(sigmoid).collect())
    }
}

/// Full-batch gradient descent on the mean log loss, starting from zero.
pub fn fit_logistic(data: &Dataset, iterations: usize, learning_rate: f64) -> Result<LogisticModel> {
    let y = data.target_values()?;
    if let Some(bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(ExplainError::param(
            "target",
            format!("logistic regression needs a 0/1 target, found {bad}"),
        ));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(ExplainError::param("learning_rate", "must be positive"));
    }
    let features = data.features();
    let terms = encode_terms(features.schema());
    let x = term_columns(&terms, &features)?;
    let n = y.len();
    let mut intercept = 0.0;
    let mut coefficients = vec![0.0; terms.len()];
    for _ in 0..iterations {
        let z = linear_predictor(intercept, &coefficients, &x, n);
        let residual: Vec<f64> = z.iter().zip(y).map(|(z, y)| sigmoid(*z) - y).collect();
        let scale = learning_rate / n as f64;
        intercept -= scale * residual.iter().sum::<f64>();
        for (b, col) in coefficients.iter_mut().zip(&x) {
            *b -= scale * col.iter().zip(&residual).map(|(x, r)| x * r).sum::<f64>();
        }
    }
    Ok(LogisticModel {
        logit: LinearModel {
            intercept,
            terms,
            coefficients,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset_str;

    fn csv(rows: impl Iterator<Item = (f64, u8)>) -> String {
        let mut s = String::from("x,y\n");
        for (x, y) in rows {
            s.push_str(&format!("{x},{y}\n"));
        }
        s
    }

    #[test]
    fn separable_toy_is_classified_perfectly() {
        let text = csv((0..20).map(|i| {
            let x = i as f64 - 9.5;
            (x, u8::from(x > 0.0))
        }));
        let d = load_dataset_str(&text, Some("y")).unwrap();
        let m = fit_logistic(&d, DEFAULT_ITERATIONS, DEFAULT_LEARNING_RATE).unwrap();
        let p = m.score(&d.features()).unwrap();
        let y = d.target_values().unwrap();
        assert!(p.iter().zip(y).all(|(p, y)| (*p >= 0.5) == (*y == 1.0)));
        assert!(p.iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn all_zero_target_pushes_probabilities_down() {
        let d = load_dataset_str(&csv((0..10).map(|i| (i as f64, 0))), Some("y")).unwrap();
        let m = fit_logistic(&d, DEFAULT_ITERATIONS, DEFAULT_LEARNING_RATE).unwrap();
        assert!(m.score(&d.features()).unwrap().iter().all(|p| *p < 0.5 && *p > 0.0));
    }

    #[test]
    fn non_binary_target_rejected() {
        let d = load_dataset_str("x,y\n1,0\n2,2", Some("y")).unwrap();
        assert!(matches!(fit_logistic(&d, 10, 0.1), Err(ExplainError::Parameter { .. })));
    }

    #[test]
    fn sigmoid_stays_inside_unit_interval() {
        assert!(sigmoid(1000.0) < 1.0);
        assert!(sigmoid(-1000.0) > 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
