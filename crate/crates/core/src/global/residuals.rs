use serde_json::json;

use crate::error::Result;
use crate::explainer::Explainer;
use crate::explanation::{ColumnValues, Explanation, ResultTable};

/// Per-row residuals, sorted by absolute residual (descending), ties by row id.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTable {
    pub row_id: Vec<usize>,
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub residual: Vec<f64>,
    pub abs_residual: Vec<f64>,
}

impl ResidualTable {
    /// Equal-width histogram of residuals with Sturges' bin count.
    pub fn histogram(&self) -> (Vec<f64>, Vec<u64>) {
        let n = self.residual.len();
        if n == 0 {
            return (Vec::new(), Vec::new());
        }
        let lo = self.residual.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.residual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return (vec![lo, hi], vec![n as u64]);
        }
        let bins = (n as f64).log2().ceil() as usize + 1;
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();
        let mut counts = vec![0u64; bins];
        for r in &self.residual {
            let b = (((r - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        (edges, counts)
    }

    pub fn to_explanation(&self, label: &str) -> Explanation {
        let result = ResultTable::new()
            .with(
                "row_id",
                ColumnValues::Int(self.row_id.iter().map(|&r| r as i64).collect()),
            )
            .with("y", ColumnValues::Float(self.y.clone()))
            .with("y_hat", ColumnValues::Float(self.y_hat.clone()))
            .with("residual", ColumnValues::Float(self.residual.clone()))
            .with("abs_residual", ColumnValues::Float(self.abs_residual.clone()));
        let (edges, counts) = self.histogram();
        let chart = json!({
            "type": "residuals",
            "points": {"row_id": self.row_id, "y_hat": self.y_hat, "residual": self.residual},
            "histogram": {"edges": edges, "counts": counts},
        });
        Explanation::new("residuals", label, result, chart)
    }
}

/// Residuals `y − ŷ` over the full dataset; classifiers use the probability score as ŷ.
pub fn residual_diagnostics(explainer: &Explainer) -> Result<ResidualTable> {
    let y = explainer.target();
    let p = explainer.predictions()?;
    let mut order: Vec<usize> = (0..y.len()).collect();
    let abs: Vec<f64> = y.iter().zip(p).map(|(a, b)| (a - b).abs()).collect();
    order.sort_by(|&a, &b| abs[b].total_cmp(&abs[a]).then(a.cmp(&b)));
    Ok(ResidualTable {
        y: order.iter().map(|&i| y[i]).collect(),
        y_hat: order.iter().map(|&i| p[i]).collect(),
        residual: order.iter().map(|&i| y[i] - p[i]).collect(),
        abs_residual: order.iter().map(|&i| abs[i]).collect(),
        row_id: order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset_str;
    use crate::predictor::row_fn;
    use std::sync::Arc;

    #[test]
    fn residuals_by_hand() {
        let data = load_dataset_str("x,y\n0.5,1\n2.5,2", Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[0])), data, "m", None, 0).unwrap();
        let r = residual_diagnostics(&e).unwrap();
        // tie on |0.5|: row order preserved
        assert_eq!(r.row_id, vec![0, 1]);
        assert_eq!(r.residual, vec![0.5, -0.5]);
        assert_eq!(r.abs_residual, vec![0.5, 0.5]);
    }

    #[test]
    fn sorted_descending() {
        let data = load_dataset_str("x,y\n1,1\n0,3\n5,4\n2,2", Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[0])), data, "m", None, 0).unwrap();
        let r = residual_diagnostics(&e).unwrap();
        assert_eq!(r.row_id, vec![1, 2, 0, 3]);
        assert!(r.abs_residual.windows(2).all(|w| w[0] >= w[1]));
        let (edges, counts) = r.histogram();
        assert_eq!(edges.len(), counts.len() + 1);
        assert_eq!(counts.iter().sum::<u64>(), 4);
    }

    #[test]
    fn perfect_model_zero_residuals() {
        let data = load_dataset_str("x,y\n1,1\n2,2\n3,3", Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[0])), data, "m", None, 0).unwrap();
        let r = residual_diagnostics(&e).unwrap();
        assert!(r.residual.iter().all(|&v| v == 0.0));
        for i in 0..3 {
            assert_eq!(r.y_hat[i] + r.residual[i], r.y[i]);
        }
    }
}
