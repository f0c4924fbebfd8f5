use std::collections::BTreeMap;

use serde::Serialize;

use super::design::{encode_terms, linear_predictor, term_columns, Term};
use crate::data::{ColumnSchema, Dataset, Table};
use crate::error::{ExplainError, Result};
use crate::predictor::Predictor;

/// Added to the diagonal of the normal equations.
pub const RIDGE: f64 = 1e-10;

/// A pivot is treated as zero when what remains of a column after
/// projecting out the earlier ones is below this fraction of its own
/// sum of squares.
const PIVOT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    /// Builds a model from coefficients keyed by term name (`x` for numeric
    /// columns, `c=level` for indicators). Terms not listed get 0; keys that
    /// match no term of `schema` are rejected.
    pub fn from_named(intercept: f64, coefficients: &BTreeMap<String, f64>, schema: &[ColumnSchema]) -> Result<Self> {
        let terms = encode_terms(schema);
        let names: Vec<String> = terms.iter().map(Term::name).collect();
        if let Some(unknown) = coefficients.keys().find(|k| !names.contains(k)) {
            return Err(ExplainError::param(
                "coefficients",
                format!(
                    "'{unknown}' is not a model term (expected one of: {})",
                    names.join(", ")
                ),
            ));
        }
        let coefficients = names
            .iter()
            .map(|n| coefficients.get(n).copied().unwrap_or(0.0))
            .collect();
        Ok(LinearModel {
            intercept,
            terms,
            coefficients,
        })
    }

    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.terms
            .iter()
            .position(|t| t.name() == term)
            .map(|i| self.coefficients[i])
    }

    /// Linear predictor for each row.
    pub fn eval(&self, rows: &Table) -> Result<Vec<f64>> {
        let cols = term_columns(&self.terms, rows)?;
        Ok(linear_predictor(
            self.intercept,
            &self.coefficients,
            &cols,
            rows.n_rows(),
        ))
    }
}

impl Predictor for LinearModel {
    fn score(&self, rows: &Table) -> Result<Vec<f64>> {
        self.eval(rows)
    }
}

/// Ordinary least squares on the drop-first design.
///
/// The normal equations are formed on mean-centred columns (which leaves the
/// slopes unchanged and keeps the system well conditioned), jittered by
/// [`RIDGE`] on the diagonal and solved by Cholesky factorisation.
pub fn fit_linear(data: &Dataset) -> Result<LinearModel> {
    let y = data.target_values()?;
    let features = data.features();
    let terms = encode_terms(features.schema());
    let x = term_columns(&terms, &features)?;
    let n = y.len();
    if n == 0 {
        return Err(ExplainError::Schema("dataset has no rows".into()));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = x.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let centred: Vec<Vec<f64>> = x
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| v - m).collect())
        .collect();
    let p = terms.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut gram = vec![vec![0.0; p]; p];
    for j in 0..p {
        for k in 0..=j {
            let v = dot(&centred[j], &centred[k]);
            gram[j][k] = v;
            gram[k][j] = v;
        }
    }
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let rhs: Vec<f64> = centred.iter().map(|c| dot(c, &yc)).collect();
    let coefficients = solve_cholesky(&gram, &rhs, RIDGE).map_err(|j| {
        ExplainError::Singular(format!(
            "term '{}' is constant or a linear combination of earlier terms",
            terms[j].name()
        ))
    })?;
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        terms,
        coefficients,
    })
}

/// Solves `(a + ridge·I) x = b`; on a vanishing pivot returns its index.
fn solve_cholesky(a: &[Vec<f64>], b: &[f64], ridge: f64) -> std::result::Result<Vec<f64>, usize> {
    let p = b.len();
    let mut l = vec![vec![0.0; p]; p];
    for j in 0..p {
        let d = a[j][j] + ridge - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d - ridge <= PIVOT_TOLERANCE * a[j][j] {
            return Err(j);
        }
        let ljj = d.sqrt();
        l[j][j] = ljj;
        for i in j + 1..p {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = s / ljj;
        }
    }
    let mut z = vec![0.0; p];
    for i in 0..p {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        x[i] = (z[i] - (i + 1..p).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset_str;

    #[test]
    fn recovers_exact_line() {
        let d = load_dataset_str("x,y\n0,1\n1,3\n2,5\n3,7\n4,9", Some("y")).unwrap();
        let m = fit_linear(&d).unwrap();
        assert!((m.coefficient("x").unwrap() - 2.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_target_gives_mean_and_zero_slope() {
        let d = load_dataset_str("x,y\n0,4\n1,4\n5,4", Some("y")).unwrap();
        let m = fit_linear(&d).unwrap();
        assert_eq!(m.coefficient("x"), Some(0.0));
        assert_eq!(m.intercept, 4.0);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let d = load_dataset_str("a,b,y\n1,1,0\n2,2,1\n3,3,5\n4,4,2", Some("y")).unwrap();
        assert!(matches!(fit_linear(&d), Err(ExplainError::Singular(_))));
    }

    #[test]
    fn one_hot_drop_first() {
        let d = load_dataset_str("c,y\na,1\nb,3\nc,10\na,1\nb,3", Some("y")).unwrap();
        let m = fit_linear(&d).unwrap();
        let names: Vec<String> = m.terms.iter().map(Term::name).collect();
        assert_eq!(names, vec!["c=b", "c=c"]);
        assert!((m.intercept - 1.0).abs() < 1e-8);
        assert!((m.coefficient("c=b").unwrap() - 2.0).abs() < 1e-8);
        assert!((m.coefficient("c=c").unwrap() - 9.0).abs() < 1e-8);
    }

    #[test]
    fn named_coefficients() {
        let d = load_dataset_str("x,c,y\n1,a,0\n2,b,0", Some("y")).unwrap();
        let schema = d.features().schema().to_vec();
        let m =
            LinearModel::from_named(1.0, &BTreeMap::from([("x".into(), 2.0), ("c=b".into(), 5.0)]), &schema).unwrap();
        assert_eq!(m.score(&d.features()).unwrap(), vec![3.0, 10.0]);
        let bad = LinearModel::from_named(0.0, &BTreeMap::from([("z".into(), 1.0)]), &schema);
        assert!(matches!(bad, Err(ExplainError::Parameter { .. })));
    }
}
