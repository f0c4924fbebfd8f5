use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, ColumnKind, ColumnSchema, Table};
use crate::error::{ExplainError, Result};

/// One column of a design matrix: a numeric column, or the indicator of one
/// level of a categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

impl Term {
    /// `column` for numeric terms, `column=level` for indicators.
    pub fn name(&self) -> String {
        match &self.level {
            None => self.column.clone(),
            Some(l) => format!("{}={l}", self.column),
        }
    }
}

/// Drop-first encoding: numeric columns pass through, categorical columns
/// contribute one indicator per level except the first.
pub fn encode_terms(schema: &[ColumnSchema]) -> Vec<Term> {
    schema
        .iter()
        .flat_map(|s| match s.kind {
            ColumnKind::Numeric => vec![Term {
                column: s.name.clone(),
                level: None,
            }],
            ColumnKind::Categorical => s
                .levels
                .iter()
                .skip(1)
                .map(|l| Term {
                    column: s.name.clone(),
                    level: Some(l.clone()),
                })
                .collect(),
        })
        .collect()
}

/// Evaluates every term over the rows of `table`, resolving columns and
/// levels by name. Returns one vector per term.
pub fn term_columns(terms: &[Term], table: &Table) -> Result<Vec<Vec<f64>>> {
    terms
        .iter()
        .map(|t| {
            let (schema, data) = table
                .column_by_name(&t.column)
                .ok_or_else(|| ExplainError::Schema(format!("model column '{}' missing from input", t.column)))?;
            match (&t.level, data) {
                (None, ColumnData::Numeric(v)) => Ok(v.clone()),
                (Some(level), ColumnData::Categorical(codes)) => {
                    // A level absent from this table's schema never matches.
                    let code = schema.level_index(level);
                    Ok(codes.iter().map(|c| f64::from(Some(*c) == code)).collect())
                }
                _ => Err(ExplainError::Schema(format!(
                    "model column '{}' has the wrong kind",
                    t.column
                ))),
            }
        })
        .collect()
}

/// `intercept + Σ coef·x` per row, accumulated in term order.
pub fn linear_predictor(intercept: f64, coefficients: &[f64], columns: &[Vec<f64>], n: usize) -> Vec<f64> {
    (0..n)
        .map(|r| {
            let mut s = intercept;
            for (b, x) in coefficients.iter().zip(columns) {
                s += b * x[r];
            }
            s
        })
        .collect()
}
