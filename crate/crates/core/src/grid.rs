use crate::data::{ColumnData, Dataset, Table, Value};
use crate::error::{ExplainError, Result};
use crate::stats;

/// Default number of grid points for profiles.
pub const DEFAULT_GRID_SIZE: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridSpacing {
    /// Empirical quantiles at equally spaced probabilities.
    #[default]
    Quantile,
    /// Equally spaced between the column minimum and maximum.
    Uniform,
}

/// Grid of values for sweeping one variable.
///
/// Numeric columns yield ascending, duplicate-free points; categorical
/// columns yield every level in schema order.
pub fn grid_for_variable(data: &Dataset, variable: &str, grid_size: usize) -> Result<Vec<Value>> {
    grid_for_column(data.table(), variable, grid_size, GridSpacing::Quantile)
}

pub fn grid_for_column(table: &Table, variable: &str, grid_size: usize, spacing: GridSpacing) -> Result<Vec<Value>> {
    let (schema, column) = table
        .column_by_name(variable)
        .ok_or_else(|| ExplainError::Schema(format!("unknown variable '{variable}'")))?;
    match column {
        ColumnData::Categorical(_) => Ok((0..schema.levels.len() as u32).map(Value::Level).collect()),
        ColumnData::Numeric(values) => Ok(numeric_grid(values, grid_size, spacing)?
            .into_iter()
            .map(Value::Num)
            .collect()),
    }
}

pub(crate) fn numeric_grid(values: &[f64], grid_size: usize, spacing: GridSpacing) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(ExplainError::param(
            "grid_size",
            "must be at least 2 for numeric variables",
        ));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let sorted = stats::sorted(values);
    let last = (grid_size - 1) as f64;
    let mut grid: Vec<f64> = match spacing {
        GridSpacing::Quantile => (0..grid_size)
            .map(|i| stats::quantile_sorted(&sorted, i as f64 / last))
            .collect(),
        GridSpacing::Uniform => {
            let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
            (0..grid_size)
                .map(|i| {
                    if i + 1 == grid_size {
                        hi
                    } else {
                        lo + (hi - lo) * (i as f64 / last)
                    }
                })
                .collect()
        }
    };
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| a.to_bits() == b.to_bits() || a == b);
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset_str;
    use proptest::prelude::*;

    #[test]
    fn one_to_hundred_five_points() {
        let csv: String = std::iter::once("v".to_string())
            .chain((1..=100).map(|i| i.to_string()))
            .collect::<Vec<_>>()
            .join("\n");
        let ds = load_dataset_str(&csv, None).unwrap();
        let g = grid_for_variable(&ds, "v", 5).unwrap();
        // independent: position h = 99 p on 1..=100, value 1 + h
        let expected: Vec<Value> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|p| Value::Num(1.0 + 99.0 * p))
            .collect();
        assert_eq!(g, expected);
    }

    #[test]
    fn constant_column_collapses() {
        let ds = load_dataset_str("v\n3\n3\n3", None).unwrap();
        assert_eq!(grid_for_variable(&ds, "v", 51).unwrap(), vec![Value::Num(3.0)]);
    }

    #[test]
    fn categorical_levels_in_order() {
        let ds = load_dataset_str("c\nred\nblue\nred", None).unwrap();
        assert_eq!(
            grid_for_variable(&ds, "c", 51).unwrap(),
            vec![Value::Level(0), Value::Level(1)]
        );
        assert_eq!(ds.table().schema()[0].levels, vec!["blue", "red"]);
    }

    #[test]
    fn small_grid_rejected() {
        let ds = load_dataset_str("v\n1\n2", None).unwrap();
        assert!(matches!(
            grid_for_variable(&ds, "v", 1),
            Err(ExplainError::Parameter { .. })
        ));
    }

    #[test]
    fn uniform_spacing_hits_extremes() {
        let g = numeric_grid(&[0.0, 10.0, 3.0], 6, GridSpacing::Uniform).unwrap();
        assert_eq!(g, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    }

    proptest! {
        #[test]
        fn grid_sorted_unique_and_permutation_invariant(
            mut values in prop::collection::vec(-1e3f64..1e3, 1..60),
            size in 2usize..40,
            seed in any::<u64>(),
        ) {
            let g = numeric_grid(&values, size, GridSpacing::Quantile).unwrap();
            prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
            use rand::seq::SliceRandom;
            let mut rng = crate::rng::substream(seed, &[]);
            values.shuffle(&mut rng);
            prop_assert_eq!(g, numeric_grid(&values, size, GridSpacing::Quantile).unwrap());
        }
    }
}
