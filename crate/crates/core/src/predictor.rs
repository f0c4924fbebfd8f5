use std::fmt;

use crate::data::Table;
use crate::error::Result;

/// The black-box contract: one real-valued score per input row.
///
/// Implementations must be pure (identical rows give identical scores) and
/// safe to call from several threads at once. Predictors that cannot run
/// concurrently serialize internally, as [`ExternalPredictor`] does.
///
/// [`ExternalPredictor`]: crate::models::ExternalPredictor
pub trait Predictor: Send + Sync {
    fn score(&self, rows: &Table) -> Result<Vec<f64>>;
}

/// Adapts a closure into a [`Predictor`].
pub struct FnPredictor<F>(pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&Table) -> Vec<f64> + Send + Sync,
{
    fn score(&self, rows: &Table) -> Result<Vec<f64>> {
        Ok((self.0)(rows))
    }
}

impl<F> fmt::Debug for FnPredictor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnPredictor")
    }
}

/// Builds a predictor from a function of the numeric values of one row.
///
/// Categorical cells are passed as their level index. Handy in tests.
pub fn row_fn<F>(f: F) -> FnPredictor<impl Fn(&Table) -> Vec<f64> + Send + Sync>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    FnPredictor(move |t: &Table| {
        let mut buf = vec![0.0; t.n_cols()];
        (0..t.n_rows())
            .map(|r| {
                for (c, slot) in buf.iter_mut().enumerate() {
                    *slot = match t.get(r, c) {
                        crate::data::Value::Num(x) => x,
                        crate::data::Value::Level(l) => l as f64,
                    };
                }
                f(&buf)
            })
            .collect()
    })
}
