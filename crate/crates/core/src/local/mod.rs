//! Explanations of a single prediction.

mod breakdown;
pub(crate) mod ceteris;
mod shapley;

pub use breakdown::{break_down, Attribution, BreakDownOptions};
pub use ceteris::{ceteris_paribus, CeterisParibus, CeterisParibusOptions, VariableProfile};
pub use shapley::{
    shapley_values, ShapleyAttribution, ShapleyOptions, DEFAULT_SHAPLEY_B, FULL_ENUMERATION_MAX_VARIABLES,
};

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::Table;
use crate::error::Result;
use crate::explainer::{Explainer, Instance};
use crate::rng;
use crate::stats;

/// Default number of background rows.
pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

/// Mean predictions over a background sample with some variables pinned to
/// the instance's values.
///
/// Shared by break-down and Shapley so that both routes evaluate identical
/// subsets identically.
pub(crate) struct SubsetMeans<'a> {
    explainer: &'a Explainer,
    background: Table,
    instance: &'a Instance,
    prediction: f64,
}

impl<'a> SubsetMeans<'a> {
    pub(crate) fn new(
        explainer: &'a Explainer,
        instance: &'a Instance,
        background_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let rows = rng::sample_rows(seed, rng::BACKGROUND, explainer.features().n_rows(), background_size);
        let background = explainer.features().take_rows(&rows);
        let prediction = explainer.predict_instance(instance)?;
        Ok(SubsetMeans {
            explainer,
            background,
            instance,
            prediction,
        })
    }

    pub(crate) fn n_variables(&self) -> usize {
        self.background.n_cols()
    }

    pub(crate) fn background_rows(&self) -> usize {
        self.background.n_rows()
    }

    pub(crate) fn prediction(&self) -> f64 {
        self.prediction
    }

    /// Mean prediction with the variables in `fixed` set to the instance.
    ///
    /// With every variable fixed all rows equal the instance, so the exact
    /// instance prediction is returned.
    pub(crate) fn mean(&self, fixed: &[usize]) -> Result<f64> {
        if fixed.len() == self.n_variables() {
            return Ok(self.prediction);
        }
        let mut t = self.background.clone();
        for &j in fixed {
            t.fill_column(j, self.instance.get(j));
        }
        Ok(stats::mean(&self.explainer.score_checked(&t)?))
    }

    /// Evaluates many subsets in parallel; keys are sorted variable lists.
    pub(crate) fn means(&self, subsets: Vec<Vec<usize>>) -> Result<BTreeMap<Vec<usize>, f64>> {
        let values: Vec<Result<f64>> = subsets.par_iter().map(|s| self.mean(s)).collect();
        subsets
            .into_iter()
            .zip(values)
            .map(|(k, v)| v.map(|v| (k, v)))
            .collect()
    }
}

pub(crate) fn sign_label(x: f64) -> &'static str {
    if x > 0.0 {
        "+"
    } else if x < 0.0 {
        "-"
    } else {
        "0"
    }
}
