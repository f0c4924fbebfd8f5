use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde_json::json;

use super::breakdown::attribute_ordering;
use super::{sign_label, SubsetMeans, DEFAULT_BACKGROUND_SIZE};
use crate::error::{ExplainError, Result};
use crate::explainer::{Explainer, Instance};
use crate::explanation::{ColumnValues, Explanation, ResultTable};
use crate::rng;

/// Default number of sampled orderings.
pub const DEFAULT_SHAPLEY_B: usize = 25;

/// Full enumeration is refused above this many variables (8! = 40320 orderings).
pub const FULL_ENUMERATION_MAX_VARIABLES: usize = 8;

#[derive(Debug, Clone)]
pub struct ShapleyOptions {
    pub b: usize,
    pub background_size: usize,
    /// Average over every ordering instead of sampling `b` of them.
    pub full_enumeration: bool,
    pub seed: u64,
}

impl Default for ShapleyOptions {
    fn default() -> Self {
        ShapleyOptions {
            b: DEFAULT_SHAPLEY_B,
            background_size: DEFAULT_BACKGROUND_SIZE,
            full_enumeration: false,
            seed: 0,
        }
    }
}

/// Shapley attribution, reported in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyAttribution {
    pub variables: Vec<String>,
    pub values: Vec<String>,
    /// Mean contribution over orderings.
    pub contributions: Vec<f64>,
    /// Per-variable contribution under each ordering, length = number of orderings.
    pub samples: Vec<Vec<f64>>,
    pub orderings: Vec<Vec<usize>>,
    pub intercept: f64,
    pub prediction: f64,
    pub background_rows: usize,
}

impl ShapleyAttribution {
    pub fn contribution_of(&self, variable: &str) -> Option<f64> {
        self.variables
            .iter()
            .position(|v| v == variable)
            .map(|i| self.contributions[i])
    }

    /// Sample standard deviation of each variable's per-ordering contributions.
    pub fn std_devs(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| {
                if s.len() < 2 {
                    return 0.0;
                }
                let m = crate::stats::mean(s);
                (s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (s.len() - 1) as f64).sqrt()
            })
            .collect()
    }

    pub fn to_explanation(&self, label: &str, options: &ShapleyOptions) -> Explanation {
        let p = self.variables.len();
        let b = self.orderings.len();
        let rows = p * (b + 1);
        let mut names = Vec::with_capacity(rows);
        let mut values = Vec::with_capacity(rows);
        let mut contrib = Vec::with_capacity(rows);
        let mut signs = Vec::with_capacity(rows);
        let mut ordering = Vec::with_capacity(rows);
        for j in 0..p {
            names.push(self.variables[j].clone());
            values.push(self.values[j].clone());
            contrib.push(self.contributions[j]);
            signs.push(sign_label(self.contributions[j]).to_string());
            ordering.push(0);
        }
        for k in 0..b {
            for j in 0..p {
                names.push(self.variables[j].clone());
                values.push(self.values[j].clone());
                contrib.push(self.samples[j][k]);
                signs.push(sign_label(self.samples[j][k]).to_string());
                ordering.push(k as i64 + 1);
            }
        }
        let result = ResultTable::new()
            .with("variable", ColumnValues::Text(names))
            .with("variable_value", ColumnValues::Text(values))
            .with("contribution", ColumnValues::Float(contrib))
            .with("sign", ColumnValues::Text(signs))
            .with("ordering", ColumnValues::Int(ordering));

        let sds = self.std_devs();
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by(|&a, &b| self.contributions[b].abs().total_cmp(&self.contributions[a].abs()));
        let bars: Vec<_> = idx
            .iter()
            .map(|&j| {
                json!({
                    "variable": self.variables[j],
                    "value": self.values[j],
                    "contribution": self.contributions[j],
                    "sd": sds[j],
                    "samples": self.samples[j],
                })
            })
            .collect();
        let chart = json!({
            "type": "shapley",
            "intercept": self.intercept,
            "prediction": self.prediction,
            "bars": bars,
        });
        Explanation::new("shapley", label, result, chart)
            .with_meta("seed", options.seed)
            .with_meta("b", options.b as u64)
            .with_meta("orderings", b as u64)
            .with_meta("full_enumeration", options.full_enumeration)
            .with_meta("background_size", options.background_size as u64)
            .with_meta("background_rows", self.background_rows as u64)
    }
}

/// Every permutation of `0..p` in lexicographic order.
pub(crate) fn all_orderings(p: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..p).collect();
    let mut out = vec![current.clone()];
    loop {
        // next lexicographic permutation
        let Some(i) = (1..p).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..p).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

/// Ordering `index` of the sampled estimator, drawn from its own substream.
pub fn sampled_ordering(seed: u64, index: usize, p: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p).collect();
    let mut rng = rng::substream(seed, &[rng::ORDERINGS, index as u64]);
    order.shuffle(&mut rng);
    order
}

/// Shapley values as the average of break-down attributions over variable orderings.
///
/// All orderings share one background sample. Mean predictions for each
/// distinct set of fixed variables are computed once and reused.
pub fn shapley_values(
    explainer: &Explainer,
    instance: &Instance,
    options: &ShapleyOptions,
) -> Result<ShapleyAttribution> {
    if options.b < 1 {
        return Err(ExplainError::param("b", "must be at least 1"));
    }
    if options.background_size == 0 {
        return Err(ExplainError::param("background_size", "must be at least 1"));
    }
    let p = explainer.features().n_cols();
    let orderings = if options.full_enumeration {
        if p > FULL_ENUMERATION_MAX_VARIABLES {
            return Err(ExplainError::param(
                "full_enumeration",
                format!("only supported for at most {FULL_ENUMERATION_MAX_VARIABLES} variables, got {p}"),
            ));
        }
        all_orderings(p)
    } else {
        (0..options.b).map(|k| sampled_ordering(options.seed, k, p)).collect()
    };

    let means = SubsetMeans::new(explainer, instance, options.background_size, options.seed)?;
    let mut subsets = BTreeSet::new();
    subsets.insert(Vec::new());
    for order in &orderings {
        for k in 1..=p {
            let mut s = order[..k].to_vec();
            s.sort_unstable();
            subsets.insert(s);
        }
    }
    let table = means.means(subsets.into_iter().collect())?;
    let lookup = |fixed: &[usize]| -> Result<f64> {
        let mut key = fixed.to_vec();
        key.sort_unstable();
        Ok(table[&key])
    };
    let intercept = table[&Vec::new()];

    let mut samples = vec![Vec::with_capacity(orderings.len()); p];
    for order in &orderings {
        let a = attribute_ordering(explainer, instance, &means, intercept, order.clone(), &lookup)?;
        for (pos, &j) in a.order.iter().enumerate() {
            samples[j].push(a.contributions[pos]);
        }
    }
    let count = orderings.len() as f64;
    let contributions = samples.iter().map(|s| s.iter().sum::<f64>() / count).collect();
    let schema = explainer.features().schema();
    Ok(ShapleyAttribution {
        variables: schema.iter().map(|s| s.name.clone()).collect(),
        values: (0..p).map(|j| schema[j].render(instance.get(j))).collect(),
        contributions,
        samples,
        orderings,
        intercept,
        prediction: means.prediction(),
        background_rows: means.background_rows(),
    })
}
