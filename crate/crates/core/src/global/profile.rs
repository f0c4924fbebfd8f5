use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{ColumnData, Value};
use crate::error::{ExplainError, Result};
use crate::explainer::Explainer;
use crate::explanation::{ColumnValues, Explanation, ResultTable};
use crate::grid::{grid_for_column, numeric_grid, GridSpacing, DEFAULT_GRID_SIZE};
use crate::local::ceteris::{json_value, spacing_name, sweep};
use crate::rng;

pub const DEFAULT_PROFILE_SAMPLE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    #[default]
    Pdp,
    Ale,
    Ice,
}

impl ProfileKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProfileKind::Pdp => "pdp",
            ProfileKind::Ale => "ale",
            ProfileKind::Ice => "ice",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProfileOptions {
    pub kind: ProfileKind,
    pub variables: Option<Vec<String>>,
    pub grid_size: usize,
    pub sample_size: usize,
    pub center_ice: bool,
    pub spacing: GridSpacing,
    pub seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            kind: ProfileKind::Pdp,
            variables: None,
            grid_size: DEFAULT_GRID_SIZE,
            sample_size: DEFAULT_PROFILE_SAMPLE,
            center_ice: true,
            spacing: GridSpacing::Quantile,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    pub variable: String,
    pub column: usize,
    pub grid: Vec<Value>,
    /// PDP or ALE value per grid point.
    pub values: Vec<f64>,
    /// ALE only: rows in the bin ending at each grid point (0 for the first).
    pub bin_counts: Vec<usize>,
    /// ICE only: one curve per sampled row, in sample order.
    pub curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedProfile {
    pub kind: ProfileKind,
    /// Dataset row indices of the sampled rows.
    pub rows: Vec<usize>,
    pub centered: bool,
    pub series: Vec<ProfileSeries>,
}

impl AggregatedProfile {
    pub fn series(&self, variable: &str) -> Option<&ProfileSeries> {
        self.series.iter().find(|s| s.variable == variable)
    }

    pub fn to_explanation(&self, label: &str, explainer: &Explainer, options: &ProfileOptions) -> Explanation {
        let schema = explainer.features().schema();
        let mut vname = Vec::new();
        let mut row_id = Vec::new();
        let mut x = Vec::new();
        let mut yhat = Vec::new();
        let mut count = Vec::new();
        let mut series = Vec::new();
        let mut curves = Vec::new();
        for s in &self.series {
            let col = &schema[s.column];
            let xs: Vec<_> = s.grid.iter().map(|g| json_value(col, *g)).collect();
            if self.kind == ProfileKind::Ice {
                for (i, curve) in s.curves.iter().enumerate() {
                    for (g, y) in s.grid.iter().zip(curve) {
                        vname.push(s.variable.clone());
                        row_id.push(self.rows[i] as i64);
                        x.push(col.render(*g));
                        yhat.push(*y);
                    }
                    curves.push(json!({"variable": s.variable, "row_id": self.rows[i], "y": curve}));
                }
            } else {
                for (k, (g, y)) in s.grid.iter().zip(&s.values).enumerate() {
                    vname.push(s.variable.clone());
                    x.push(col.render(*g));
                    yhat.push(*y);
                    count.push(if self.kind == ProfileKind::Ale {
                        s.bin_counts[k] as i64
                    } else {
                        self.rows.len() as i64
                    });
                }
            }
            series.push(json!({"variable": s.variable, "kind": col.kind, "x": xs, "y": s.values}));
        }
        let result = if self.kind == ProfileKind::Ice {
            ResultTable::new()
                .with("variable", ColumnValues::Text(vname))
                .with("row_id", ColumnValues::Int(row_id))
                .with("x", ColumnValues::Text(x))
                .with("yhat", ColumnValues::Float(yhat))
        } else {
            ResultTable::new()
                .with("variable", ColumnValues::Text(vname))
                .with("x", ColumnValues::Text(x))
                .with("yhat", ColumnValues::Float(yhat))
                .with("count", ColumnValues::Int(count))
        };
        let mut chart = json!({
            "type": "profile",
            "profile_kind": self.kind.as_str(),
            "series": series,
        });
        if self.kind == ProfileKind::Ice {
            chart["curves"] = json!(curves);
            chart["centered"] = json!(self.centered);
        }
        let names: Vec<&str> = self.series.iter().map(|s| s.variable.as_str()).collect();
        Explanation::new("profile", label, result, chart)
            .with_meta("seed", options.seed)
            .with_meta("profile_kind", self.kind.as_str())
            .with_meta("grid_size", options.grid_size as u64)
            .with_meta("grid_spacing", spacing_name(options.spacing))
            .with_meta("sample_size", options.sample_size as u64)
            .with_meta("sample_rows", self.rows.len() as u64)
            .with_meta("center_ice", options.center_ice)
            .with_meta("variables", json!(names))
    }
}

/// Partial dependence, accumulated local effects, or individual conditional
/// expectation curves over a seeded row sample.
pub fn model_profile(explainer: &Explainer, options: &ProfileOptions) -> Result<AggregatedProfile> {
    if options.sample_size == 0 {
        return Err(ExplainError::param("sample_size", "must be at least 1"));
    }
    let features = explainer.features();
    let columns = match (&options.variables, options.kind) {
        (None, ProfileKind::Ale) => (0..features.n_cols())
            .filter(|&c| features.schema()[c].is_numeric())
            .collect(),
        (v, _) => explainer.resolve_variables(v.as_deref())?,
    };
    if options.kind == ProfileKind::Ale {
        if let Some(&c) = columns.iter().find(|&&c| !features.schema()[c].is_numeric()) {
            return Err(ExplainError::param(
                "variables",
                format!(
                    "ALE requires numeric variables; '{}' is categorical",
                    features.schema()[c].name
                ),
            ));
        }
    }
    let rows = rng::sample_rows(
        options.seed,
        rng::PROFILE_SAMPLE,
        features.n_rows(),
        options.sample_size,
    );
    let series: Vec<Result<ProfileSeries>> = columns
        .par_iter()
        .map(|&col| match options.kind {
            ProfileKind::Ale => ale_series(explainer, &rows, col, options),
            _ => cp_aggregate(explainer, &rows, col, options),
        })
        .collect();
    Ok(AggregatedProfile {
        kind: options.kind,
        rows,
        centered: options.kind == ProfileKind::Ice && options.center_ice,
        series: series.into_iter().collect::<Result<_>>()?,
    })
}

fn cp_aggregate(explainer: &Explainer, rows: &[usize], col: usize, options: &ProfileOptions) -> Result<ProfileSeries> {
    let features = explainer.features();
    let name = &features.schema()[col].name;
    let grid = grid_for_column(features, name, options.grid_size, options.spacing)?;
    let sample = features.take_rows(rows);
    let k = rows.len();
    let scores = explainer.score_checked(&sweep(&sample, col, &grid))?;

    // scores are grid-major: block g holds every sampled row at grid point g
    let mut curves: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..grid.len()).map(|g| scores[g * k + i]).collect())
        .collect();
    let values: Vec<f64> = (0..grid.len())
        .map(|g| curves.iter().map(|c| c[g]).sum::<f64>() / k as f64)
        .collect();
    if options.kind == ProfileKind::Ice {
        if options.center_ice {
            for c in &mut curves {
                let anchor = c[0];
                c.iter_mut().for_each(|v| *v -= anchor);
            }
        }
    } else {
        curves.clear();
    }
    Ok(ProfileSeries {
        variable: name.clone(),
        column: col,
        grid,
        values,
        bin_counts: Vec::new(),
        curves,
    })
}

/// Bin edges from sample quantiles, with empty bins merged into their left neighbour.
///
/// Returns the edges and, for each bin, the indices of its rows.
pub(crate) fn ale_bins(values: &[f64], grid_size: usize) -> Result<(Vec<f64>, Vec<Vec<usize>>)> {
    let mut edges = numeric_grid(values, grid_size, GridSpacing::Quantile)?;
    loop {
        if edges.len() < 2 {
            return Ok((edges, Vec::new()));
        }
        let n_bins = edges.len() - 1;
        let mut bins = vec![Vec::new(); n_bins];
        for (i, &v) in values.iter().enumerate() {
            // first bin is closed on the left; others are (lower, upper]
            let b = edges[1..].partition_point(|&e| e < v).min(n_bins - 1);
            bins[b].push(i);
        }
        match bins.iter().position(Vec::is_empty) {
            // the first bin always holds the minimum, so an empty bin has a left neighbour
            Some(b) => {
                edges.remove(b);
            }
            None => return Ok((edges, bins)),
        }
    }
}

fn ale_series(explainer: &Explainer, rows: &[usize], col: usize, options: &ProfileOptions) -> Result<ProfileSeries> {
    let features = explainer.features();
    let name = features.schema()[col].name.clone();
    let sample = features.take_rows(rows);
    let values = sample.numeric(col).expect("numeric column").to_vec();
    let (edges, bins) = ale_bins(&values, options.grid_size)?;
    if bins.is_empty() {
        return Ok(ProfileSeries {
            variable: name,
            column: col,
            grid: edges.iter().map(|e| Value::Num(*e)).collect(),
            values: vec![0.0; edges.len()],
            bin_counts: vec![values.len(); edges.len()],
            curves: Vec::new(),
        });
    }
    let mut bin_of = vec![0usize; values.len()];
    for (b, members) in bins.iter().enumerate() {
        for &i in members {
            bin_of[i] = b;
        }
    }
    let mut lower = sample.clone();
    let mut upper = sample;
    lower.replace_column(col, ColumnData::Numeric(bin_of.iter().map(|&b| edges[b]).collect()));
    upper.replace_column(col, ColumnData::Numeric(bin_of.iter().map(|&b| edges[b + 1]).collect()));
    let f_lower = explainer.score_checked(&lower)?;
    let f_upper = explainer.score_checked(&upper)?;

    let mut accumulated = Vec::with_capacity(edges.len());
    accumulated.push(0.0);
    let mut running = 0.0;
    for members in &bins {
        let effect = members.iter().map(|&i| f_upper[i] - f_lower[i]).sum::<f64>() / members.len() as f64;
        running += effect;
        accumulated.push(running);
    }
    let centre = ale_weighted_mean(&accumulated, &bins.iter().map(Vec::len).collect::<Vec<_>>());
    let centred = accumulated.iter().map(|a| a - centre).collect();
    let mut counts = vec![0];
    counts.extend(bins.iter().map(Vec::len));
    Ok(ProfileSeries {
        variable: name,
        column: col,
        grid: edges.into_iter().map(Value::Num).collect(),
        values: centred,
        bin_counts: counts,
        curves: Vec::new(),
    })
}

/// Sample-weighted mean of an accumulated curve: each bin contributes the
/// midpoint of its two edge values, weighted by its row count.
pub fn ale_weighted_mean(curve: &[f64], bin_counts: &[usize]) -> f64 {
    let total: usize = bin_counts.iter().sum();
    bin_counts
        .iter()
        .enumerate()
        .map(|(b, &n)| n as f64 * (curve[b] + curve[b + 1]) / 2.0)
        .sum::<f64>()
        / total as f64
}
