//! CART regression trees grown by greedy variance reduction.
//!
//! Used both for surrogate trees (target = black-box predictions) and for the
//! built-in tree predictor (target = observed outcome).
//!
//! Split search visits variables in column order and candidate splits in
//! ascending threshold order, replacing the incumbent only on strictly larger
//! gain; ties therefore resolve to the lowest variable index and then the
//! smallest threshold.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::data::{ColumnData, Table, Value};
use crate::error::{ExplainError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Rows with `value <= threshold` go left.
    Threshold(f64),
    /// Rows whose level is listed (sorted) go left.
    Levels(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        variable: String,
        rule: SplitRule,
        /// Mean target in this node.
        value: f64,
        n: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn n(&self) -> usize {
        match self {
            TreeNode::Leaf { n, .. } | TreeNode::Split { n, .. } => *n,
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } | TreeNode::Split { value, .. } => *value,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Index (in left-to-right order) of the leaf each row lands in.
    pub fn leaf_indices(&self, table: &Table) -> Result<Vec<usize>> {
        (0..table.n_rows())
            .map(|r| self.route(table, r).map(|(idx, _)| idx))
            .collect()
    }

    pub fn predict(&self, table: &Table) -> Result<Vec<f64>> {
        (0..table.n_rows())
            .map(|r| self.route(table, r).map(|(_, v)| v))
            .collect()
    }

    fn route(&self, table: &Table, row: usize) -> Result<(usize, f64)> {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return Ok((offset, *value)),
                TreeNode::Split {
                    variable,
                    rule,
                    left,
                    right,
                    ..
                } => {
                    let col = table.column_index(variable).ok_or_else(|| {
                        ExplainError::Schema(format!("tree variable '{variable}' missing from input"))
                    })?;
                    let goes_left = match (rule, table.get(row, col)) {
                        (SplitRule::Threshold(t), Value::Num(x)) => x <= *t,
                        (SplitRule::Levels(levels), Value::Level(l)) => {
                            let name = &table.schema()[col].levels[l as usize];
                            levels.binary_search(name).is_ok()
                        }
                        _ => {
                            return Err(ExplainError::Schema(format!(
                                "tree variable '{variable}' has the wrong kind"
                            )))
                        }
                    };
                    if goes_left {
                        node = left;
                    } else {
                        offset += left.n_leaves();
                        node = right;
                    }
                }
            }
        }
    }

    /// Nested record for rendering: splits carry `variable`, `threshold` or
    /// `levels`, `left`, `right`; leaves carry `leaf_value` and `n`.
    pub fn to_json(&self) -> Json {
        match self {
            TreeNode::Leaf { value, n } => json!({"leaf_value": value, "n": n}),
            TreeNode::Split {
                variable,
                rule,
                value,
                n,
                left,
                right,
            } => {
                let mut node = json!({
                    "variable": variable,
                    "n": n,
                    "value": value,
                    "left": left.to_json(),
                    "right": right.to_json(),
                });
                match rule {
                    SplitRule::Threshold(t) => node["threshold"] = json!(t),
                    SplitRule::Levels(l) => node["levels"] = json!(l),
                }
                node
            }
        }
    }
}

/// Mean that is exact when every value is identical.
fn node_value(y: &[f64], rows: &[usize]) -> f64 {
    let first = y[rows[0]];
    if rows.iter().all(|&r| y[r] == first) {
        return first;
    }
    rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64
}

struct Candidate {
    gain: f64,
    variable: usize,
    rule: SplitRule,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

fn best_split(x: &Table, y: &[f64], rows: &[usize], min_leaf: usize) -> Option<Candidate> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let base = total * total / n as f64;
    let mut best: Option<Candidate> = None;
    let mut consider = |gain: f64, variable: usize, make: &dyn Fn() -> (SplitRule, Vec<usize>, Vec<usize>)| {
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            let (rule, left, right) = make();
            best = Some(Candidate {
                gain,
                variable,
                rule,
                left,
                right,
            });
        }
    };

    for col in 0..x.n_cols() {
        match x.column(col) {
            ColumnData::Numeric(v) => {
                let mut sorted = rows.to_vec();
                sorted.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
                let mut left_sum = 0.0;
                for k in 1..n {
                    left_sum += y[sorted[k - 1]];
                    if k < min_leaf || n - k < min_leaf {
                        continue;
                    }
                    let (lo, hi) = (v[sorted[k - 1]], v[sorted[k]]);
                    if lo >= hi {
                        continue;
                    }
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64 - base;
                    let t = midpoint(lo, hi);
                    consider(gain, col, &|| {
                        let (l, r) = rows.iter().copied().partition(|&i| v[i] <= t);
                        (SplitRule::Threshold(t), l, r)
                    });
                }
            }
            ColumnData::Categorical(v) => {
                let n_levels = x.schema()[col].levels.len();
                let mut sums = vec![0.0; n_levels];
                let mut counts = vec![0usize; n_levels];
                for &r in rows {
                    sums[v[r] as usize] += y[r];
                    counts[v[r] as usize] += 1;
                }
                let mut present: Vec<usize> = (0..n_levels).filter(|&l| counts[l] > 0).collect();
                present.sort_by(|&a, &b| (sums[a] / counts[a] as f64).total_cmp(&(sums[b] / counts[b] as f64)));
                let mut left_sum = 0.0;
                let mut left_n = 0;
                for m in 1..present.len() {
                    left_sum += sums[present[m - 1]];
                    left_n += counts[present[m - 1]];
                    if left_n < min_leaf || n - left_n < min_leaf {
                        continue;
                    }
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / (n - left_n) as f64 - base;
                    let chosen = &present[..m];
                    consider(gain, col, &|| {
                        let mut in_left = vec![false; n_levels];
                        chosen.iter().for_each(|&l| in_left[l] = true);
                        let (l, r) = rows.iter().copied().partition(|&i| in_left[v[i] as usize]);
                        let levels = &x.schema()[col].levels;
                        let names = (0..n_levels)
                            .filter(|&l| in_left[l])
                            .map(|l| levels[l].clone())
                            .collect();
                        (SplitRule::Levels(names), l, r)
                    });
                }
            }
        }
    }
    best
}

fn grow(x: &Table, y: &[f64], rows: Vec<usize>, depth: usize, params: CartParams) -> TreeNode {
    let value = node_value(y, &rows);
    let n = rows.len();
    let pure = rows.iter().all(|&r| y[r] == y[rows[0]]);
    if pure || depth >= params.max_depth {
        return TreeNode::Leaf { value, n };
    }
    // any admissible split reduces (or keeps) the within-node sum of squares
    match best_split(x, y, &rows, params.min_leaf) {
        None => TreeNode::Leaf { value, n },
        Some(c) => TreeNode::Split {
            variable: x.schema()[c.variable].name.clone(),
            rule: c.rule,
            value,
            n,
            left: Box::new(grow(x, y, c.left, depth + 1, params)),
            right: Box::new(grow(x, y, c.right, depth + 1, params)),
        },
    }
}

/// Fits a regression tree to `(x, y)`.
pub fn fit(x: &Table, y: &[f64], params: CartParams) -> Result<TreeNode> {
    if params.max_depth < 1 {
        return Err(ExplainError::param("max_depth", "must be at least 1"));
    }
    if params.min_leaf < 1 {
        return Err(ExplainError::param("min_leaf", "must be at least 1"));
    }
    if y.len() != x.n_rows() {
        return Err(ExplainError::Schema("target length differs from row count".into()));
    }
    if x.n_rows() < 2 * params.min_leaf {
        return Err(ExplainError::param(
            "min_leaf",
            format!("{} rows cannot fill two leaves of {}", x.n_rows(), params.min_leaf),
        ));
    }
    Ok(grow(x, y, (0..x.n_rows()).collect(), 0, params))
}

/// R² of `fitted` against `reference`; 1 when the reference is constant and matched exactly.
pub fn fidelity(reference: &[f64], fitted: &[f64]) -> f64 {
    let sse: f64 = reference.iter().zip(fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    if sse == 0.0 {
        return 1.0;
    }
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let sst: f64 = reference.iter().map(|a| (a - mean) * (a - mean)).sum();
    if sst == 0.0 {
        return 0.0;
    }
    1.0 - sse / sst
}
