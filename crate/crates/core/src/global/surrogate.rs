use serde_json::json;

use crate::cart::{self, CartParams, SplitRule, TreeNode};
use crate::error::Result;
use crate::explainer::Explainer;
use crate::explanation::{ColumnValues, Explanation, ResultTable};

pub const DEFAULT_MAX_DEPTH: usize = 3;
pub const DEFAULT_MIN_LEAF: usize = 5;

/// A shallow tree that mimics the black box's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateTree {
    pub root: TreeNode,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// R² of the tree's output against the black-box output on the training rows.
    pub fidelity: f64,
}

impl SurrogateTree {
    pub fn to_explanation(&self, label: &str) -> Explanation {
        let mut node_id = Vec::new();
        let mut parent = Vec::new();
        let mut depth = Vec::new();
        let mut variable = Vec::new();
        let mut rule = Vec::new();
        let mut threshold = Vec::new();
        let mut n = Vec::new();
        let mut value = Vec::new();
        let mut leaf = Vec::new();
        let mut stack = vec![(&self.root, -1i64, 0i64)];
        while let Some((node, par, d)) = stack.pop() {
            let id = node_id.len() as i64;
            node_id.push(id);
            parent.push(par);
            depth.push(d);
            n.push(node.n() as i64);
            value.push(node.value());
            match node {
                TreeNode::Leaf { .. } => {
                    variable.push(String::new());
                    rule.push(String::new());
                    threshold.push(None);
                    leaf.push(1);
                }
                TreeNode::Split {
                    variable: v,
                    rule: r,
                    left,
                    right,
                    ..
                } => {
                    variable.push(v.clone());
                    match r {
                        SplitRule::Threshold(t) => {
                            rule.push(format!("{v} <= {t}"));
                            threshold.push(Some(*t));
                        }
                        SplitRule::Levels(l) => {
                            rule.push(format!("{v} in {{{}}}", l.join(", ")));
                            threshold.push(None);
                        }
                    }
                    leaf.push(0);
                    stack.push((right, id, d + 1));
                    stack.push((left, id, d + 1));
                }
            }
        }
        let result = ResultTable::new()
            .with("node_id", ColumnValues::Int(node_id))
            .with("parent", ColumnValues::Int(parent))
            .with("depth", ColumnValues::Int(depth))
            .with("variable", ColumnValues::Text(variable))
            .with("rule", ColumnValues::Text(rule))
            .with("threshold", ColumnValues::MaybeFloat(threshold))
            .with("n", ColumnValues::Int(n))
            .with("value", ColumnValues::Float(value))
            .with("leaf", ColumnValues::Int(leaf));
        let chart = json!({
            "type": "tree",
            "max_depth": self.max_depth,
            "fidelity": self.fidelity,
            "root": self.root.to_json(),
        });
        Explanation::new("surrogate", label, result, chart)
            .with_meta("max_depth", self.max_depth as u64)
            .with_meta("min_leaf", self.min_leaf as u64)
            .with_meta("fidelity", self.fidelity)
    }
}

/// Fits a CART tree to the black box's own predictions and reports fidelity.
pub fn fit_surrogate_tree(explainer: &Explainer, max_depth: usize, min_leaf: usize) -> Result<SurrogateTree> {
    let target = explainer.predictions()?;
    let params = CartParams { max_depth, min_leaf };
    let root = cart::fit(explainer.features(), target, params)?;
    let fitted = root.predict(explainer.features())?;
    Ok(SurrogateTree {
        fidelity: cart::fidelity(target, &fitted),
        root,
        max_depth,
        min_leaf,
    })
}
