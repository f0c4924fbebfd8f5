use crate::cart::{self, CartParams, TreeNode};
use crate::data::{Dataset, Table};
use crate::error::Result;
use crate::predictor::Predictor;

/// A regression tree fitted to the observed target.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub root: TreeNode,
}

impl Predictor for TreeModel {
    fn score(&self, rows: &Table) -> Result<Vec<f64>> {
        self.root.predict(rows)
    }
}

pub fn fit_tree(data: &Dataset, max_depth: usize, min_leaf: usize) -> Result<TreeModel> {
    let y = data.target_values()?;
    let root = cart::fit(&data.features(), y, CartParams { max_depth, min_leaf })?;
    Ok(TreeModel { root })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset_str;

    const XOR: &str = "a,b,y\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n0,0,0\n0,1,1\n1,0,1\n1,1,0";

    fn accuracy(m: &TreeModel, d: &Dataset) -> f64 {
        let p = m.score(&d.features()).unwrap();
        let y = d.target_values().unwrap();
        let hits = p.iter().zip(y).filter(|(p, y)| (**p >= 0.5) == (**y == 1.0)).count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn xor_needs_depth_two() {
        let d = load_dataset_str(XOR, Some("y")).unwrap();
        assert_eq!(accuracy(&fit_tree(&d, 2, 1).unwrap(), &d), 1.0);
        assert!(accuracy(&fit_tree(&d, 1, 1).unwrap(), &d) <= 0.75);
    }

    #[test]
    fn one_row_per_leaf_fits_exactly() {
        let d = load_dataset_str("x,y\n1,5\n2,-1\n3,7\n4,2", Some("y")).unwrap();
        let m = fit_tree(&d, 4, 1).unwrap();
        assert_eq!(m.score(&d.features()).unwrap(), d.target_values().unwrap());
    }
}
