//! Tree and boosting machinery shared by the model families.
//!
//! - [`fit_regression_tree`]: exact-greedy second-order regression trees.
//! - [`fit_survival_tree`]: log-rank survival trees whose leaves list their member rows.
//! - [`boost`]: the boosting loop over any [`Loss`](crate::losses::Loss).

mod boost;
mod regression;
mod survival;

pub use boost::{boost, predict_ensemble, BoostParams, BoostedEnsemble, Objective};
pub use regression::{fit_regression_tree, fit_regression_tree_rows, RegressionTree, TreeParams};
pub use survival::{fit_survival_tree, log_rank_statistic, SurvivalTree, SurvivalTreeParams};

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Deepest tree the engine grows. Keeps nested JSON model files within parser recursion limits.
pub const MAX_TREE_DEPTH: usize = 100;

/// Binary tree node. Rows go left iff `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "snake_case",
    bound(serialize = "T: Scalar, L: Serialize", deserialize = "T: Scalar, L: Deserialize<'de>")
)]
pub enum TreeNode<T, L> {
    Split {
        feature: usize,
        threshold: T,
        /// Improvement of the split criterion when the split was chosen.
        gain: T,
        left: Box<TreeNode<T, L>>,
        right: Box<TreeNode<T, L>>,
    },
    Leaf {
        value: L,
    },
}

impl<T: Scalar, L> TreeNode<T, L> {
    pub fn leaf(value: L) -> Self {
        TreeNode::Leaf { value }
    }

    /// Leaf payload reached by `row`.
    pub fn route(&self, row: ArrayView1<'_, T>) -> &L {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaf payloads, left to right.
    pub fn leaves(&self) -> Vec<&L> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a L>) {
        match self {
            TreeNode::Leaf { value } => out.push(value),
            TreeNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Same shape with every leaf payload mapped through `f`.
    pub fn map_leaves<M>(self, f: &mut impl FnMut(L) -> M) -> TreeNode<T, M> {
        match self {
            TreeNode::Leaf { value } => TreeNode::Leaf { value: f(value) },
            TreeNode::Split {
                feature,
                threshold,
                gain,
                left,
                right,
            } => {
                let left = Box::new(left.map_leaves(f));
                let right = Box::new(right.map_leaves(f));
                TreeNode::Split {
                    feature,
                    threshold,
                    gain,
                    left,
                    right,
                }
            }
        }
    }

    /// Features used by any split, with repetition.
    pub fn split_features(&self) -> Vec<usize> {
        match self {
            TreeNode::Leaf { .. } => Vec::new(),
            TreeNode::Split {
                feature, left, right, ..
            } => {
                let mut v = vec![*feature];
                v.extend(left.split_features());
                v.extend(right.split_features());
                v
            }
        }
    }
}

/// Threshold between consecutive distinct sorted values `a < b` such that `a <= t < b`.
pub(crate) fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let mid = a + (b - a) / T::of(2.0);
    if mid >= b || mid < a {
        a
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn routing_goes_left_on_equality() {
        let tree: TreeNode<f64, i32> = TreeNode::Split {
            feature: 1,
            threshold: 0.5,
            gain: 1.0,
            left: Box::new(TreeNode::leaf(-1)),
            right: Box::new(TreeNode::leaf(1)),
        };
        assert_eq!(*tree.route(array![9.0, 0.5].view()), -1);
        assert_eq!(*tree.route(array![9.0, 0.6].view()), 1);
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.leaves(), vec![&-1, &1]);
    }

    #[test]
    fn json_shape_is_tagged() {
        let tree: TreeNode<f64, f64> = TreeNode::Split {
            feature: 0,
            threshold: 0.0,
            gain: 2.0,
            left: Box::new(TreeNode::leaf(1.0)),
            right: Box::new(TreeNode::leaf(-1.0)),
        };
        let v = serde_json::to_value(&tree).unwrap();
        assert_eq!(v["type"], "split");
        assert_eq!(v["left"]["type"], "leaf");
        assert_eq!(v["left"]["value"], 1.0);
        let back: TreeNode<f64, f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, tree);
    }

    #[test]
    fn deep_tree_survives_json() {
        let mut tree: TreeNode<f64, f64> = TreeNode::leaf(0.0);
        for k in 0..MAX_TREE_DEPTH {
            tree = TreeNode::Split {
                feature: 0,
                threshold: k as f64,
                gain: 1.0,
                left: Box::new(TreeNode::leaf(1.0)),
                right: Box::new(tree),
            };
        }
        let text = serde_json::to_string(&vec![tree.clone()]).unwrap();
        let back: Vec<TreeNode<f64, f64>> = serde_json::from_str(&text).unwrap();
        assert_eq!(back[0], tree);
    }

    #[test]
    fn midpoint_stays_between() {
        assert_eq!(midpoint(1.0, 3.0), 2.0);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
    }
}
