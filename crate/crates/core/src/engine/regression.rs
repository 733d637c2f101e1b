//! Exact-greedy regression trees on gradient/hessian statistics.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{midpoint, TreeNode, MAX_TREE_DEPTH};
use crate::error::{Result, SurvError};
use crate::scalar::{total_cmp, Scalar};

/// Regression tree with real-valued leaves.
pub type RegressionTree<T> = TreeNode<T, T>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Minimum hessian sum in each child.
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub reg_lambda: f64,
    pub min_split_gain: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_samples_leaf: 1,
            min_child_weight: 1e-3,
            reg_lambda: 1.0,
            min_split_gain: 0.0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth > MAX_TREE_DEPTH {
            return Err(SurvError::InvalidInput(format!(
                "max_depth {} exceeds the supported maximum {MAX_TREE_DEPTH}",
                self.max_depth
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(SurvError::InvalidInput("min_samples_leaf must be >= 1".into()));
        }
        for (name, v) in [
            ("min_child_weight", self.min_child_weight),
            ("reg_lambda", self.reg_lambda),
            ("min_split_gain", self.min_split_gain),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SurvError::InvalidInput(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Node sizes from which candidate features are scanned in parallel.
const PARALLEL_MIN_WORK: usize = 4096;

struct Stats<'a, T> {
    x: ArrayView2<'a, T>,
    g: Vec<f64>,
    h: Vec<f64>,
    params: TreeParams,
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    gain: f64,
    feature: usize,
    threshold: T,
    /// Number of rows going left.
    n_left: usize,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Fits one tree on all rows of `features`.
pub fn fit_regression_tree<T: Scalar>(
    features: ArrayView2<'_, T>,
    gradients: &[T],
    hessians: &[T],
    params: &TreeParams,
) -> Result<RegressionTree<T>> {
    let rows: Vec<usize> = (0..features.nrows()).collect();
    fit_regression_tree_rows(features, gradients, hessians, &rows, params)
}

/// Fits one tree on the listed rows. Splits are chosen greedily over midpoints between
/// consecutive distinct values, maximising
/// `1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)]`; leaves hold
/// `-G/(H+lambda)`. Gain ties go to the lower feature index, then the lower threshold.
pub fn fit_regression_tree_rows<T: Scalar>(
    features: ArrayView2<'_, T>,
    gradients: &[T],
    hessians: &[T],
    rows: &[usize],
    params: &TreeParams,
) -> Result<RegressionTree<T>> {
    params.validate()?;
    let n = features.nrows();
    for (name, v) in [("gradients", gradients), ("hessians", hessians)] {
        if v.len() != n {
            return Err(SurvError::LengthMismatch {
                expected: n,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SurvError::NonFinite(name.into()));
        }
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(SurvError::NonFinite("features".into()));
    }
    if rows.is_empty() {
        return Err(SurvError::Empty("tree rows"));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
        return Err(SurvError::InvalidInput(format!("row index {bad} out of range")));
    }
    let stats = Stats {
        x: features,
        g: gradients.iter().map(|v| v.as_f64()).collect(),
        h: hessians.iter().map(|v| v.as_f64()).collect(),
        params: *params,
    };
    let sorted: Vec<Vec<usize>> = (0..features.ncols())
        .map(|j| {
            let mut r = rows.to_vec();
            r.sort_by(|&a, &b| total_cmp(&features[[a, j]], &features[[b, j]]).then(a.cmp(&b)));
            r
        })
        .collect();
    Ok(build(&stats, sorted, rows.len(), 0))
}

fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    let v = -g / (h + lambda);
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn build<T: Scalar>(stats: &Stats<'_, T>, sorted: Vec<Vec<usize>>, m: usize, depth: usize) -> RegressionTree<T> {
    let p = &stats.params;
    let rows = sorted.first().map(Vec::as_slice).unwrap_or(&[]);
    let (g_tot, h_tot) = rows
        .iter()
        .fold((0.0, 0.0), |(g, h), &r| (g + stats.g[r], h + stats.h[r]));
    let leaf = || TreeNode::leaf(T::of(leaf_value(g_tot, h_tot, p.reg_lambda)));
    if sorted.is_empty() || depth >= p.max_depth || m < 2 * p.min_samples_leaf {
        return leaf();
    }
    let parent = score(g_tot, h_tot, p.reg_lambda);
    let scan = |j: usize| best_for_feature(stats, j, &sorted[j], g_tot, h_tot, parent);
    let per_feature: Vec<Option<Candidate<T>>> = if m * sorted.len() >= PARALLEL_MIN_WORK {
        (0..sorted.len()).into_par_iter().map(scan).collect()
    } else {
        (0..sorted.len()).map(scan).collect()
    };
    let mut best: Option<Candidate<T>> = None;
    for c in per_feature.into_iter().flatten() {
        if best.is_none_or(|b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    let tolerance = f64::EPSILON * 1e3 * (parent.abs() + 1.0);
    let Some(best) = best.filter(|b| b.gain > p.min_split_gain && b.gain > tolerance) else {
        return leaf();
    };

    let goes_left = |r: usize| stats.x[[r, best.feature]] <= best.threshold;
    let mut left_sorted = Vec::with_capacity(sorted.len());
    let mut right_sorted = Vec::with_capacity(sorted.len());
    for list in sorted {
        let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&r| goes_left(r));
        left_sorted.push(l);
        right_sorted.push(r);
    }
    let n_left = best.n_left;
    let left = build(stats, left_sorted, n_left, depth + 1);
    let right = build(stats, right_sorted, m - n_left, depth + 1);
    TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        gain: T::of(best.gain),
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn best_for_feature<T: Scalar>(
    stats: &Stats<'_, T>,
    j: usize,
    order: &[usize],
    g_tot: f64,
    h_tot: f64,
    parent: f64,
) -> Option<Candidate<T>> {
    let p = &stats.params;
    let m = order.len();
    let (mut gl, mut hl) = (0.0, 0.0);
    let mut best: Option<Candidate<T>> = None;
    for k in 0..m - 1 {
        let r = order[k];
        gl += stats.g[r];
        hl += stats.h[r];
        let a = stats.x[[r, j]];
        let b = stats.x[[order[k + 1], j]];
        if a == b {
            continue;
        }
        let n_left = k + 1;
        if n_left < p.min_samples_leaf || m - n_left < p.min_samples_leaf {
            continue;
        }
        let (gr, hr) = (g_tot - gl, h_tot - hl);
        if hl < p.min_child_weight || hr < p.min_child_weight {
            continue;
        }
        let gain = 0.5 * (score(gl, hl, p.reg_lambda) + score(gr, hr, p.reg_lambda) - parent);
        if gain.is_finite() && best.is_none_or(|c| gain > c.gain) {
            best = Some(Candidate {
                gain,
                feature: j,
                threshold: midpoint(a, b),
                n_left,
            });
        }
    }
    best
}
