//! Random survival forest: bagged log-rank trees with Nelson–Aalen leaves.

use ndarray::ArrayView2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::RsfParams;
use crate::data::SurvivalTarget;
use crate::engine::{fit_survival_tree, SurvivalTreeParams, TreeNode};
use crate::error::{Result, SurvError};
use crate::estimators::nelson_aalen;
use crate::scalar::Scalar;

/// Leaf cumulative hazard stored as steps on the training event-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LeafHazard<T> {
    /// Positions in the forest's event-time grid where the leaf hazard jumps.
    pub grid_index: Vec<u32>,
    /// Cumulative hazard after each jump.
    pub chf: Vec<T>,
    /// Leaf hazard summed over the event-time grid.
    pub mortality: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    /// Distinct training event times, ascending.
    pub event_times: Vec<T>,
    pub trees: Vec<TreeNode<T, LeafHazard<T>>>,
}

pub(crate) fn fit_forest<T: Scalar>(
    features: ArrayView2<'_, T>,
    targets: &[SurvivalTarget<T>],
    params: &RsfParams,
) -> Result<Forest<T>> {
    let n = targets.len();
    if !targets.iter().any(|t| t.event) {
        return Err(SurvError::NoEvents);
    }
    if params.n_trees == 0 {
        return Err(SurvError::InvalidInput("n_trees must be >= 1".into()));
    }
    if !(params.sample_fraction > 0.0 && params.sample_fraction <= 1.0) {
        return Err(SurvError::InvalidInput(format!(
            "sample_fraction must lie in (0, 1], got {}",
            params.sample_fraction
        )));
    }
    let d = features.ncols();
    let mtry = params
        .mtry
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));

    let mut event_times: Vec<T> = targets.iter().filter(|t| t.event).map(|t| t.time).collect();
    event_times.sort_by(crate::scalar::total_cmp);
    event_times.dedup();

    let n_boot = ((params.sample_fraction * n as f64).round() as usize).max(1);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(k as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n_boot).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let tree_params = SurvivalTreeParams {
                max_depth: params.max_depth,
                min_samples_leaf: params.min_samples_leaf,
                mtry: Some(mtry),
                seed: rng.next_u64(),
            };
            let tree = fit_survival_tree(features, targets, &rows, &tree_params)?;
            let mut failure = None;
            let tree = tree.map_leaves(&mut |members: Vec<usize>| {
                match leaf_hazard(&members, targets, &event_times) {
                    Ok(leaf) => leaf,
                    Err(e) => {
                        failure.get_or_insert(e);
                        LeafHazard {
                            grid_index: Vec::new(),
                            chf: Vec::new(),
                            mortality: T::zero(),
                        }
                    }
                }
            });
            match failure {
                Some(e) => Err(e),
                None => Ok(tree),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest { event_times, trees })
}

fn leaf_hazard<T: Scalar>(
    members: &[usize],
    targets: &[SurvivalTarget<T>],
    event_times: &[T],
) -> Result<LeafHazard<T>> {
    let leaf_targets: Vec<SurvivalTarget<T>> = members.iter().map(|&i| targets[i]).collect();
    let na = nelson_aalen(&leaf_targets)?;
    let g = event_times.len();
    let mut grid_index = Vec::with_capacity(na.len());
    let mut mortality = T::zero();
    let mut prev = T::zero();
    for (&t, &h) in na.times().iter().zip(na.values()) {
        let idx = event_times.partition_point(|&e| e < t);
        debug_assert!(idx < g && event_times[idx] == t);
        // the jump h - prev persists over grid points idx..g
        mortality += (h - prev) * T::of_usize(g - idx);
        prev = h;
        grid_index.push(idx as u32);
    }
    Ok(LeafHazard {
        grid_index,
        chf: na.values().to_vec(),
        mortality,
    })
}

impl<T: Scalar> Forest<T> {
    /// Mortality: ensemble cumulative hazard summed over the training event times.
    pub fn risk(&self, features: ArrayView2<'_, T>) -> Vec<T> {
        let m = T::of_usize(self.trees.len());
        features
            .outer_iter()
            .map(|row| {
                self.trees
                    .iter()
                    .map(|tree| tree.route(row).mortality)
                    .sum::<T>()
                    / m
            })
            .collect()
    }

    /// Ensemble cumulative hazard of one row at every training event time.
    pub fn chf_on_grid(&self, row: ndarray::ArrayView1<'_, T>) -> Vec<T> {
        let g = self.event_times.len();
        let mut jumps = vec![T::zero(); g];
        for tree in &self.trees {
            let leaf = tree.route(row);
            let mut prev = T::zero();
            for (&idx, &h) in leaf.grid_index.iter().zip(&leaf.chf) {
                jumps[idx as usize] += h - prev;
                prev = h;
            }
        }
        let m = T::of_usize(self.trees.len());
        let mut acc = T::zero();
        jumps
            .into_iter()
            .map(|j| {
                acc += j;
                acc / m
            })
            .collect()
    }
}
