//! Linear ranking survival SVM with squared hinge loss.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{PairMode, SsvmParams};
use crate::data::SurvivalTarget;
use crate::error::{Result, SurvError};
use crate::estimators::{cox_calibrate, CoxCalibration};
use crate::scalar::{total_cmp, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SsvmModel<T> {
    pub weights: Vec<T>,
    pub gamma: f64,
    pub pair_mode: PairMode,
    pub n_pairs: usize,
    pub iterations: usize,
    /// Cox fit of the training scores; absent when that fit diverged.
    pub calibration: Option<CoxCalibration<T>>,
}

impl<T: Scalar> SsvmModel<T> {
    pub fn risk(&self, features: ArrayView2<'_, T>) -> Vec<T> {
        features
            .outer_iter()
            .map(|row| row.iter().zip(&self.weights).map(|(&x, &w)| x * w).sum())
            .collect()
    }
}

/// Ranking pairs `(i, j)`: `i` has an event and `j` outlives it (or is censored at the same
/// time). Sorted by time with events first within ties, every event's partners form a suffix.
pub(crate) fn ranking_pairs<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    mode: PairMode,
    max_pairs: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let n = targets.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        total_cmp(&targets[a].time, &targets[b].time).then(targets[b].event.cmp(&targets[a].event))
    });
    // (event row, first partner position, partner count)
    let mut blocks: Vec<(usize, usize, usize)> = Vec::new();
    let mut p = 0;
    while p < n {
        let t = targets[order[p]].time;
        let mut end_events = p;
        while end_events < n && targets[order[end_events]].time == t && targets[order[end_events]].event {
            end_events += 1;
        }
        let mut end_group = end_events;
        while end_group < n && targets[order[end_group]].time == t {
            end_group += 1;
        }
        if end_events < n {
            let count = match mode {
                PairMode::All => n - end_events,
                PairMode::Nearest => 1,
            };
            for &i in &order[p..end_events] {
                blocks.push((i, end_events, count));
            }
        }
        p = end_group;
    }
    let total: usize = blocks.iter().map(|b| b.2).sum();
    if total <= max_pairs {
        return blocks
            .iter()
            .flat_map(|&(i, start, count)| order[start..start + count].iter().map(move |&j| (i, j)))
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, max_pairs).into_vec();
    picks.sort_unstable();
    // walk blocks once over the sorted picks
    let mut out = Vec::with_capacity(picks.len());
    let mut b = 0;
    let mut offset = 0;
    for k in picks {
        while k >= offset + blocks[b].2 {
            offset += blocks[b].2;
            b += 1;
        }
        let (i, start, _) = blocks[b];
        out.push((i, order[start + (k - offset)]));
    }
    out
}

struct Objective<'a> {
    diffs: &'a [Vec<f64>],
    gamma: f64,
}

impl Objective<'_> {
    fn value(&self, w: &[f64]) -> f64 {
        let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let hinge: f64 = self
            .diffs
            .iter()
            .map(|dx| {
                let slack = 1.0 - dot(w, dx);
                if slack > 0.0 {
                    slack * slack
                } else {
                    0.0
                }
            })
            .sum();
        reg + self.gamma * hinge
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = w.to_vec();
        for dx in self.diffs {
            let slack = 1.0 - dot(w, dx);
            if slack > 0.0 {
                let c = -2.0 * self.gamma * slack;
                g.iter_mut().zip(dx).for_each(|(gk, x)| *gk += c * x);
            }
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MAX_HALVINGS: usize = 60;

pub(crate) fn fit_ssvm_model<T: Scalar>(
    features: ArrayView2<'_, T>,
    targets: &[SurvivalTarget<T>],
    params: &SsvmParams,
) -> Result<SsvmModel<T>> {
    if !(params.gamma >= 0.0 && params.gamma.is_finite()) {
        return Err(SurvError::InvalidInput(format!("gamma must be >= 0, got {}", params.gamma)));
    }
    if !(params.step_size > 0.0 && params.step_size.is_finite()) {
        return Err(SurvError::InvalidInput(format!(
            "step_size must be > 0, got {}",
            params.step_size
        )));
    }
    let pairs = ranking_pairs(targets, params.pair_mode, params.max_pairs, params.seed);
    if pairs.is_empty() {
        return Err(SurvError::NoComparablePairs);
    }
    let d = features.ncols();
    let diffs: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(i, j)| {
            (0..d)
                .map(|k| features[[i, k]].as_f64() - features[[j, k]].as_f64())
                .collect()
        })
        .collect();
    let objective = Objective {
        diffs: &diffs,
        gamma: params.gamma,
    };

    // gradient descent with Armijo step halving; a successful step doubles the next trial step
    let mut w = vec![0.0; d];
    let mut f = objective.value(&w);
    let mut step = params.step_size;
    let mut iterations = 0;
    while iterations < params.epochs {
        let g = objective.gradient(&w);
        let g2 = dot(&g, &g);
        if g2.sqrt() <= params.tol {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wk, gk)| wk - step * gk).collect();
            let ft = objective.value(&trial);
            if ft <= f - 0.5 * step * g2 {
                w = trial;
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(SurvError::NonFinite("SSVM weights".into()));
    }
    let weights: Vec<T> = w.iter().map(|&v| T::of(v)).collect();
    let mut model = SsvmModel {
        weights,
        gamma: params.gamma,
        pair_mode: params.pair_mode,
        n_pairs: pairs.len(),
        iterations,
        calibration: None,
    };
    let scores = model.risk(features);
    match cox_calibrate(&scores, targets) {
        Ok(cal) => model.calibration = Some(cal),
        Err(e) => log::warn!("SSVM score calibration failed ({e}); survival curves unavailable"),
    }
    Ok(model)
}
