//! Censoring-aware evaluation metrics.
//!
//! Every metric takes risk scores with the convention higher score = earlier expected event.
//! Sums are accumulated in `f64` in a fixed order, so results do not depend on the thread count.

use log::warn;
use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalTarget;
use crate::error::{Result, SurvError};
use crate::estimators::StepFunction;
use crate::scalar::{total_cmp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub c_index: f64,
    pub concordant: f64,
    pub discordant: f64,
    pub tied_risk: f64,
    pub comparable: f64,
}

impl ConcordanceResult {
    fn from_sums(concordant: f64, discordant: f64, tied_risk: f64) -> Result<Self> {
        let comparable = concordant + discordant + tied_risk;
        if !(comparable > 0.0) {
            return Err(SurvError::NoComparablePairs);
        }
        Ok(Self {
            c_index: (concordant + 0.5 * tied_risk) / comparable,
            concordant,
            discordant,
            tied_risk,
            comparable,
        })
    }
}

fn check_risks<T: Scalar>(targets: &[SurvivalTarget<T>], risks: &[T]) -> Result<()> {
    if targets.len() != risks.len() {
        return Err(SurvError::LengthMismatch {
            expected: targets.len(),
            found: risks.len(),
        });
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(SurvError::NonFinite("risk scores".into()));
    }
    Ok(())
}

/// Fenwick tree over dense ranks holding per-rank counts.
struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn add(&mut self, rank: usize, v: u64) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over ranks `< rank`.
    fn prefix(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Dense 0-based ranks of `values` (equal values share a rank) and the number of ranks.
fn dense_ranks<T: Scalar>(values: &[T]) -> (Vec<usize>, usize) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| total_cmp(&values[a], &values[b]));
    let mut ranks = vec![0; values.len()];
    let mut r = 0;
    for k in 0..idx.len() {
        if k > 0 && values[idx[k]] != values[idx[k - 1]] {
            r += 1;
        }
        ranks[idx[k]] = r;
    }
    (ranks, if values.is_empty() { 0 } else { r + 1 })
}

/// Indices sorted by time, descending, grouped into runs of equal time.
fn groups_descending<T: Scalar>(targets: &[SurvivalTarget<T>]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..targets.len()).collect();
    idx.sort_by(|&a, &b| total_cmp(&targets[b].time, &targets[a].time));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if targets[g[0]].time == targets[i].time => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Harrell's concordance index in `O(n log n)`.
///
/// A pair is comparable when the shorter time is an event, or when the times are equal and
/// only one of the two is an event; the event subject should then carry the higher risk.
pub fn harrell_c<T: Scalar>(targets: &[SurvivalTarget<T>], risks: &[T]) -> Result<ConcordanceResult> {
    check_risks(targets, risks)?;
    let (ranks, n_ranks) = dense_ranks(risks);
    let mut tree = Fenwick::new(n_ranks);
    let mut inserted: u64 = 0;
    let (mut conc, mut disc, mut tied) = (0u64, 0u64, 0u64);
    for group in groups_descending(targets) {
        for &i in group.iter().filter(|&&i| !targets[i].event) {
            tree.add(ranks[i], 1);
            inserted += 1;
        }
        for &i in group.iter().filter(|&&i| targets[i].event) {
            let below = tree.prefix(ranks[i]);
            let up_to = tree.prefix(ranks[i] + 1);
            conc += below;
            tied += up_to - below;
            disc += inserted - up_to;
        }
        for &i in group.iter().filter(|&&i| targets[i].event) {
            tree.add(ranks[i], 1);
            inserted += 1;
        }
    }
    ConcordanceResult::from_sums(conc as f64, disc as f64, tied as f64)
}

/// Largest event time `t` with `G(t) > 0`.
pub fn default_tau<T: Scalar>(targets: &[SurvivalTarget<T>], censor_dist: &StepFunction<T>) -> Option<T> {
    targets
        .iter()
        .filter(|t| t.event && censor_dist.eval(t.time) > T::zero())
        .map(|t| t.time)
        .fold(None, |acc: Option<T>, t| Some(acc.map_or(t, |a| a.max(t))))
}

/// Uno's inverse-probability-of-censoring weighted concordance, truncated at `tau`
/// (default: [`default_tau`]). An event at `T_i < tau` is compared with every subject whose time
/// is strictly larger, with weight `G(T_i-)^-2`.
pub fn ipcw_c<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    risks: &[T],
    censor_dist: &StepFunction<T>,
    tau: Option<T>,
) -> Result<ConcordanceResult> {
    check_risks(targets, risks)?;
    let tau = match tau {
        Some(t) => t,
        None => default_tau(targets, censor_dist).ok_or(SurvError::NoEvents)?,
    };
    if censor_dist.eval(tau) <= T::zero() && tau.is_finite() {
        return Err(SurvError::CensoringExhausted(tau.as_f64()));
    }
    let (ranks, n_ranks) = dense_ranks(risks);
    let mut tree = Fenwick::new(n_ranks);
    let mut inserted: u64 = 0;
    let (mut conc, mut disc, mut tied) = (0.0f64, 0.0f64, 0.0f64);
    for group in groups_descending(targets) {
        let time = targets[group[0]].time;
        if time < tau {
            for &i in group.iter().filter(|&&i| targets[i].event) {
                let g = censor_dist.eval_left(time).as_f64();
                if g <= 0.0 {
                    return Err(SurvError::CensoringExhausted(time.as_f64()));
                }
                let w = 1.0 / (g * g);
                let below = tree.prefix(ranks[i]);
                let up_to = tree.prefix(ranks[i] + 1);
                conc += w * below as f64;
                tied += w * (up_to - below) as f64;
                disc += w * (inserted - up_to) as f64;
            }
        }
        for &i in &group {
            tree.add(ranks[i], 1);
            inserted += 1;
        }
    }
    ConcordanceResult::from_sums(conc, disc, tied)
}

/// Strictly increasing evaluation times for Brier/IBS and time-dependent AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TimeGrid<T> {
    times: Vec<T>,
}

/// Number of points in the default grid.
pub const DEFAULT_GRID_RESOLUTION: usize = 100;

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.is_empty() {
            return Err(SurvError::Empty("time grid"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(SurvError::NonFinite("time grid".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SurvError::InvalidInput(
                "time grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { times })
    }

    /// `resolution` equally spaced points between the 5th and 95th percentiles of observed
    /// times, capped at [`default_tau`] and restricted to points with `G(t) > 0`.
    pub fn default_for(
        targets: &[SurvivalTarget<T>],
        censor_dist: &StepFunction<T>,
        resolution: usize,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(SurvError::Empty("evaluation targets"));
        }
        let mut times: Vec<f64> = targets.iter().map(|t| t.time.as_f64()).collect();
        times.sort_by(f64::total_cmp);
        let lo = quantile(&times, 0.05);
        let mut hi = quantile(&times, 0.95);
        let cap = default_tau(targets, censor_dist).ok_or(SurvError::NoEvents)?.as_f64();
        hi = hi.min(cap);
        let points: Vec<f64> = if hi <= lo || resolution < 2 {
            vec![lo.min(cap)]
        } else {
            let step = (hi - lo) / (resolution - 1) as f64;
            (0..resolution)
                .map(|k| if k + 1 == resolution { hi } else { lo + step * k as f64 })
                .collect()
        };
        let mut grid: Vec<T> = points
            .into_iter()
            .map(T::of)
            .filter(|&t| censor_dist.eval(t) > T::zero())
            .collect();
        grid.dedup();
        Self::new(grid)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> T {
        self.times[0]
    }

    pub fn last(&self) -> T {
        self.times[self.times.len() - 1]
    }
}

fn brier_f64<T: Scalar>(
    t: T,
    predicted: impl Iterator<Item = T>,
    targets: &[SurvivalTarget<T>],
    censor_dist: &StepFunction<T>,
) -> Result<f64> {
    let g_t = censor_dist.eval(t).as_f64();
    if g_t <= 0.0 {
        return Err(SurvError::CensoringExhausted(t.as_f64()));
    }
    let mut sum = 0.0;
    for (target, s) in targets.iter().zip(predicted) {
        let s = s.as_f64();
        if target.time <= t {
            if target.event {
                let g = censor_dist.eval_left(target.time).as_f64();
                if g <= 0.0 {
                    return Err(SurvError::CensoringExhausted(target.time.as_f64()));
                }
                sum += s * s / g;
            }
        } else {
            sum += (1.0 - s) * (1.0 - s) / g_t;
        }
    }
    Ok(sum / targets.len() as f64)
}

/// Graf's IPCW Brier score at time `t` given each subject's predicted `S(t)`.
pub fn brier<T: Scalar>(
    t: T,
    predicted_survival: &[T],
    targets: &[SurvivalTarget<T>],
    censor_dist: &StepFunction<T>,
) -> Result<T> {
    if predicted_survival.len() != targets.len() {
        return Err(SurvError::LengthMismatch {
            expected: targets.len(),
            found: predicted_survival.len(),
        });
    }
    if targets.is_empty() {
        return Err(SurvError::Empty("evaluation targets"));
    }
    brier_f64(t, predicted_survival.iter().copied(), targets, censor_dist).map(T::of)
}

/// Brier score at every grid time from an `n x m` matrix of predicted survival probabilities.
pub fn brier_curve<T: Scalar>(
    grid: &TimeGrid<T>,
    predictions: ArrayView2<'_, T>,
    targets: &[SurvivalTarget<T>],
    censor_dist: &StepFunction<T>,
) -> Result<Vec<T>> {
    if predictions.dim() != (targets.len(), grid.len()) {
        return Err(SurvError::DimensionMismatch {
            expected: targets.len() * grid.len(),
            found: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(SurvError::Empty("evaluation targets"));
    }
    grid.times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            brier_f64(t, predictions.column(k).iter().copied(), targets, censor_dist).map(T::of)
        })
        .collect()
}

fn trapezoid_mean(times: &[f64], values: &[f64]) -> f64 {
    let area: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum();
    area / (times[times.len() - 1] - times[0])
}

/// Integrated Brier score from a prediction matrix (`n x m`, one column per grid time).
pub fn ibs_from_matrix<T: Scalar>(
    grid: &TimeGrid<T>,
    predictions: ArrayView2<'_, T>,
    targets: &[SurvivalTarget<T>],
    censor_dist: &StepFunction<T>,
) -> Result<T> {
    if grid.len() < 2 {
        return Err(SurvError::InvalidInput(
            "integrated Brier score needs at least two grid points".into(),
        ));
    }
    let scores = brier_curve(grid, predictions, targets, censor_dist)?;
    let times: Vec<f64> = grid.times.iter().map(|t| t.as_f64()).collect();
    let values: Vec<f64> = scores.iter().map(|v| v.as_f64()).collect();
    Ok(T::of(trapezoid_mean(&times, &values)))
}

/// Integrated Brier score: trapezoidal integral of the Brier score over the grid, divided by
/// its span.
pub fn ibs<T: Scalar>(
    grid: &TimeGrid<T>,
    curves: &[StepFunction<T>],
    targets: &[SurvivalTarget<T>],
    censor_dist: &StepFunction<T>,
) -> Result<T> {
    if curves.len() != targets.len() {
        return Err(SurvError::LengthMismatch {
            expected: targets.len(),
            found: curves.len(),
        });
    }
    let mut m = ndarray::Array2::zeros((curves.len(), grid.len()));
    for (i, c) in curves.iter().enumerate() {
        for (k, &t) in grid.times.iter().enumerate() {
            m[[i, k]] = c.eval(t);
        }
    }
    ibs_from_matrix(grid, m.view(), targets, censor_dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TdAucResult<T> {
    /// Grid times at which AUC was defined.
    pub times: Vec<T>,
    pub values: Vec<T>,
    /// Unweighted mean over `values`.
    pub mean: T,
    /// Mean of the first and last defined values.
    pub endpoint_mean: T,
    /// Grid times skipped for lack of cases or controls.
    pub dropped: Vec<T>,
}

/// AUC at one time, or `None` without cases or controls.
fn auc_at<T: Scalar>(
    t: T,
    targets: &[SurvivalTarget<T>],
    risks: &[T],
    censor_dist: &StepFunction<T>,
) -> Result<Option<f64>> {
    let mut controls: Vec<T> = targets
        .iter()
        .zip(risks)
        .filter(|(tg, _)| tg.time > t)
        .map(|(_, &r)| r)
        .collect();
    if controls.is_empty() {
        return Ok(None);
    }
    controls.sort_by(total_cmp);
    let n_controls = controls.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (tg, &r) in targets.iter().zip(risks) {
        if !(tg.event && tg.time <= t) {
            continue;
        }
        let g = censor_dist.eval_left(tg.time).as_f64();
        if g <= 0.0 {
            return Err(SurvError::CensoringExhausted(tg.time.as_f64()));
        }
        let w = 1.0 / g;
        let below = controls.partition_point(|&c| c < r);
        let up_to = controls.partition_point(|&c| c <= r);
        num += w * (below as f64 + 0.5 * (up_to - below) as f64);
        den += w * n_controls;
    }
    Ok((den > 0.0).then(|| num / den))
}

/// Cumulative/dynamic time-dependent AUC with case weights `1 / G(T_i-)`. Times without cases
/// or controls are dropped with a warning.
pub fn td_auc<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    risks: &[T],
    grid: &TimeGrid<T>,
    censor_dist: &StepFunction<T>,
) -> Result<TdAucResult<T>> {
    check_risks(targets, risks)?;
    let per_time: Vec<Option<f64>> = grid
        .times
        .par_iter()
        .map(|&t| auc_at(t, targets, risks, censor_dist))
        .collect::<Result<_>>()?;
    let mut result = TdAucResult {
        times: Vec::new(),
        values: Vec::new(),
        mean: T::zero(),
        endpoint_mean: T::zero(),
        dropped: Vec::new(),
    };
    let mut kept = Vec::new();
    for (&t, v) in grid.times.iter().zip(per_time) {
        match v {
            Some(v) => {
                result.times.push(t);
                result.values.push(T::of(v));
                kept.push(v);
            }
            None => result.dropped.push(t),
        }
    }
    if !result.dropped.is_empty() {
        warn!(
            "time-dependent AUC undefined at {} grid time(s) without cases or controls",
            result.dropped.len()
        );
    }
    if kept.is_empty() {
        return Err(SurvError::InvalidInput(
            "time-dependent AUC undefined at every grid time".into(),
        ));
    }
    result.mean = T::of(kept.iter().sum::<f64>() / kept.len() as f64);
    result.endpoint_mean = T::of(0.5 * (kept[0] + kept[kept.len() - 1]));
    Ok(result)
}
