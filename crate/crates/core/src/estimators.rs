//! Nonparametric and semiparametric survival estimators.
//!
//! All estimators return a right-continuous [`StepFunction`]. Ties are grouped by exact time
//! equality. Where deaths and censorings share a time, deaths are processed first.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::SurvivalTarget;
use crate::error::{Result, SurvError};
use crate::scalar::{total_cmp, Scalar};

/// Right-continuous piecewise-constant function of time.
///
/// `eval(t)` returns the value of the largest step time `<= t`, or `initial` before the first
/// step. Beyond the last step the last value is returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StepFunction<T> {
    times: Vec<T>,
    values: Vec<T>,
    initial: T,
}

impl<T: Scalar> StepFunction<T> {
    pub fn new(times: Vec<T>, values: Vec<T>, initial: T) -> Result<Self> {
        if times.len() != values.len() {
            return Err(SurvError::LengthMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) || !initial.is_finite() {
            return Err(SurvError::NonFinite("step function".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SurvError::InvalidInput(
                "step times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            times,
            values,
            initial,
        })
    }

    pub fn constant(value: T) -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
            initial: value,
        }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn initial(&self) -> T {
        self.initial
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn eval(&self, t: T) -> T {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit `f(t-)`: value at the largest step time strictly below `t`.
    pub fn eval_left(&self, t: T) -> T {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            self.initial
        } else {
            self.values[k - 1]
        }
    }

    pub fn eval_many(&self, ts: &[T]) -> Vec<T> {
        ts.iter().map(|&t| self.eval(t)).collect()
    }

    /// Applies `f` to every value (including the initial one).
    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            initial: f(self.initial),
        }
    }

    /// `initial == 1`, values in `[0, 1]` and nonincreasing.
    pub fn is_survival_curve(&self) -> bool {
        let one = T::one();
        self.initial == one
            && self.values.iter().all(|&v| v >= T::zero() && v <= one)
            && std::iter::once(&self.initial)
                .chain(&self.values)
                .collect::<Vec<_>>()
                .windows(2)
                .all(|w| w[1] <= w[0])
    }

    /// `initial == 0`, values nonnegative and nondecreasing.
    pub fn is_cumulative_hazard(&self) -> bool {
        self.initial == T::zero()
            && self.values.iter().all(|&v| v >= T::zero())
            && std::iter::once(&self.initial)
                .chain(&self.values)
                .collect::<Vec<_>>()
                .windows(2)
                .all(|w| w[1] >= w[0])
    }

    /// Writes the curve as a two-column `time,value` CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "value"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per distinct time: (time, at-risk count, deaths, censorings), ascending.
pub(crate) struct RiskTable<T> {
    pub times: Vec<T>,
    pub at_risk: Vec<usize>,
    pub deaths: Vec<usize>,
    pub censored: Vec<usize>,
}

pub(crate) fn risk_table<T: Scalar>(targets: &[SurvivalTarget<T>]) -> RiskTable<T> {
    let mut sorted: Vec<&SurvivalTarget<T>> = targets.iter().collect();
    sorted.sort_by(|a, b| total_cmp(&a.time, &b.time));
    let n = sorted.len();
    let mut table = RiskTable {
        times: Vec::new(),
        at_risk: Vec::new(),
        deaths: Vec::new(),
        censored: Vec::new(),
    };
    let mut i = 0;
    while i < n {
        let t = sorted[i].time;
        let mut j = i;
        let mut d = 0;
        while j < n && sorted[j].time == t {
            d += usize::from(sorted[j].event);
            j += 1;
        }
        table.times.push(t);
        table.at_risk.push(n - i);
        table.deaths.push(d);
        table.censored.push(j - i - d);
        i = j;
    }
    table
}

fn check_targets<T: Scalar>(targets: &[SurvivalTarget<T>]) -> Result<()> {
    if targets.is_empty() {
        return Err(SurvError::Empty("survival targets"));
    }
    if let Some(t) = targets.iter().find(|t| !t.time.is_finite() || t.time < T::zero()) {
        return Err(SurvError::InvalidInput(format!(
            "survival time must be finite and >= 0, got {}",
            t.time
        )));
    }
    Ok(())
}

/// Product-limit estimate of the survival function.
pub fn kaplan_meier<T: Scalar>(targets: &[SurvivalTarget<T>]) -> Result<StepFunction<T>> {
    check_targets(targets)?;
    let table = risk_table(targets);
    let mut s = T::one();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 0..table.times.len() {
        if table.deaths[k] == 0 {
            continue;
        }
        let d = T::of_usize(table.deaths[k]);
        let r = T::of_usize(table.at_risk[k]);
        s *= T::one() - d / r;
        times.push(table.times[k]);
        values.push(s);
    }
    StepFunction::new(times, values, T::one())
}

/// Nelson–Aalen estimate of the cumulative hazard.
pub fn nelson_aalen<T: Scalar>(targets: &[SurvivalTarget<T>]) -> Result<StepFunction<T>> {
    check_targets(targets)?;
    let table = risk_table(targets);
    let mut h = T::zero();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 0..table.times.len() {
        if table.deaths[k] == 0 {
            continue;
        }
        h += T::of_usize(table.deaths[k]) / T::of_usize(table.at_risk[k]);
        times.push(table.times[k]);
        values.push(h);
    }
    StepFunction::new(times, values, T::zero())
}

/// Kaplan–Meier estimate of the censoring survival `G(t)`.
///
/// Censorings are the "events"; deaths at a tied time leave the risk set first.
pub fn censoring_survival<T: Scalar>(targets: &[SurvivalTarget<T>]) -> Result<StepFunction<T>> {
    check_targets(targets)?;
    let table = risk_table(targets);
    let mut g = T::one();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 0..table.times.len() {
        let c = table.censored[k];
        if c == 0 {
            continue;
        }
        let at_risk = table.at_risk[k] - table.deaths[k];
        g *= T::one() - T::of_usize(c) / T::of_usize(at_risk);
        times.push(table.times[k]);
        values.push(g);
    }
    StepFunction::new(times, values, T::one())
}

/// Breslow estimate of the baseline cumulative hazard for linear predictors `eta`.
///
/// Subject curves follow as `S(t | x) = exp(-H0(t) * exp(eta(x)))`; see [`subject_survival`].
pub fn breslow_baseline<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    eta: &[T],
) -> Result<StepFunction<T>> {
    check_targets(targets)?;
    if eta.len() != targets.len() {
        return Err(SurvError::LengthMismatch {
            expected: targets.len(),
            found: eta.len(),
        });
    }
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(SurvError::NonFinite("linear predictor".into()));
    }
    let shift = eta.iter().copied().fold(T::neg_infinity(), T::max);
    let scale = shift.exp();

    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&targets[a].time, &targets[b].time));
    // suffix[i] = sum over order[i..] of exp(eta - shift)
    let mut suffix = vec![T::zero(); order.len() + 1];
    for i in (0..order.len()).rev() {
        suffix[i] = suffix[i + 1] + (eta[order[i]] - shift).exp();
    }

    let mut h = T::zero();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = targets[order[i]].time;
        let mut j = i;
        let mut d = 0usize;
        while j < order.len() && targets[order[j]].time == t {
            d += usize::from(targets[order[j]].event);
            j += 1;
        }
        if d > 0 {
            h += T::of_usize(d) / (scale * suffix[i]);
            times.push(t);
            values.push(h);
        }
        i = j;
    }
    StepFunction::new(times, values, T::zero())
}

/// Survival curve `exp(-H0(t) * exp(eta))` for one subject.
pub fn subject_survival<T: Scalar>(baseline: &StepFunction<T>, eta: T) -> StepFunction<T> {
    let r = eta.exp();
    baseline.map_values(|h| (-h * r).exp())
}

/// Result of a one-coefficient Cox fit on a fixed score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CoxCalibration<T> {
    pub beta: T,
    pub baseline: StepFunction<T>,
    pub iterations: usize,
}

impl<T: Scalar> CoxCalibration<T> {
    pub fn curve(&self, score: T) -> StepFunction<T> {
        subject_survival(&self.baseline, self.beta * score)
    }
}

const NEWTON_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 40;

/// Log partial likelihood (Breslow ties), score and information of `eta = beta * s`.
fn cox_single_stats<T: Scalar>(
    order: &[usize],
    targets: &[SurvivalTarget<T>],
    scores: &[T],
    beta: T,
) -> (T, T, T) {
    let shift = scores
        .iter()
        .map(|&s| beta * s)
        .fold(T::neg_infinity(), T::max);
    let n = order.len();
    let (mut s0, mut s1, mut s2) = (T::zero(), T::zero(), T::zero());
    let (mut loglik, mut score, mut info) = (T::zero(), T::zero(), T::zero());
    let mut i = n;
    // Walk groups of tied times from the latest down so the running sums are the risk sets.
    while i > 0 {
        let t = targets[order[i - 1]].time;
        let mut j = i;
        while j > 0 && targets[order[j - 1]].time == t {
            let k = order[j - 1];
            let e = (beta * scores[k] - shift).exp();
            s0 += e;
            s1 += e * scores[k];
            s2 += e * scores[k] * scores[k];
            j -= 1;
        }
        let mean = s1 / s0;
        let var = s2 / s0 - mean * mean;
        for &k in &order[j..i] {
            if targets[k].event {
                loglik += beta * scores[k] - shift - s0.ln();
                score += scores[k] - mean;
                info += var.max(T::zero());
            }
        }
        i = j;
    }
    (loglik, score, info)
}

/// Fits `eta = beta * score` by Newton iteration with step halving and returns `beta` with the
/// Breslow baseline at the fitted predictor.
/// True when every event has the largest (or every event the smallest) score in its risk set,
/// so the partial likelihood keeps increasing as `|beta|` grows and no finite maximiser exists.
fn monotone_likelihood<T: Scalar>(order: &[usize], targets: &[SurvivalTarget<T>], scores: &[T]) -> bool {
    // suffix extremes over subjects with time >= t
    let n = order.len();
    let mut suffix_max = vec![T::neg_infinity(); n + 1];
    let mut suffix_min = vec![T::infinity(); n + 1];
    for k in (0..n).rev() {
        let s = scores[order[k]];
        suffix_max[k] = suffix_max[k + 1].max(s);
        suffix_min[k] = suffix_min[k + 1].min(s);
    }
    let (mut all_top, mut all_bottom) = (true, true);
    let mut start = 0;
    for k in 0..n {
        if k > 0 && targets[order[k]].time != targets[order[k - 1]].time {
            start = k;
        }
        let i = order[k];
        if targets[i].event {
            all_top &= scores[i] >= suffix_max[start];
            all_bottom &= scores[i] <= suffix_min[start];
        }
    }
    all_top || all_bottom
}

pub fn cox_calibrate<T: Scalar>(
    scores: &[T],
    targets: &[SurvivalTarget<T>],
) -> Result<CoxCalibration<T>> {
    check_targets(targets)?;
    if scores.len() != targets.len() {
        return Err(SurvError::LengthMismatch {
            expected: targets.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(SurvError::NonFinite("calibration scores".into()));
    }
    let n_events = targets.iter().filter(|t| t.event).count();
    if n_events == 0 {
        return Err(SurvError::NoEvents);
    }
    if n_events < 2 {
        return Err(SurvError::InvalidInput(
            "Cox calibration needs at least two events".into(),
        ));
    }

    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&targets[a].time, &targets[b].time));

    let tol = T::of(NEWTON_TOL);
    let tiny = T::epsilon();
    let mut beta = T::zero();
    let lo = scores.iter().copied().fold(T::infinity(), T::min);
    let hi = scores.iter().copied().fold(T::neg_infinity(), T::max);
    if lo == hi {
        // flat likelihood: the gradient is identically zero
        let baseline = breslow_baseline(targets, &vec![T::zero(); scores.len()])?;
        return Ok(CoxCalibration {
            beta,
            baseline,
            iterations: 0,
        });
    }
    if monotone_likelihood(&order, targets, scores) {
        return Err(SurvError::NewtonDivergence { iterations: 0 });
    }
    let (mut loglik, mut score, mut info) = cox_single_stats(&order, targets, scores, beta);
    let mut converged_at = None;
    for iter in 1..=NEWTON_MAX_ITER {
        if score == T::zero() {
            converged_at = Some(iter - 1);
            break;
        }
        if info <= T::zero() {
            return Err(SurvError::NewtonDivergence { iterations: iter });
        }
        let mut step = score / info;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = beta + step;
            let stats = cox_single_stats(&order, targets, scores, candidate);
            if stats.0.is_finite() && stats.0 >= loglik - tiny * loglik.abs() {
                accepted = Some((candidate, stats));
                break;
            }
            step /= T::of(2.0);
        }
        let Some((next, stats)) = accepted else {
            return Err(SurvError::NewtonDivergence { iterations: iter });
        };
        let delta = (next - beta).abs();
        beta = next;
        (loglik, score, info) = stats;
        if !beta.is_finite() {
            return Err(SurvError::NewtonDivergence { iterations: iter });
        }
        if delta < tol {
            converged_at = Some(iter);
            break;
        }
    }
    let Some(iterations) = converged_at else {
        return Err(SurvError::NewtonDivergence {
            iterations: NEWTON_MAX_ITER,
        });
    };
    let eta: Vec<T> = scores.iter().map(|&s| beta * s).collect();
    let baseline = breslow_baseline(targets, &eta)?;
    Ok(CoxCalibration {
        beta,
        baseline,
        iterations,
    })
}
