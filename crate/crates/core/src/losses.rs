//! Losses for the boosting engine: Cox partial likelihood (Breslow ties), accelerated failure
//! time with normal or logistic errors, weighted squared error and logistic log-loss.
//!
//! All arithmetic runs in `f64`; results are converted to the caller's scalar type.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalTarget;
use crate::error::{Result, SurvError};
use crate::scalar::{total_cmp, Scalar};

/// Lower bound applied to every hessian entry.
pub const HESSIAN_FLOOR: f64 = 1e-16;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Loss value plus per-sample first and second derivatives with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval<T> {
    pub loss: T,
    pub gradients: Vec<T>,
    pub hessians: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AftDistribution {
    Normal,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AftLossConfig {
    pub distribution: AftDistribution,
    pub sigma: f64,
}

impl Default for AftLossConfig {
    fn default() -> Self {
        Self {
            distribution: AftDistribution::Normal,
            sigma: 1.0,
        }
    }
}

/// The bundled losses. Squared error regresses on `time`; logistic uses `event` as the label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Cox,
    Aft(AftLossConfig),
    Squared,
    Logistic,
}

/// Interface between a loss and the boosting loop.
pub trait Loss: Send + Sync {
    fn evaluate<T: Scalar>(
        &self,
        targets: &[SurvivalTarget<T>],
        weights: Option<&[T]>,
        predictions: &[T],
    ) -> Result<LossEval<T>>;

    /// Constant starting prediction.
    fn intercept<T: Scalar>(&self, targets: &[SurvivalTarget<T>], weights: Option<&[T]>) -> Result<T>;
}

impl Loss for LossKind {
    fn evaluate<T: Scalar>(
        &self,
        targets: &[SurvivalTarget<T>],
        weights: Option<&[T]>,
        predictions: &[T],
    ) -> Result<LossEval<T>> {
        match self {
            LossKind::Cox => cox_loss(targets, predictions, weights),
            LossKind::Aft(cfg) => aft_loss(targets, predictions, weights, cfg),
            LossKind::Squared => squared_loss(targets, predictions, weights),
            LossKind::Logistic => logistic_loss(targets, predictions, weights),
        }
    }

    fn intercept<T: Scalar>(&self, targets: &[SurvivalTarget<T>], weights: Option<&[T]>) -> Result<T> {
        loss_intercept(self, targets, weights)
    }
}

/// First-order wrapper: keeps the gradient and replaces every hessian with 1, turning the
/// second-order tree fit into least squares on the negative gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrder<L>(pub L);

impl<L: Loss> Loss for FirstOrder<L> {
    fn evaluate<T: Scalar>(
        &self,
        targets: &[SurvivalTarget<T>],
        weights: Option<&[T]>,
        predictions: &[T],
    ) -> Result<LossEval<T>> {
        let mut eval = self.0.evaluate(targets, weights, predictions)?;
        eval.hessians.iter_mut().for_each(|h| *h = T::one());
        Ok(eval)
    }

    fn intercept<T: Scalar>(&self, targets: &[SurvivalTarget<T>], weights: Option<&[T]>) -> Result<T> {
        self.0.intercept(targets, weights)
    }
}

fn check_shapes<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    predictions: &[T],
    weights: Option<&[T]>,
) -> Result<()> {
    if predictions.len() != targets.len() {
        return Err(SurvError::LengthMismatch {
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != targets.len() {
            return Err(SurvError::LengthMismatch {
                expected: targets.len(),
                found: w.len(),
            });
        }
    }
    if predictions.iter().any(|p| !p.is_finite()) {
        return Err(SurvError::NonFinite("predictions".into()));
    }
    Ok(())
}

fn weight_at<T: Scalar>(weights: Option<&[T]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i].as_f64())
}

fn finish<T: Scalar>(loss: f64, grad: Vec<f64>, hess: Vec<f64>) -> LossEval<T> {
    LossEval {
        loss: T::of(loss),
        gradients: grad.into_iter().map(T::of).collect(),
        hessians: hess.into_iter().map(|h| T::of(h.max(HESSIAN_FLOOR))).collect(),
    }
}

/// Negative Breslow partial log-likelihood
/// `L = -sum_{events i} w_i [eta_i - ln sum_{j: t_j >= t_i} w_j exp(eta_j)]`
/// with its gradient and diagonal hessian, via suffix sums over time-sorted subjects.
pub fn cox_loss<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    eta: &[T],
    weights: Option<&[T]>,
) -> Result<LossEval<T>> {
    check_shapes(targets, eta, weights)?;
    if !targets.iter().any(|t| t.event) {
        return Err(SurvError::NoEvents);
    }
    let n = targets.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| total_cmp(&targets[a].time, &targets[b].time));
    let shift = eta.iter().map(|e| e.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let r: Vec<f64> = (0..n)
        .map(|i| weight_at(weights, i) * (eta[i].as_f64() - shift).exp())
        .collect();

    // group boundaries of tied times in sorted order
    let mut group_start = vec![0usize; n];
    let mut group_end = vec![0usize; n];
    let mut k = 0;
    while k < n {
        let mut e = k + 1;
        while e < n && targets[order[e]].time == targets[order[k]].time {
            e += 1;
        }
        for p in k..e {
            group_start[p] = k;
            group_end[p] = e;
        }
        k = e;
    }

    // suffix[p] = sum of r over sorted positions >= p
    let mut suffix = vec![0.0; n + 1];
    for p in (0..n).rev() {
        suffix[p] = suffix[p + 1] + r[order[p]];
    }

    let mut loss = 0.0;
    // cumulative over events up to and including each tie group
    let mut a_sum = 0.0;
    let mut b_sum = 0.0;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut p = 0;
    while p < n {
        let end = group_end[p];
        let risk = suffix[group_start[p]];
        for &i in &order[p..end] {
            let w = weight_at(weights, i);
            if targets[i].event && w > 0.0 {
                loss -= w * (eta[i].as_f64() - shift - risk.ln());
                a_sum += w / risk;
                b_sum += w / (risk * risk);
            }
        }
        for &i in &order[p..end] {
            let w = weight_at(weights, i);
            let delta = if targets[i].event { 1.0 } else { 0.0 };
            grad[i] = -delta * w + r[i] * a_sum;
            hess[i] = r[i] * a_sum - r[i] * r[i] * b_sum;
        }
        p = end;
    }
    Ok(finish(loss, grad, hess))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse Mills ratio `phi(z) / (1 - Phi(z))` and `-ln(1 - Phi(z))`.
fn normal_upper_tail(z: f64) -> (f64, f64) {
    if z < 5.0 {
        let q = 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
        let log_phi = -0.5 * z * z - LN_SQRT_2PI;
        (log_phi.exp() / q, -q.ln())
    } else {
        // continued fraction for the Mills ratio Q/phi = 1/(z + 1/(z + 2/(z + ...)))
        let mut cf = z;
        for k in (1..=60).rev() {
            cf = z + k as f64 / cf;
        }
        let mills = 1.0 / cf;
        (1.0 / mills, 0.5 * z * z + LN_SQRT_2PI - mills.ln())
    }
}

/// Accelerated-failure-time negative log-likelihood with `z = (ln t - u) / sigma`. Events add
/// `-ln f(z) + ln sigma + ln t`; right-censored subjects add `-ln S(z)`.
pub fn aft_loss<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    u: &[T],
    weights: Option<&[T]>,
    config: &AftLossConfig,
) -> Result<LossEval<T>> {
    check_shapes(targets, u, weights)?;
    let sigma = config.sigma;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SurvError::InvalidInput(format!("AFT sigma must be > 0, got {sigma}")));
    }
    let n = targets.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for i in 0..n {
        let w = weight_at(weights, i);
        let t = targets[i].time.as_f64();
        if t <= 0.0 {
            if targets[i].event {
                return Err(SurvError::ZeroEventTime(i));
            }
            // censored at time zero: S(-inf) = 1, no information
            continue;
        }
        let ln_t = t.ln();
        let z = (ln_t - u[i].as_f64()) / sigma;
        let (l, dz, dzz) = match (config.distribution, targets[i].event) {
            (AftDistribution::Normal, true) => (0.5 * z * z + LN_SQRT_2PI, z, 1.0),
            (AftDistribution::Logistic, true) => {
                let s = sigmoid(z);
                (-z + 2.0 * softplus(z), 2.0 * s - 1.0, 2.0 * s * (1.0 - s))
            }
            (AftDistribution::Normal, false) => {
                let (h, neg_log_q) = normal_upper_tail(z);
                (neg_log_q, h, h * (h - z))
            }
            (AftDistribution::Logistic, false) => {
                let s = sigmoid(z);
                (softplus(z), s, s * (1.0 - s))
            }
        };
        let jacobian = if targets[i].event { sigma.ln() + ln_t } else { 0.0 };
        loss += w * (l + jacobian);
        grad[i] = -w * dz / sigma;
        hess[i] = w * dzz / (sigma * sigma);
    }
    Ok(finish(loss, grad, hess))
}

/// `L = 1/2 sum w_i (t_i - y_i)^2` regressing predictions on observed times.
pub fn squared_loss<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    predictions: &[T],
    weights: Option<&[T]>,
) -> Result<LossEval<T>> {
    check_shapes(targets, predictions, weights)?;
    let n = targets.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for i in 0..n {
        let w = weight_at(weights, i);
        let resid = targets[i].time.as_f64() - predictions[i].as_f64();
        loss += 0.5 * w * resid * resid;
        grad[i] = -w * resid;
        hess[i] = w;
    }
    Ok(finish(loss, grad, hess))
}

/// Weighted log-loss on the logit scale, label = `event`.
pub fn logistic_loss<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    predictions: &[T],
    weights: Option<&[T]>,
) -> Result<LossEval<T>> {
    check_shapes(targets, predictions, weights)?;
    let n = targets.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for i in 0..n {
        let w = weight_at(weights, i);
        let x = predictions[i].as_f64();
        let y = if targets[i].event { 1.0 } else { 0.0 };
        let p = sigmoid(x);
        loss += w * (softplus(x) - y * x);
        grad[i] = w * (p - y);
        hess[i] = w * p * (1.0 - p);
    }
    Ok(finish(loss, grad, hess))
}

/// Event-rate clamp used by the logistic intercept.
pub const RATE_CLAMP: f64 = 1e-6;

/// Constant starting prediction for each loss.
pub fn loss_intercept<T: Scalar>(
    loss: &LossKind,
    targets: &[SurvivalTarget<T>],
    weights: Option<&[T]>,
) -> Result<T> {
    if targets.is_empty() {
        return Err(SurvError::Empty("targets"));
    }
    let weighted_mean = |f: &dyn Fn(&SurvivalTarget<T>) -> Option<f64>| -> Result<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, t) in targets.iter().enumerate() {
            if let Some(v) = f(t) {
                let w = weight_at(weights, i);
                num += w * v;
                den += w;
            }
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(SurvError::InvalidInput("no positive weight for intercept".into()))
        }
    };
    let v = match loss {
        LossKind::Cox => 0.0,
        LossKind::Squared => weighted_mean(&|t| Some(t.time.as_f64()))?,
        LossKind::Aft(_) => {
            weighted_mean(&|t| (t.time > T::zero()).then(|| t.time.as_f64().ln()))?
        }
        LossKind::Logistic => {
            let rate = weighted_mean(&|t| Some(if t.event { 1.0 } else { 0.0 }))?
                .clamp(RATE_CLAMP, 1.0 - RATE_CLAMP);
            (rate / (1.0 - rate)).ln()
        }
    };
    Ok(T::of(v))
}
