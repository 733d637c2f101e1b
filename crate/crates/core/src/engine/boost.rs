//! Second-order gradient boosting over regression trees.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::regression::{fit_regression_tree_rows, RegressionTree, TreeParams};
use crate::data::SurvivalTarget;
use crate::error::{Result, SurvError};
use crate::losses::{FirstOrder, Loss, LossEval, LossKind};
use crate::scalar::Scalar;

/// A loss plus the first-order flag. First-order boosting replaces the hessian by 1, so trees fit
/// the negative gradient by least squares (combine with `reg_lambda = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub loss: LossKind,
    pub first_order: bool,
}

impl Objective {
    pub fn second_order(loss: LossKind) -> Self {
        Self {
            loss,
            first_order: false,
        }
    }

    pub fn first_order(loss: LossKind) -> Self {
        Self {
            loss,
            first_order: true,
        }
    }
}

impl Loss for Objective {
    fn evaluate<T: Scalar>(
        &self,
        targets: &[SurvivalTarget<T>],
        weights: Option<&[T]>,
        predictions: &[T],
    ) -> Result<LossEval<T>> {
        if self.first_order {
            FirstOrder(self.loss).evaluate(targets, weights, predictions)
        } else {
            self.loss.evaluate(targets, weights, predictions)
        }
    }

    fn intercept<T: Scalar>(&self, targets: &[SurvivalTarget<T>], weights: Option<&[T]>) -> Result<T> {
        self.loss.intercept(targets, weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
    /// Fraction of rows, drawn without replacement each round, used to fit the tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            tree: TreeParams::default(),
            subsample: 1.0,
            seed: 0,
        }
    }
}

/// `prediction = base_score + learning_rate * sum(tree outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BoostedEnsemble<T> {
    pub base_score: T,
    pub learning_rate: T,
    pub objective: Objective,
    pub n_features: usize,
    pub trees: Vec<RegressionTree<T>>,
    /// Training loss before the first round and after each round.
    pub loss_trace: Vec<T>,
}

impl<T: Scalar> BoostedEnsemble<T> {
    pub fn predict_row(&self, row: ndarray::ArrayView1<'_, T>) -> T {
        let sum: T = self.trees.iter().map(|t| *t.route(row)).sum();
        self.base_score + self.learning_rate * sum
    }
}

/// Prediction for every row of `features`.
pub fn predict_ensemble<T: Scalar>(model: &BoostedEnsemble<T>, features: ArrayView2<'_, T>) -> Result<Vec<T>> {
    if features.ncols() != model.n_features {
        return Err(SurvError::DimensionMismatch {
            expected: model.n_features,
            found: features.ncols(),
        });
    }
    Ok(features.rows().into_iter().map(|r| model.predict_row(r)).collect())
}

fn check_eval<T: Scalar>(eval: &LossEval<T>, round: usize) -> Result<()> {
    let finite = eval.loss.is_finite()
        && eval.gradients.iter().all(|g| g.is_finite())
        && eval.hessians.iter().all(|h| h.is_finite());
    if finite {
        Ok(())
    } else {
        Err(SurvError::LossNonFinite { round })
    }
}

/// Boosts `params.n_rounds` trees on `objective`, starting from the loss intercept.
pub fn boost<T: Scalar>(
    features: ArrayView2<'_, T>,
    targets: &[SurvivalTarget<T>],
    weights: Option<&[T]>,
    objective: &Objective,
    params: &BoostParams,
) -> Result<BoostedEnsemble<T>> {
    let n = features.nrows();
    if targets.len() != n {
        return Err(SurvError::LengthMismatch {
            expected: n,
            found: targets.len(),
        });
    }
    if n == 0 {
        return Err(SurvError::Empty("training rows"));
    }
    if !(params.learning_rate >= 0.0 && params.learning_rate.is_finite()) {
        return Err(SurvError::InvalidInput("learning_rate must be finite and >= 0".into()));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(SurvError::InvalidInput("subsample must lie in (0, 1]".into()));
    }
    params.tree.validate()?;

    let base_score = objective.intercept(targets, weights)?;
    let lr = T::of(params.learning_rate);
    let mut preds = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut loss_trace = Vec::with_capacity(params.n_rounds + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_sub = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
    let all_rows: Vec<usize> = (0..n).collect();

    for round in 0..params.n_rounds {
        let eval = objective.evaluate(targets, weights, &preds)?;
        check_eval(&eval, round)?;
        loss_trace.push(eval.loss);
        let rows = if n_sub < n {
            let mut r = sample(&mut rng, n, n_sub).into_vec();
            r.sort_unstable();
            r
        } else {
            all_rows.clone()
        };
        let tree = fit_regression_tree_rows(features, &eval.gradients, &eval.hessians, &rows, &params.tree)?;
        for (i, p) in preds.iter_mut().enumerate() {
            *p += lr * *tree.route(features.row(i));
        }
        trees.push(tree);
    }
    let last = objective.evaluate(targets, weights, &preds)?;
    check_eval(&last, params.n_rounds)?;
    loss_trace.push(last.loss);
    Ok(BoostedEnsemble {
        base_score,
        learning_rate: lr,
        objective: *objective,
        n_features: features.ncols(),
        trees,
        loss_trace,
    })
}
