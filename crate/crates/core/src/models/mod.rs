//! The survival model families behind one train/predict interface.
//!
//! Every family reports a risk score where higher means an earlier expected event. Survival
//! curves exist for RSF, GBSA and SSVM only; the other families return
//! [`SurvError::NoSurvivalFunction`].

mod forest;
mod params;
mod ssvm;

pub use forest::{Forest, LeafHazard};
pub use params::{GbParams, ModelParams, PairMode, ParamValue, RsfParams, SsvmParams};
pub use ssvm::SsvmModel;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, SurvivalTarget};
use crate::engine::{boost, predict_ensemble, BoostedEnsemble, Objective};
use crate::error::{Result, SurvError};
use crate::estimators::{breslow_baseline, StepFunction};
use crate::losses::{AftLossConfig, LossKind};
use crate::metrics::TimeGrid;
use crate::scalar::{total_cmp, Scalar};

/// Model file format version written by [`FittedModel::write_json`].
pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Rsf,
    Gbsa,
    Ssvm,
    GbCox,
    GbAft,
    GbRegWeighted,
    HorizonClassifier,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Rsf,
        Family::Gbsa,
        Family::Ssvm,
        Family::GbCox,
        Family::GbAft,
        Family::GbRegWeighted,
        Family::HorizonClassifier,
    ];

    /// Identifier used in file names, configs and JSON.
    pub fn key(self) -> &'static str {
        match self {
            Family::Rsf => "rsf",
            Family::Gbsa => "gbsa",
            Family::Ssvm => "ssvm",
            Family::GbCox => "gb_cox",
            Family::GbAft => "gb_aft",
            Family::GbRegWeighted => "gb_reg_weighted",
            Family::HorizonClassifier => "horizon_classifier",
        }
    }

    /// Whether [`predict_curves`] is defined.
    pub fn has_survival_function(self) -> bool {
        matches!(self, Family::Rsf | Family::Gbsa | Family::Ssvm)
    }

    /// Whether the model output is a hazard-type risk score, which is what time-dependent AUC
    /// is reported for. Predicted times (AFT, weighted regression) and horizon probabilities
    /// are not.
    pub fn has_native_risk(self) -> bool {
        matches!(self, Family::Rsf | Family::Gbsa | Family::Ssvm | Family::GbCox)
    }

    fn risk_scale(self) -> RiskScale {
        match self {
            Family::Rsf | Family::Gbsa | Family::Ssvm | Family::GbCox => RiskScale::Direct,
            Family::GbAft | Family::GbRegWeighted => RiskScale::Negated,
            Family::HorizonClassifier => RiskScale::Probability,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Family {
    type Err = SurvError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.key() == norm)
            .ok_or_else(|| SurvError::InvalidInput(format!("unknown model family {s:?}")))
    }
}

/// How the raw model output becomes a risk score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskScale {
    /// Output already increases with hazard.
    Direct,
    /// Output is a (log-)time; risk is its negation.
    Negated,
    /// Output is a logit; risk is the event probability at the horizon.
    Probability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Artifact<T> {
    Forest(Forest<T>),
    Boosted {
        ensemble: BoostedEnsemble<T>,
        /// Breslow baseline cumulative hazard (GBSA only).
        baseline: Option<StepFunction<T>>,
    },
    Ssvm(SsvmModel<T>),
}

/// A trained model of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FittedModel<T> {
    family: Family,
    params: ModelParams,
    n_features: usize,
    risk_scale: RiskScale,
    /// Distinct training event times, ascending.
    event_times: Vec<T>,
    /// Subjects left out of training (horizon classifier only).
    excluded: Option<usize>,
    artifact: Artifact<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelFile<T> {
    version: u32,
    family: Family,
    params: ModelParams,
    model: FittedModel<T>,
}

/// Anything that maps a feature matrix to per-row risk scores.
pub trait RiskModel<T: Scalar>: Sync {
    fn n_features(&self) -> usize;
    fn predict_risk(&self, features: ArrayView2<'_, T>) -> Result<Vec<T>>;
}

impl<T: Scalar> RiskModel<T> for FittedModel<T> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_risk(&self, features: ArrayView2<'_, T>) -> Result<Vec<T>> {
        predict_risk(self, features)
    }
}

impl<T: Scalar> FittedModel<T> {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn risk_scale(&self) -> RiskScale {
        self.risk_scale
    }

    pub fn event_times(&self) -> &[T] {
        &self.event_times
    }

    /// Training subjects excluded as censored before the horizon.
    pub fn excluded(&self) -> Option<usize> {
        self.excluded
    }

    pub fn artifact(&self) -> &Artifact<T> {
        &self.artifact
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            family: self.family,
            params: self.params.clone(),
            model: self.clone(),
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != MODEL_FILE_VERSION {
            return Err(SurvError::UnsupportedVersion(version));
        }
        let file: ModelFile<T> = serde_json::from_value(value)?;
        if file.family != file.model.family || file.params.family() != file.family {
            return Err(SurvError::InvalidInput("model file family header disagrees with its body".into()));
        }
        Ok(file.model)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_json(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }
}

fn check_trainable<T: Scalar>(train: &Cohort<T>) -> Result<()> {
    if train.n_rows() == 0 {
        return Err(SurvError::Empty("training cohort"));
    }
    Ok(())
}

fn event_times<T: Scalar>(targets: &[SurvivalTarget<T>]) -> Vec<T> {
    let mut times: Vec<T> = targets.iter().filter(|t| t.event).map(|t| t.time).collect();
    times.sort_by(total_cmp);
    times.dedup();
    times
}

fn require_events<T: Scalar>(train: &Cohort<T>) -> Result<()> {
    if train.n_events() == 0 {
        Err(SurvError::NoEvents)
    } else {
        Ok(())
    }
}

/// Fits whichever family `params` describes.
pub fn fit<T: Scalar>(train: &Cohort<T>, params: &ModelParams) -> Result<FittedModel<T>> {
    match params {
        ModelParams::Rsf(p) => fit_rsf(train, p),
        ModelParams::Gbsa(p) => fit_gbsa(train, p),
        ModelParams::Ssvm(p) => fit_ssvm(train, p),
        ModelParams::GbCox(p) => fit_gb_cox(train, p),
        ModelParams::GbAft { boost, aft } => fit_gb_aft(train, boost, aft),
        ModelParams::GbRegWeighted {
            boost,
            censored_weight,
        } => fit_gb_reg_weighted(train, boost, *censored_weight),
        ModelParams::HorizonClassifier { boost, horizon } => fit_horizon_classifier(train, boost, *horizon),
    }
}

/// Random survival forest. Sample weights are not used.
pub fn fit_rsf<T: Scalar>(train: &Cohort<T>, params: &RsfParams) -> Result<FittedModel<T>> {
    check_trainable(train)?;
    require_events(train)?;
    let forest = forest::fit_forest(train.features(), train.targets(), params)?;
    Ok(FittedModel {
        family: Family::Rsf,
        params: ModelParams::Rsf(params.clone()),
        n_features: train.n_features(),
        risk_scale: Family::Rsf.risk_scale(),
        event_times: forest.event_times.clone(),
        excluded: None,
        artifact: Artifact::Forest(forest),
    })
}

fn boosted<T: Scalar>(
    family: Family,
    params: ModelParams,
    train: &Cohort<T>,
    ensemble: BoostedEnsemble<T>,
    baseline: Option<StepFunction<T>>,
    excluded: Option<usize>,
) -> FittedModel<T> {
    FittedModel {
        family,
        params,
        n_features: train.n_features(),
        risk_scale: family.risk_scale(),
        event_times: event_times(train.targets()),
        excluded,
        artifact: Artifact::Boosted { ensemble, baseline },
    }
}

/// Classical gradient boosting on the Cox partial likelihood: unit hessians, no leaf penalty.
/// Curves come from the Breslow baseline of the training predictions.
pub fn fit_gbsa<T: Scalar>(train: &Cohort<T>, params: &GbParams) -> Result<FittedModel<T>> {
    check_trainable(train)?;
    require_events(train)?;
    let objective = Objective::first_order(LossKind::Cox);
    let ensemble = boost(
        train.features(),
        train.targets(),
        train.weights(),
        &objective,
        &params.boost_params(0.0),
    )?;
    let eta = predict_ensemble(&ensemble, train.features())?;
    let baseline = breslow_baseline(train.targets(), &eta)?;
    Ok(boosted(
        Family::Gbsa,
        ModelParams::Gbsa(params.clone()),
        train,
        ensemble,
        Some(baseline),
        None,
    ))
}

/// Second-order regularized boosting on the Cox partial likelihood.
pub fn fit_gb_cox<T: Scalar>(train: &Cohort<T>, params: &GbParams) -> Result<FittedModel<T>> {
    check_trainable(train)?;
    require_events(train)?;
    let ensemble = boost(
        train.features(),
        train.targets(),
        train.weights(),
        &Objective::second_order(LossKind::Cox),
        &params.boost_params(params.reg_lambda),
    )?;
    Ok(boosted(
        Family::GbCox,
        ModelParams::GbCox(params.clone()),
        train,
        ensemble,
        None,
        None,
    ))
}

/// Boosting on the AFT likelihood; the ensemble predicts log-time.
pub fn fit_gb_aft<T: Scalar>(train: &Cohort<T>, params: &GbParams, aft: &AftLossConfig) -> Result<FittedModel<T>> {
    check_trainable(train)?;
    let ensemble = boost(
        train.features(),
        train.targets(),
        train.weights(),
        &Objective::second_order(LossKind::Aft(*aft)),
        &params.boost_params(params.reg_lambda),
    )?;
    Ok(boosted(
        Family::GbAft,
        ModelParams::GbAft {
            boost: params.clone(),
            aft: *aft,
        },
        train,
        ensemble,
        None,
        None,
    ))
}

/// Squared-error boosting on observed time with censored rows down-weighted to
/// `censored_weight` (events weigh 1, multiplied by any cohort weights).
pub fn fit_gb_reg_weighted<T: Scalar>(
    train: &Cohort<T>,
    params: &GbParams,
    censored_weight: f64,
) -> Result<FittedModel<T>> {
    check_trainable(train)?;
    if !(censored_weight >= 0.0 && censored_weight.is_finite()) {
        return Err(SurvError::InvalidInput(format!(
            "censored_weight must be >= 0, got {censored_weight}"
        )));
    }
    let cw = T::of(censored_weight);
    let weights: Vec<T> = train
        .targets()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let base = if t.event { T::one() } else { cw };
            base * train.weights().map_or(T::one(), |w| w[i])
        })
        .collect();
    if weights.iter().all(|w| *w == T::zero()) {
        return Err(SurvError::InvalidInput("all regression weights are zero".into()));
    }
    let ensemble = boost(
        train.features(),
        train.targets(),
        Some(&weights),
        &Objective::second_order(LossKind::Squared),
        &params.boost_params(params.reg_lambda),
    )?;
    Ok(boosted(
        Family::GbRegWeighted,
        ModelParams::GbRegWeighted {
            boost: params.clone(),
            censored_weight,
        },
        train,
        ensemble,
        None,
        None,
    ))
}

/// Rows kept by the horizon classifier and their labels `I(event and time <= horizon)`.
/// Subjects censored before the horizon are dropped.
pub fn horizon_labels<T: Scalar>(targets: &[SurvivalTarget<T>], horizon: T) -> (Vec<usize>, Vec<bool>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        if !t.event && t.time < horizon {
            continue;
        }
        rows.push(i);
        labels.push(t.event && t.time <= horizon);
    }
    (rows, labels)
}

/// Binary boosting on death by `horizon`, excluding subjects censored before it.
pub fn fit_horizon_classifier<T: Scalar>(
    train: &Cohort<T>,
    params: &GbParams,
    horizon: f64,
) -> Result<FittedModel<T>> {
    check_trainable(train)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SurvError::InvalidInput(format!("horizon must be > 0, got {horizon}")));
    }
    let (rows, labels) = horizon_labels(train.targets(), T::of(horizon));
    if rows.is_empty() {
        return Err(SurvError::NoRetainedSubjects(horizon));
    }
    let excluded = train.n_rows() - rows.len();
    let kept = train.select_rows(&rows);
    let targets: Vec<SurvivalTarget<T>> = kept
        .targets()
        .iter()
        .zip(&labels)
        .map(|(t, &label)| SurvivalTarget::new(t.time, label))
        .collect();
    let ensemble = boost(
        kept.features(),
        &targets,
        kept.weights(),
        &Objective::second_order(LossKind::Logistic),
        &params.boost_params(params.reg_lambda),
    )?;
    Ok(boosted(
        Family::HorizonClassifier,
        ModelParams::HorizonClassifier {
            boost: params.clone(),
            horizon,
        },
        train,
        ensemble,
        None,
        Some(excluded),
    ))
}

/// Linear survival SVM; curves come from a one-coefficient Cox fit of the training scores.
pub fn fit_ssvm<T: Scalar>(train: &Cohort<T>, params: &SsvmParams) -> Result<FittedModel<T>> {
    check_trainable(train)?;
    let model = ssvm::fit_ssvm_model(train.features(), train.targets(), params)?;
    Ok(FittedModel {
        family: Family::Ssvm,
        params: ModelParams::Ssvm(params.clone()),
        n_features: train.n_features(),
        risk_scale: Family::Ssvm.risk_scale(),
        event_times: event_times(train.targets()),
        excluded: None,
        artifact: Artifact::Ssvm(model),
    })
}

fn check_dims<T: Scalar>(model: &FittedModel<T>, features: ArrayView2<'_, T>) -> Result<()> {
    if features.ncols() != model.n_features {
        return Err(SurvError::DimensionMismatch {
            expected: model.n_features,
            found: features.ncols(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(SurvError::NonFinite("feature matrix".into()));
    }
    Ok(())
}

/// Per-row risk; higher means an earlier expected event.
pub fn predict_risk<T: Scalar>(model: &FittedModel<T>, features: ArrayView2<'_, T>) -> Result<Vec<T>> {
    check_dims(model, features)?;
    let raw = match &model.artifact {
        Artifact::Forest(forest) => forest.risk(features),
        Artifact::Boosted { ensemble, .. } => predict_ensemble(ensemble, features)?,
        Artifact::Ssvm(svm) => svm.risk(features),
    };
    Ok(match model.risk_scale {
        RiskScale::Direct => raw,
        RiskScale::Negated => raw.into_iter().map(|v| -v).collect(),
        RiskScale::Probability => raw.into_iter().map(|v| T::one() / (T::one() + (-v).exp())).collect(),
    })
}

/// Survival curves evaluated at the grid times, one per row, with value 1 before the first
/// grid time. Curves are step functions on the training event times, looked up right-continuously.
pub fn predict_curves<T: Scalar>(
    model: &FittedModel<T>,
    features: ArrayView2<'_, T>,
    grid: &TimeGrid<T>,
) -> Result<Vec<StepFunction<T>>> {
    let matrix = predict_curve_matrix(model, features, grid)?;
    matrix
        .outer_iter()
        .map(|row| StepFunction::new(grid.times().to_vec(), row.to_vec(), T::one()))
        .collect()
}

/// Survival probabilities as an `n x grid.len()` matrix.
pub fn predict_curve_matrix<T: Scalar>(
    model: &FittedModel<T>,
    features: ArrayView2<'_, T>,
    grid: &TimeGrid<T>,
) -> Result<Array2<T>> {
    check_dims(model, features)?;
    let n = features.nrows();
    let m = grid.len();
    let rows: Vec<Vec<T>> = match &model.artifact {
        Artifact::Forest(forest) => {
            // last training event time <= t, per grid point
            let idx: Vec<usize> = grid
                .times()
                .iter()
                .map(|&t| forest.event_times.partition_point(|&e| e <= t))
                .collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let chf = forest.chf_on_grid(features.row(i));
                    idx.iter()
                        .map(|&k| if k == 0 { T::one() } else { (-chf[k - 1]).exp() })
                        .collect()
                })
                .collect()
        }
        Artifact::Boosted {
            ensemble,
            baseline: Some(baseline),
        } if model.family == Family::Gbsa => {
            let h0 = baseline.eval_many(grid.times());
            predict_ensemble(ensemble, features)?
                .into_iter()
                .map(|eta| {
                    let r = eta.exp();
                    h0.iter().map(|&h| (-h * r).exp()).collect()
                })
                .collect()
        }
        Artifact::Ssvm(svm) => {
            let cal = svm.calibration.as_ref().ok_or_else(|| {
                SurvError::NoSurvivalFunction("ssvm (score calibration did not converge)".into())
            })?;
            let h0 = cal.baseline.eval_many(grid.times());
            svm.risk(features)
                .into_iter()
                .map(|s| {
                    let r = (cal.beta * s).exp();
                    h0.iter().map(|&h| (-h * r).exp()).collect()
                })
                .collect()
        }
        _ => return Err(SurvError::NoSurvivalFunction(model.family.to_string())),
    };
    let mut out = Array2::zeros((n, m));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}
