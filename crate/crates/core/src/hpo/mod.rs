//! Hyperparameter search: random, TPE and CMA-ES samplers and a cross-validated study runner.
//!
//! Samplers are stateless. Every proposal is rebuilt from the trial history plus a random
//! stream derived from `(seed, trial index)`, so a study is reproducible and can be resumed
//! from its JSON file.

mod cmaes;
mod space;
mod tpe;

pub use cmaes::{cmaes_state, population_size, CmaConfig, CmaState};
pub use space::{default_space, validate_space, Assignment, ParamKind, ParamSpec};
pub use tpe::{good_group_size, TpeConfig};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Result, SurvError};
use crate::estimators::censoring_survival;
use crate::metrics::{harrell_c, ipcw_c};
use crate::models::{fit, predict_risk, Family, ModelParams};
use crate::preprocess::{fold_complement, kfold, stratified_kfold};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    Random,
    Tpe(TpeConfig),
    CmaEs(CmaConfig),
}

impl Sampler {
    pub fn key(&self) -> &'static str {
        match self {
            Sampler::Random => "random",
            Sampler::Tpe(_) => "tpe",
            Sampler::CmaEs(_) => "cmaes",
        }
    }

    /// Proposal for trial `history.len()`.
    pub fn suggest(&self, space: &[ParamSpec], history: &[Trial], seed: u64) -> Result<Assignment> {
        validate_space(space)?;
        let mut rng = trial_rng(seed, history.len());
        match self {
            Sampler::Random => Ok(random_assignment(space, &mut rng)),
            Sampler::Tpe(cfg) => Ok(tpe::sample_tpe(space, history, cfg, &mut rng)),
            Sampler::CmaEs(cfg) => cmaes::sample_cmaes(space, history, cfg, seed, &mut rng),
        }
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Sampler {
    type Err = SurvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Sampler::Random),
            "tpe" => Ok(Sampler::Tpe(TpeConfig::default())),
            "cmaes" | "cma-es" | "cma_es" => Ok(Sampler::CmaEs(CmaConfig::default())),
            other => Err(SurvError::InvalidInput(format!("unknown sampler {other:?}"))),
        }
    }
}

/// Random stream for one trial.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub(crate) fn random_assignment(space: &[ParamSpec], rng: &mut ChaCha8Rng) -> Assignment {
    space
        .iter()
        .map(|spec| (spec.name.clone(), spec.sample_uniform(rng)))
        .collect()
}

/// Uniform draw for trial `index`.
pub fn sample_random(space: &[ParamSpec], seed: u64, index: usize) -> Assignment {
    random_assignment(space, &mut trial_rng(seed, index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Assignment,
    /// Objective value; `None` when the trial failed.
    pub value: Option<f64>,
    pub failure: Option<String>,
    /// Per-fold objective values, in fold order.
    #[serde(default)]
    pub fold_values: Vec<f64>,
}

impl Trial {
    fn completed(index: usize, params: Assignment, value: f64, fold_values: Vec<f64>) -> Self {
        Self {
            index,
            params,
            value: Some(value),
            failure: None,
            fold_values,
        }
    }

    fn failed(index: usize, params: Assignment, why: String) -> Self {
        Self {
            index,
            params,
            value: None,
            failure: Some(why),
            fold_values: Vec::new(),
        }
    }
}

/// Index of the best completed trial; ties keep the earliest.
pub fn best_trial(trials: &[Trial]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for t in trials {
        if let Some(v) = t.value {
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, t.index));
            }
        }
    }
    best.map(|(_, i)| i)
}

/// Runs `n_trials` proposals against `objective`, recording failures and continuing.
pub fn optimize(
    space: &[ParamSpec],
    sampler: &Sampler,
    n_trials: usize,
    seed: u64,
    mut objective: impl FnMut(&Assignment) -> Result<(f64, Vec<f64>)>,
) -> Result<Vec<Trial>> {
    let mut trials = Vec::with_capacity(n_trials);
    extend_trials(space, sampler, &mut trials, n_trials, seed, &mut objective)?;
    Ok(trials)
}

fn extend_trials(
    space: &[ParamSpec],
    sampler: &Sampler,
    trials: &mut Vec<Trial>,
    n_total: usize,
    seed: u64,
    objective: &mut impl FnMut(&Assignment) -> Result<(f64, Vec<f64>)>,
) -> Result<()> {
    while trials.len() < n_total {
        let index = trials.len();
        let params = sampler.suggest(space, trials, seed)?;
        let trial = match objective(&params) {
            Ok((value, folds)) if value.is_finite() => Trial::completed(index, params, value, folds),
            Ok((value, _)) => Trial::failed(index, params, format!("objective is {value}")),
            Err(e) => {
                log::warn!("trial {index} failed: {e}");
                Trial::failed(index, params, e.to_string())
            }
        };
        trials.push(trial);
    }
    Ok(())
}

/// Metric averaged over validation folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyObjective {
    #[default]
    HarrellC,
    /// Uno's IPCW concordance with the censoring distribution of the fold's training part.
    IpcwC,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub family: Family,
    pub space: Vec<ParamSpec>,
    pub sampler: Sampler,
    pub n_trials: usize,
    pub k_folds: usize,
    /// Folds keep the event rate of the whole cohort.
    pub stratified: bool,
    pub objective: StudyObjective,
    pub seed: u64,
    /// Values applied before each trial's sampled parameters.
    pub base_params: ModelParams,
}

impl StudyConfig {
    pub fn new(family: Family, sampler: Sampler, seed: u64) -> Self {
        Self {
            family,
            space: default_space(family),
            sampler,
            n_trials: 150,
            k_folds: 10,
            stratified: true,
            objective: StudyObjective::HarrellC,
            seed,
            base_params: ModelParams::default_for(family),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub config: StudyConfig,
    pub trials: Vec<Trial>,
    pub best: Option<usize>,
}

impl Study {
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.map(|i| &self.trials[i])
    }

    /// Base parameters with the best trial's assignment applied.
    pub fn best_params(&self) -> Result<ModelParams> {
        let trial = self.best_trial().ok_or(SurvError::AllTrialsFailed)?;
        trial_params(&self.config, &trial.params)
    }
}

/// Model parameters for one trial.
pub fn trial_params(config: &StudyConfig, assignment: &Assignment) -> Result<ModelParams> {
    let mut params = config.base_params.clone();
    if params.family() != config.family {
        return Err(SurvError::InvalidInput(format!(
            "base parameters are for {}, study is for {}",
            params.family(),
            config.family
        )));
    }
    for (key, value) in assignment {
        params.apply(key, value)?;
    }
    params.set_seed(config.seed);
    Ok(params)
}

/// Mean validation metric of `params` over the folds.
pub fn cross_validate<T: Scalar>(
    cohort: &Cohort<T>,
    folds: &[Vec<usize>],
    params: &ModelParams,
    objective: StudyObjective,
) -> Result<(f64, Vec<f64>)> {
    let values = (0..folds.len())
        .into_par_iter()
        .map(|f| {
            let train = cohort.select_rows(&fold_complement(folds, f));
            let valid = cohort.select_rows(&folds[f]);
            let model = fit(&train, params)?;
            let risk = predict_risk(&model, valid.features())?;
            let c = match objective {
                StudyObjective::HarrellC => harrell_c(valid.targets(), &risk)?,
                StudyObjective::IpcwC => {
                    let g = censoring_survival(train.targets())?;
                    ipcw_c(valid.targets(), &risk, &g, None)?
                }
            };
            Ok(c.c_index)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok((mean, values))
}

fn study_folds<T: Scalar>(cohort: &Cohort<T>, config: &StudyConfig) -> Result<Vec<Vec<usize>>> {
    if config.k_folds < 2 {
        return Err(SurvError::InvalidInput(format!("k_folds must be >= 2, got {}", config.k_folds)));
    }
    if config.stratified {
        stratified_kfold(cohort.targets(), config.k_folds, config.seed)
    } else {
        kfold(cohort.n_rows(), config.k_folds, config.seed)
    }
}

/// Cross-validated search maximizing the mean fold metric. Folds are drawn once per study.
pub fn run_study<T: Scalar>(cohort: &Cohort<T>, config: &StudyConfig) -> Result<Study> {
    let study = Study {
        config: config.clone(),
        trials: Vec::new(),
        best: None,
    };
    resume_study(cohort, study, config.n_trials)
}

/// Continues `study` until it holds `n_total` trials.
pub fn resume_study<T: Scalar>(cohort: &Cohort<T>, mut study: Study, n_total: usize) -> Result<Study> {
    if n_total == 0 {
        return Err(SurvError::InvalidInput("n_trials must be >= 1".into()));
    }
    validate_space(&study.config.space)?;
    if study.trials.iter().enumerate().any(|(i, t)| t.index != i) {
        return Err(SurvError::InvalidInput("study trials are not numbered 0, 1, ...".into()));
    }
    let folds = study_folds(cohort, &study.config)?;
    let config = study.config.clone();
    let mut objective = |assignment: &Assignment| {
        let params = trial_params(&config, assignment)?;
        cross_validate(cohort, &folds, &params, config.objective)
    };
    extend_trials(
        &config.space,
        &config.sampler,
        &mut study.trials,
        n_total,
        config.seed,
        &mut objective,
    )?;
    study.config.n_trials = study.trials.len();
    study.best = best_trial(&study.trials);
    if study.best.is_none() {
        return Err(SurvError::AllTrialsFailed);
    }
    Ok(study)
}

#[cfg(test)]
mod tests;
