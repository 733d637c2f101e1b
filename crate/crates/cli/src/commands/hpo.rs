//! `hpo`: one cross-validated study per (family, sampler) and the winner per family.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survkit::hpo::{resume_study, Sampler, Study, StudyConfig};
use survkit::models::{Family, ModelParams};

use super::{files, load_cohort};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{read_json, write_json};
use crate::seeds::derive_seed;

/// Best value reached by one sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerResult {
    pub sampler: String,
    pub best_value: f64,
    pub best_trial: usize,
}

/// Winning configuration of one family, as consumed by `train-eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEntry {
    pub sampler: String,
    pub value: f64,
    pub trial: usize,
    pub n_trials: usize,
    pub k_folds: usize,
    pub params: ModelParams,
    pub samplers: Vec<SamplerResult>,
}

/// Contents of `best_params.json`, keyed by family.
pub type BestParams = BTreeMap<Family, BestEntry>;

pub fn study_path(out: &Path, family: Family, sampler: &Sampler) -> PathBuf {
    out.join(files::STUDIES).join(format!("{}_{}.json", family.key(), sampler.key()))
}

/// Default parameters of `family` with the config's `param.<family>.*` overrides.
pub fn configured_params(config: &RunConfig, family: Family) -> Result<ModelParams> {
    let mut params = ModelParams::default_for(family);
    if family == Family::HorizonClassifier {
        if let Some(&h) = config.horizons.first() {
            params.apply("horizon", &survkit::models::ParamValue::Float(h))?;
        }
    }
    for (key, value) in config.params.get(&family).into_iter().flatten() {
        params
            .apply(key, value)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(params)
}

fn study_config(config: &RunConfig, family: Family, sampler: &Sampler) -> Result<StudyConfig> {
    let label = format!("study/{}/{}", family.key(), sampler.key());
    let mut sc = StudyConfig::new(family, *sampler, derive_seed(config.seed, &label));
    sc.n_trials = config.n_trials;
    sc.k_folds = config.k_folds;
    sc.stratified = config.stratified_folds;
    sc.objective = config.objective;
    sc.base_params = configured_params(config, family)?;
    Ok(sc)
}

/// An existing study file for the same setup, if any. A file for a different setup is
/// replaced, with a warning.
fn existing_study(path: &Path, fresh: &StudyConfig) -> Result<Option<Study>> {
    if !path.exists() {
        return Ok(None);
    }
    let study: Study = read_json(path)?;
    let mut recorded = study.config.clone();
    recorded.n_trials = fresh.n_trials;
    if recorded != *fresh {
        log::warn!("{} was produced by a different setup; starting over", path.display());
        return Ok(None);
    }
    Ok(Some(study))
}

pub fn run(config: &RunConfig) -> Result<BestParams> {
    let train = load_cohort(&config.out.join(files::TRAIN))?;
    let best_path = config.out.join(files::BEST_PARAMS);
    let mut best: BestParams = if best_path.exists() {
        read_json(&best_path)?
    } else {
        BestParams::new()
    };

    for &family in &config.families {
        let mut results: Vec<(Sampler, Study)> = Vec::new();
        for sampler in &config.samplers {
            let sc = study_config(config, family, sampler)?;
            let path = study_path(&config.out, family, sampler);
            let start = match existing_study(&path, &sc)? {
                Some(study) => {
                    log::info!("resuming {} at trial {}", path.display(), study.trials.len());
                    study
                }
                None => Study {
                    config: sc.clone(),
                    trials: Vec::new(),
                    best: None,
                },
            };
            let started = std::time::Instant::now();
            let study = resume_study(&train, start, config.n_trials)
                .map_err(|e| CliError::Training(format!("{family} / {sampler}: {e}")))?;
            let trial = study.best_trial().expect("study has a best trial");
            log::info!(
                "{family} / {sampler}: best {:.4} at trial {} ({} trials, {:.1}s)",
                trial.value.unwrap_or(f64::NAN),
                trial.index,
                study.trials.len(),
                started.elapsed().as_secs_f64()
            );
            write_json(&path, &study)?;
            results.push((*sampler, study));
        }

        // argmax across samplers; ties keep the earlier sampler
        let mut winner: Option<(usize, f64)> = None;
        let mut summary = Vec::new();
        for (k, (sampler, study)) in results.iter().enumerate() {
            let trial = study.best_trial().expect("study has a best trial");
            let value = trial.value.expect("best trial completed");
            summary.push(SamplerResult {
                sampler: sampler.key().to_string(),
                best_value: value,
                best_trial: trial.index,
            });
            if winner.is_none_or(|(_, v)| value > v) {
                winner = Some((k, value));
            }
        }
        let (k, value) = winner.ok_or_else(|| CliError::Config("no sampler configured".into()))?;
        let (sampler, study) = &results[k];
        let entry = BestEntry {
            sampler: sampler.key().to_string(),
            value,
            trial: study.best.expect("study has a best trial"),
            n_trials: study.trials.len(),
            k_folds: study.config.k_folds,
            params: study.best_params()?,
            samplers: summary,
        };
        log::info!("{family}: winner {} with {:.4}", entry.sampler, entry.value);
        best.insert(family, entry);
    }
    write_json(&best_path, &best)?;
    Ok(best)
}
