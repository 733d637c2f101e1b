//! `explain`: permutation importance and global Shapley attribution for saved models.

use survkit::explain::{
    background_sample, global_attribution, permutation_importance, ImportanceMetric, ImportanceReport,
    PermutationConfig, ShapleyMode, MAX_EXACT_FEATURES,
};
use survkit::models::Family;
use survkit::FittedModel64;

use super::{files, load_cohort, model_path};
use crate::config::{ExplainData, RunConfig, ShapleyChoice};
use crate::error::{CliError, Result};
use crate::io::write_with;
use crate::seeds::derive_seed;

fn load_model(path: &std::path::Path) -> Result<FittedModel64> {
    if !path.exists() {
        return Err(CliError::MissingFile(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(FittedModel64::read_json(std::io::BufReader::new(file))?)
}

/// Saved model names for the configured families.
fn model_names(config: &RunConfig) -> Vec<String> {
    let mut names = Vec::new();
    for &family in &config.families {
        if family == Family::HorizonClassifier {
            names.extend(config.horizons.iter().map(|h| format!("{}_h{h}", family.key())));
        } else {
            names.push(family.key().to_string());
        }
    }
    names
}

/// Writes `importance/<model>_pi.csv` and `importance/<model>_shap.csv` for every configured
/// model and returns the reports in the same order.
pub fn run(config: &RunConfig) -> Result<Vec<(String, ImportanceReport, ImportanceReport)>> {
    let s = &config.explain;
    let train = load_cohort(&config.out.join(files::TRAIN))?;
    let eval = match s.data {
        ExplainData::Validation => load_cohort(&config.out.join(files::TEST))?,
        ExplainData::Train => train.clone(),
    };
    let mode = match s.shapley {
        ShapleyChoice::Exact => ShapleyMode::Exact,
        ShapleyChoice::MonteCarlo => ShapleyMode::MonteCarlo {
            n_permutations: s.permutations,
        },
        ShapleyChoice::Auto if train.n_features() <= MAX_EXACT_FEATURES => ShapleyMode::Exact,
        ShapleyChoice::Auto => ShapleyMode::MonteCarlo {
            n_permutations: s.permutations,
        },
    };

    let mut out = Vec::new();
    for name in model_names(config) {
        let model = load_model(&model_path(&config.out, &name))?;
        let started = std::time::Instant::now();
        let pi = permutation_importance(
            &model,
            &eval,
            &PermutationConfig {
                metric: if s.ipcw {
                    ImportanceMetric::IpcwC
                } else {
                    ImportanceMetric::HarrellC
                },
                n_repeats: s.repeats,
                seed: derive_seed(config.seed, &format!("explain/{name}/permutation")),
                ..PermutationConfig::default()
            },
        )?;
        let shap_seed = derive_seed(config.seed, &format!("explain/{name}/shapley"));
        let background = background_sample(&train, s.background.min(train.n_rows()), shap_seed)?;
        let shap = global_attribution(
            &model,
            &eval,
            background.view(),
            s.sample.min(eval.n_rows()),
            mode,
            shap_seed,
        )?;
        let dir = config.out.join(files::IMPORTANCE);
        write_with(&dir.join(format!("{name}_pi.csv")), |buf| pi.write_csv(buf))?;
        write_with(&dir.join(format!("{name}_shap.csv")), |buf| shap.write_csv(buf))?;
        log::info!("{name}: attribution in {:.1}s", started.elapsed().as_secs_f64());
        out.push((name, pi, shap));
    }
    Ok(out)
}
