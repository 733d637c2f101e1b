pub mod explain;
pub mod hpo;
pub mod prep;
pub mod synth;
pub mod train_eval;

use std::path::{Path, PathBuf};

use survkit::Cohort64;

use crate::error::{CliError, Result};

/// File names inside the output directory.
pub mod files {
    pub const TRAIN: &str = "train.csv";
    pub const TEST: &str = "test.csv";
    pub const FILTER_REPORT: &str = "filter_report.json";
    pub const ENCODER: &str = "encoder.json";
    pub const PREP_META: &str = "prep_meta.json";
    pub const SYNTH: &str = "synth.csv";
    pub const STUDIES: &str = "studies";
    pub const BEST_PARAMS: &str = "best_params.json";
    pub const MODELS: &str = "models";
    pub const METRICS_JSON: &str = "metrics.json";
    pub const METRICS_CSV: &str = "metrics.csv";
    pub const CURVES: &str = "curves.csv";
    pub const HORIZONS: &str = "horizons.csv";
    pub const IMPORTANCE: &str = "importance";
}

pub(crate) fn load_cohort(path: &Path) -> Result<Cohort64> {
    if !path.exists() {
        return Err(CliError::MissingFile(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(Cohort64::read_csv(std::io::BufReader::new(file))?)
}

pub(crate) fn model_path(out: &Path, name: &str) -> PathBuf {
    out.join(files::MODELS).join(format!("{name}.json"))
}
