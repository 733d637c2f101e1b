//! `prep`: filter, assemble, split and encode the input into `train.csv` / `test.csv`.

use serde::Serialize;
use survkit::data::{apply_filters, assemble_cohort, ingest_csv, AssemblyReport, FilterReport, RawColumn, RawValues};
use survkit::preprocess::{fit_encoder, split};
use survkit::{Cohort64, RawCohort64};

use super::{files, load_cohort};
use crate::config::{InputFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{ensure_dir, write_atomic, write_json, write_with};
use crate::seeds::derive_seed;

#[derive(Debug, Serialize)]
struct PrepReport {
    filters: FilterReport,
    /// Rows dropped while building targets and covariates (registry input only).
    assembly: Option<AssemblyReport>,
}

#[derive(Debug, Serialize)]
pub struct PrepMeta {
    pub input_format: &'static str,
    pub master_seed: u64,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub train_fraction: f64,
    pub stratified_split: bool,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_events: usize,
    pub test_events: usize,
    pub columns: Vec<String>,
    /// Ordinal columns without a configured category order (encoded lexicographically).
    pub lexicographic_columns: Vec<String>,
}

/// Numeric raw cohort from an already tabular file, so the encoder z-scores every column.
fn raw_from_cohort(cohort: &Cohort64) -> Result<RawCohort64> {
    let columns = cohort
        .column_names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| RawColumn {
            name,
            values: RawValues::Numeric(cohort.features().column(j).to_vec()),
        })
        .collect();
    Ok(RawCohort64::new(
        columns,
        cohort.targets().to_vec(),
        cohort.weights().map(<[f64]>::to_vec),
    )?)
}

pub fn run(config: &RunConfig) -> Result<PrepMeta> {
    let input = config
        .input
        .as_deref()
        .ok_or_else(|| CliError::Config("prep needs `input` in the config".into()))?;
    let (raw, report) = match config.input_format {
        InputFormat::Registry => {
            let records = ingest_csv(input, &config.schema)?;
            let (kept, filters) = apply_filters(&records, &config.filters);
            let (raw, assembly) = assemble_cohort::<f64>(&kept, &config.cohort)?;
            log::info!(
                "{} records, {} after filters, {} after assembly",
                filters.initial,
                filters.final_count,
                assembly.retained
            );
            (
                raw,
                PrepReport {
                    filters,
                    assembly: Some(assembly),
                },
            )
        }
        InputFormat::Cohort => {
            let cohort = load_cohort(input)?;
            let n = cohort.n_rows();
            let filters = FilterReport {
                initial: n,
                final_count: n,
                ..Default::default()
            };
            (
                raw_from_cohort(&cohort)?,
                PrepReport {
                    filters,
                    assembly: None,
                },
            )
        }
    };
    if raw.n_rows() == 0 {
        return Err(CliError::Data(survkit::SurvError::Empty("cohort after filtering")));
    }

    let split_seed = derive_seed(config.seed, "split");
    let (train_raw, test_raw) = split(&raw, config.test_fraction, config.stratify_split, split_seed)?;
    let encoder = fit_encoder(&train_raw, &config.category_orders)?;
    let train = encoder.transform(&train_raw)?;
    let test = encoder.transform(&test_raw)?;

    let out = &config.out;
    ensure_dir(out)?;
    write_with(&out.join(files::TRAIN), |buf| train.write_csv(buf))?;
    write_with(&out.join(files::TEST), |buf| test.write_csv(buf))?;
    write_json(&out.join(files::FILTER_REPORT), &report)?;
    let mut encoder_json = encoder.to_json()?;
    encoder_json.push('\n');
    write_atomic(&out.join(files::ENCODER), encoder_json.as_bytes())?;

    let meta = PrepMeta {
        input_format: match config.input_format {
            InputFormat::Registry => "registry",
            InputFormat::Cohort => "cohort",
        },
        master_seed: config.seed,
        split_seed,
        test_fraction: config.test_fraction,
        train_fraction: 1.0 - config.test_fraction,
        stratified_split: config.stratify_split,
        n_rows: raw.n_rows(),
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        train_events: train.n_events(),
        test_events: test.n_events(),
        columns: train.column_names(),
        lexicographic_columns: encoder.fallback_columns().into_iter().map(String::from).collect(),
    };
    write_json(&out.join(files::PREP_META), &meta)?;
    log::info!("train {} rows, test {} rows", meta.n_train, meta.n_test);
    Ok(meta)
}
