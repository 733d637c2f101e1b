//! `train-eval`: fit every configured family on the training split and score it on the test
//! split.

use ndarray::Axis;
use rayon::prelude::*;
use serde::Serialize;
use survkit::estimators::{censoring_survival, kaplan_meier};
use survkit::metrics::{default_tau, harrell_c, ibs_from_matrix, ipcw_c, td_auc, TimeGrid};
use survkit::models::{fit, predict_curve_matrix, predict_risk, Family, ModelParams, ParamValue};
use survkit::{Cohort64, FittedModel64, StepFunction64, SurvError};

use super::hpo::{configured_params, BestParams};
use super::{files, load_cohort, model_path};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{read_json, write_atomic, write_json, write_with};
use crate::seeds::derive_seed;

/// One row of the comparison table. `ibs` and `mean_td_auc` are omitted for families they are
/// not defined for.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub model: String,
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// `study:<sampler>` or `defaults`.
    pub params_source: String,
    pub c_index: f64,
    pub c_index_ipcw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ibs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_td_auc: Option<f64>,
    /// Mean of the first and last defined td-AUC values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint_mean_td_auc: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub model: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub first: f64,
    pub last: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub n_train: usize,
    pub n_test: usize,
    pub tau: f64,
    pub grid: GridSummary,
    pub models: Vec<MetricsRow>,
    pub failed: Vec<Failure>,
}

/// Kaplan–Meier of the test split next to the classifier's mean predicted survival.
#[derive(Debug, Clone, Serialize)]
pub struct HorizonRow {
    pub horizon: f64,
    pub kaplan_meier: f64,
    pub classifier: f64,
    /// Training subjects censored before the horizon and left out of the fit.
    pub excluded: usize,
    pub retained: usize,
}

struct Job {
    name: String,
    family: Family,
    horizon: Option<f64>,
    params: ModelParams,
    source: String,
}

struct Outcome {
    row: MetricsRow,
    model: FittedModel64,
    mean_curve: Option<Vec<f64>>,
    horizon: Option<HorizonRow>,
}

/// Shared evaluation inputs.
struct EvalContext<'a> {
    train: &'a Cohort64,
    test: &'a Cohort64,
    censoring: StepFunction64,
    test_km: StepFunction64,
    tau: f64,
    grid: TimeGrid<f64>,
}

fn horizon_label(h: f64) -> String {
    format!("horizon_classifier_h{h}")
}

fn jobs(config: &RunConfig, best: &BestParams) -> Result<Vec<Job>> {
    let mut out = Vec::new();
    for &family in &config.families {
        let (mut params, source) = match best.get(&family).filter(|_| config.use_best_params) {
            Some(entry) => (entry.params.clone(), format!("study:{}", entry.sampler)),
            None => (configured_params(config, family)?, "defaults".to_string()),
        };
        for (key, value) in config.params.get(&family).into_iter().flatten() {
            params.apply(key, value).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if family == Family::HorizonClassifier {
            for &h in &config.horizons {
                let mut p = params.clone();
                p.apply("horizon", &ParamValue::Float(h))?;
                p.set_seed(derive_seed(config.seed, &format!("model/{}/{h}", family.key())));
                out.push(Job {
                    name: horizon_label(h),
                    family,
                    horizon: Some(h),
                    params: p,
                    source: source.clone(),
                });
            }
        } else {
            params.set_seed(derive_seed(config.seed, &format!("model/{}", family.key())));
            out.push(Job {
                name: family.key().to_string(),
                family,
                horizon: None,
                params,
                source,
            });
        }
    }
    Ok(out)
}

fn evaluate(job: &Job, ctx: &EvalContext<'_>) -> survkit::Result<Outcome> {
    let model = fit(ctx.train, &job.params)?;
    let risk = predict_risk(&model, ctx.test.features())?;
    let targets = ctx.test.targets();
    let c_index = harrell_c(targets, &risk)?.c_index;
    let c_index_ipcw = ipcw_c(targets, &risk, &ctx.censoring, Some(ctx.tau))?.c_index;
    let mut notes = Vec::new();

    let (ibs, mean_curve) = if job.family.has_survival_function() {
        match predict_curve_matrix(&model, ctx.test.features(), &ctx.grid) {
            Ok(m) => {
                let ibs = ibs_from_matrix(&ctx.grid, m.view(), targets, &ctx.censoring)?;
                let mean = m.mean_axis(Axis(0)).expect("non-empty test split").to_vec();
                (Some(ibs), Some(mean))
            }
            Err(e @ SurvError::NoSurvivalFunction(_)) => {
                notes.push(e.to_string());
                (None, None)
            }
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    let (mean_td_auc, endpoint_mean_td_auc) = if job.family.has_native_risk() {
        let auc = td_auc(targets, &risk, &ctx.grid, &ctx.censoring)?;
        (Some(auc.mean), Some(auc.endpoint_mean))
    } else {
        (None, None)
    };

    let horizon = match job.horizon {
        Some(h) => {
            let p_event = risk.iter().sum::<f64>() / risk.len() as f64;
            let excluded = model.excluded().unwrap_or(0);
            Some(HorizonRow {
                horizon: h,
                kaplan_meier: ctx.test_km.eval(h),
                classifier: 1.0 - p_event,
                excluded,
                retained: ctx.train.n_rows() - excluded,
            })
        }
        None => None,
    };

    Ok(Outcome {
        row: MetricsRow {
            model: job.name.clone(),
            family: job.family,
            horizon: job.horizon,
            params_source: job.source.clone(),
            c_index,
            c_index_ipcw,
            ibs,
            mean_td_auc,
            endpoint_mean_td_auc,
            notes,
        },
        model,
        mean_curve,
        horizon,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Table-style CSV; inapplicable metrics are empty fields.
fn metrics_csv(rows: &[MetricsRow]) -> survkit::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "c_index", "c_index_ipcw", "ibs", "mean_td_auc", "endpoint_mean_td_auc"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.c_index.to_string(),
            r.c_index_ipcw.to_string(),
            opt(r.ibs),
            opt(r.mean_td_auc),
            opt(r.endpoint_mean_td_auc),
        ])?;
    }
    w.into_inner().map_err(|e| SurvError::Io(e.into_error()))
}

pub fn run(config: &RunConfig) -> Result<MetricsReport> {
    let train = load_cohort(&config.out.join(files::TRAIN))?;
    let test = load_cohort(&config.out.join(files::TEST))?;
    let best_path = config.out.join(files::BEST_PARAMS);
    let best: BestParams = if config.use_best_params && best_path.exists() {
        read_json(&best_path)?
    } else {
        BestParams::new()
    };

    let censoring = censoring_survival(train.targets())?;
    let tau = match config.tau {
        Some(t) => t,
        None => default_tau(test.targets(), &censoring).ok_or(SurvError::NoEvents)?,
    };
    let grid = TimeGrid::default_for(test.targets(), &censoring, config.grid_resolution)?;
    let ctx = EvalContext {
        train: &train,
        test: &test,
        test_km: kaplan_meier(test.targets())?,
        censoring,
        tau,
        grid,
    };

    let jobs = jobs(config, &best)?;
    let outcomes: Vec<(String, survkit::Result<Outcome>)> = jobs
        .par_iter()
        .map(|job| {
            let started = std::time::Instant::now();
            let result = evaluate(job, &ctx);
            log::info!("{}: {:.1}s", job.name, started.elapsed().as_secs_f64());
            (job.name.clone(), result)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    let mut horizons = Vec::new();
    for (name, result) in outcomes {
        match result {
            Ok(o) => {
                write_with(&model_path(&config.out, &name), |buf| o.model.write_json(buf))?;
                if let Some(c) = o.mean_curve {
                    curves.push((name, c));
                }
                horizons.extend(o.horizon);
                rows.push(o.row);
            }
            Err(e) => {
                log::error!("{name} failed: {e}");
                failed.push(Failure {
                    model: name,
                    error: e.to_string(),
                });
            }
        }
    }

    let report = MetricsReport {
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        tau,
        grid: GridSummary {
            first: ctx.grid.first(),
            last: ctx.grid.last(),
            points: ctx.grid.len(),
        },
        models: rows,
        failed,
    };
    write_json(&config.out.join(files::METRICS_JSON), &report)?;
    write_atomic(&config.out.join(files::METRICS_CSV), &metrics_csv(&report.models)?)?;
    write_atomic(&config.out.join(files::CURVES), &curves_csv(&ctx, &curves)?)?;
    if !horizons.is_empty() {
        write_atomic(&config.out.join(files::HORIZONS), &horizons_csv(&horizons)?)?;
    }
    if report.models.is_empty() {
        return Err(CliError::Training(format!(
            "all {} models failed to train",
            report.failed.len()
        )));
    }
    Ok(report)
}

/// `time,kaplan_meier,<model>...` on the evaluation grid.
fn curves_csv(ctx: &EvalContext<'_>, curves: &[(String, Vec<f64>)]) -> survkit::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string(), "kaplan_meier".to_string()];
    header.extend(curves.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (k, &t) in ctx.grid.times().iter().enumerate() {
        let mut rec = vec![t.to_string(), ctx.test_km.eval(t).to_string()];
        rec.extend(curves.iter().map(|(_, c)| c[k].to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| SurvError::Io(e.into_error()))
}

fn horizons_csv(rows: &[HorizonRow]) -> survkit::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| SurvError::Io(e.into_error()))
}
