//! Feature attribution for risk scores: permutation importance and Shapley values.
//!
//! Shapley values use the interventional value function
//! `v(S) = mean_b risk(x_S, b_{not S})` over a background sample, so every model family is
//! handled the same way.

use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Result, SurvError};
use crate::estimators::censoring_survival;
use crate::metrics::{harrell_c, ipcw_c};
use crate::models::RiskModel;
use crate::scalar::Scalar;

/// Largest feature count for exact subset enumeration.
pub const MAX_EXACT_FEATURES: usize = 12;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean score drop (permutation) or mean |phi| (Shapley).
    pub value: f64,
    /// Standard deviation of the raw values.
    pub dispersion: f64,
    /// Per-repeat drops or per-row |phi|.
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Permutation,
    Shapley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub kind: ReportKind,
    /// Metric on the intact data (permutation importance only).
    pub baseline: Option<f64>,
    /// One entry per model feature, in column order.
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    /// Feature indices from most to least important; ties keep column order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.features.len()).collect();
        idx.sort_by(|&a, &b| self.features[b].value.total_cmp(&self.features[a].value).then(a.cmp(&b)));
        idx
    }

    /// `feature,value,dispersion`, one row per feature in ranking order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "value", "dispersion"])?;
        for i in self.ranking() {
            let f = &self.features[i];
            w.write_record([f.feature.clone(), f.value.to_string(), f.dispersion.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    #[default]
    HarrellC,
    /// Uno's concordance with the censoring distribution of the evaluation cohort.
    IpcwC,
}

/// How each column is reordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Permutation {
    #[default]
    Shuffle,
    /// Leaves the column in place; every importance is then exactly 0.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationConfig {
    pub metric: ImportanceMetric,
    pub n_repeats: usize,
    pub seed: u64,
    pub permutation: Permutation,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            metric: ImportanceMetric::HarrellC,
            n_repeats: 10,
            seed: 0,
            permutation: Permutation::Shuffle,
        }
    }
}

fn metric_value<T: Scalar>(eval: &Cohort<T>, risks: &[T], metric: ImportanceMetric) -> Result<f64> {
    Ok(match metric {
        ImportanceMetric::HarrellC => harrell_c(eval.targets(), risks)?.c_index,
        ImportanceMetric::IpcwC => {
            let g = censoring_survival(eval.targets())?;
            ipcw_c(eval.targets(), risks, &g, None)?.c_index
        }
    })
}

/// Drop in the metric when one column at a time is shuffled. Repeat `r` of feature `j` uses
/// the random stream `j * n_repeats + r`.
pub fn permutation_importance<T: Scalar, M: RiskModel<T> + ?Sized>(
    model: &M,
    eval: &Cohort<T>,
    config: &PermutationConfig,
) -> Result<ImportanceReport> {
    if eval.n_rows() == 0 {
        return Err(SurvError::Empty("evaluation cohort"));
    }
    if config.n_repeats == 0 {
        return Err(SurvError::InvalidInput("n_repeats must be >= 1".into()));
    }
    let x = eval.features();
    let baseline = metric_value(eval, &model.predict_risk(x)?, config.metric)?;
    let names = eval.column_names();
    let n = eval.n_rows();
    let features = (0..eval.n_features())
        .into_par_iter()
        .map(|j| {
            let mut drops = Vec::with_capacity(config.n_repeats);
            let mut shuffled = x.to_owned();
            for r in 0..config.n_repeats {
                let mut order: Vec<usize> = (0..n).collect();
                if config.permutation == Permutation::Shuffle {
                    let stream = (j * config.n_repeats + r) as u64;
                    order.shuffle(&mut stream_rng(config.seed, stream));
                }
                for (i, &src) in order.iter().enumerate() {
                    shuffled[[i, j]] = x[[src, j]];
                }
                let value = metric_value(eval, &model.predict_risk(shuffled.view())?, config.metric)?;
                drops.push(baseline - value);
            }
            let (value, dispersion) = mean_sd(&drops);
            Ok(FeatureImportance {
                feature: names[j].clone(),
                value,
                dispersion,
                raw: drops,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceReport {
        kind: ReportKind::Permutation,
        baseline: Some(baseline),
        features,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyMode {
    Exact,
    /// Antithetic pairs of random feature orderings.
    MonteCarlo { n_permutations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    pub values: Vec<f64>,
    /// `v(empty)`: mean background risk.
    pub base: f64,
    /// `v(all)`: risk of the instance.
    pub full: f64,
    /// `sum(values) - (full - base)`.
    pub residual: f64,
}

/// Hybrid rows for each coalition mask in `masks`, `background.nrows()` rows per mask.
fn hybrid_rows<T: Scalar>(instance: ArrayView1<'_, T>, background: ArrayView2<'_, T>, masks: &[Vec<bool>]) -> Array2<T> {
    let (nb, d) = background.dim();
    let mut out = Array2::zeros((masks.len() * nb, d));
    for (m, mask) in masks.iter().enumerate() {
        for b in 0..nb {
            let mut row = out.row_mut(m * nb + b);
            for j in 0..d {
                row[j] = if mask[j] { instance[j] } else { background[[b, j]] };
            }
        }
    }
    out
}

/// Coalition values for `masks`, each the mean risk over the background.
fn coalition_values<T: Scalar, M: RiskModel<T> + ?Sized>(
    model: &M,
    instance: ArrayView1<'_, T>,
    background: ArrayView2<'_, T>,
    masks: &[Vec<bool>],
) -> Result<Vec<f64>> {
    let nb = background.nrows();
    let rows = hybrid_rows(instance, background, masks);
    let risk = model.predict_risk(rows.view())?;
    Ok(risk
        .chunks(nb)
        .map(|c| c.iter().map(|r| r.as_f64()).sum::<f64>() / nb as f64)
        .collect())
}

/// Shapley attribution of one instance's risk.
pub fn shapley_values<T: Scalar, M: RiskModel<T> + ?Sized>(
    model: &M,
    instance: ArrayView1<'_, T>,
    background: ArrayView2<'_, T>,
    mode: ShapleyMode,
    seed: u64,
) -> Result<ShapleyValues> {
    let d = model.n_features();
    if instance.len() != d || background.ncols() != d {
        return Err(SurvError::DimensionMismatch {
            expected: d,
            found: if instance.len() != d { instance.len() } else { background.ncols() },
        });
    }
    if background.nrows() == 0 {
        return Err(SurvError::Empty("background sample"));
    }
    let (values, base, full) = match mode {
        ShapleyMode::Exact => exact(model, instance, background)?,
        ShapleyMode::MonteCarlo { n_permutations } => monte_carlo(model, instance, background, n_permutations, seed)?,
    };
    let residual = values.iter().sum::<f64>() - (full - base);
    Ok(ShapleyValues {
        values,
        base,
        full,
        residual,
    })
}

fn exact<T: Scalar, M: RiskModel<T> + ?Sized>(
    model: &M,
    instance: ArrayView1<'_, T>,
    background: ArrayView2<'_, T>,
) -> Result<(Vec<f64>, f64, f64)> {
    let d = model.n_features();
    if d > MAX_EXACT_FEATURES {
        return Err(SurvError::TooManyFeatures(d));
    }
    let n_sets = 1usize << d;
    let masks: Vec<Vec<bool>> = (0..n_sets)
        .map(|s| (0..d).map(|j| s >> j & 1 == 1).collect())
        .collect();
    // evaluate in chunks to bound the hybrid matrix size
    let chunk = (1usize << 16).div_ceil(background.nrows()).max(1);
    let v: Vec<f64> = masks
        .par_chunks(chunk)
        .map(|c| coalition_values(model, instance, background, c))
        .collect::<Result<Vec<_>>>()?
        .concat();
    // weight |S|! (d - |S| - 1)! / d!
    let mut fact = vec![1.0f64; d + 1];
    for k in 1..=d {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - s - 1] / fact[d]).collect();
    let mut phi = vec![0.0; d];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for s in 0..n_sets {
            if s & bit == 0 {
                *p += weight[s.count_ones() as usize] * (v[s | bit] - v[s]);
            }
        }
    }
    Ok((phi, v[0], v[n_sets - 1]))
}

fn monte_carlo<T: Scalar, M: RiskModel<T> + ?Sized>(
    model: &M,
    instance: ArrayView1<'_, T>,
    background: ArrayView2<'_, T>,
    n_permutations: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64, f64)> {
    let d = model.n_features();
    if n_permutations == 0 {
        return Err(SurvError::InvalidInput("n_permutations must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(n_permutations);
    while orders.len() < n_permutations {
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut rng);
        let reversed: Vec<usize> = order.iter().rev().copied().collect();
        orders.push(order);
        if orders.len() < n_permutations {
            orders.push(reversed);
        }
    }
    let contributions = orders
        .par_iter()
        .map(|order| {
            let mut mask = vec![false; d];
            let mut masks = Vec::with_capacity(d + 1);
            masks.push(mask.clone());
            for &j in order {
                mask[j] = true;
                masks.push(mask.clone());
            }
            let v = coalition_values(model, instance, background, &masks)?;
            let mut phi = vec![0.0; d];
            for (k, &j) in order.iter().enumerate() {
                phi[j] = v[k + 1] - v[k];
            }
            Ok((phi, v[0], v[d]))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = contributions.len() as f64;
    let mut phi = vec![0.0; d];
    for (c, _, _) in &contributions {
        phi.iter_mut().zip(c).for_each(|(p, v)| *p += v / m);
    }
    let (_, base, full) = contributions[0];
    Ok((phi, base, full))
}

/// Seeded rows of `cohort` used as the Shapley background.
pub fn background_sample<T: Scalar>(cohort: &Cohort<T>, size: usize, seed: u64) -> Result<Array2<T>> {
    if cohort.n_rows() == 0 {
        return Err(SurvError::Empty("background cohort"));
    }
    let k = size.min(cohort.n_rows());
    let mut rows = sample(&mut ChaCha8Rng::seed_from_u64(seed), cohort.n_rows(), k).into_vec();
    rows.sort_unstable();
    Ok(cohort.features().select(ndarray::Axis(0), &rows))
}

/// Mean |phi| per feature over `sample_size` seeded rows of `eval`. Row `i` of the subsample
/// uses the random stream `i`, so results do not depend on the thread count.
pub fn global_attribution<T: Scalar, M: RiskModel<T> + ?Sized>(
    model: &M,
    eval: &Cohort<T>,
    background: ArrayView2<'_, T>,
    sample_size: usize,
    mode: ShapleyMode,
    seed: u64,
) -> Result<ImportanceReport> {
    let n = eval.n_rows();
    if sample_size == 0 || sample_size > n {
        return Err(SurvError::InvalidInput(format!(
            "sample size must lie in 1..={n}, got {sample_size}"
        )));
    }
    let mut rows = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, sample_size).into_vec();
    rows.sort_unstable();
    let x = eval.features();
    let per_row = rows
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let row_seed = rand::RngCore::next_u64(&mut stream_rng(seed, i as u64 + 1));
            shapley_values(model, x.row(r), background, mode, row_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let names = eval.column_names();
    let features = (0..model.n_features())
        .map(|j| {
            let raw: Vec<f64> = per_row.iter().map(|s| s.values[j].abs()).collect();
            let (value, dispersion) = mean_sd(&raw);
            FeatureImportance {
                feature: names[j].clone(),
                value,
                dispersion,
                raw,
            }
        })
        .collect();
    Ok(ImportanceReport {
        kind: ReportKind::Shapley,
        baseline: None,
        features,
    })
}

#[cfg(test)]
mod tests;
