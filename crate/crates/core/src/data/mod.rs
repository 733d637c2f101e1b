//! Cohort types, registry ingestion and synthetic data.

mod registry;
mod synth;

pub use registry::{
    apply_filters, assemble_cohort, build_targets, categorize_interval, ingest_csv, interval_days, write_records,
    AssemblyReport, CohortConfig, FilterReport, FilterRules, IntervalCategory, RawRecord,
    RegistryColumn, RemovalCounts, Schema, SchemaField, TargetConfig, DEFAULT_DAYS_PER_MONTH,
    INTERVAL_COLUMNS,
};
pub use synth::{synth_cohort, synth_registry, SynthModel, SyntheticCohort};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};
use crate::scalar::Scalar;

/// Observed follow-up time (months) and whether it ended in death.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SurvivalTarget<T> {
    pub time: T,
    pub event: bool,
}

impl<T: Scalar> SurvivalTarget<T> {
    pub fn new(time: T, event: bool) -> Self {
        Self { time, event }
    }

    pub fn from_pairs(pairs: &[(f64, bool)]) -> Vec<Self> {
        pairs.iter().map(|&(t, e)| Self::new(T::of(t), e)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// Categories listed from lowest to highest rank.
    Ordinal { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
        }
    }
}

/// Encoded cohort: an `n x d` real matrix with targets and optional sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort<T> {
    features: Array2<T>,
    columns: Vec<ColumnMeta>,
    targets: Vec<SurvivalTarget<T>>,
    weights: Option<Vec<T>>,
}

impl<T: Scalar> Cohort<T> {
    pub fn new(
        features: Array2<T>,
        columns: Vec<ColumnMeta>,
        targets: Vec<SurvivalTarget<T>>,
        weights: Option<Vec<T>>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if columns.len() != d {
            return Err(SurvError::LengthMismatch {
                expected: d,
                found: columns.len(),
            });
        }
        if targets.len() != n {
            return Err(SurvError::LengthMismatch {
                expected: n,
                found: targets.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SurvError::NonFinite("feature matrix".into()));
        }
        if targets
            .iter()
            .any(|t| !t.time.is_finite() || t.time < T::zero())
        {
            return Err(SurvError::InvalidInput(
                "survival times must be finite and >= 0".into(),
            ));
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(SurvError::LengthMismatch {
                    expected: n,
                    found: w.len(),
                });
            }
            if w.iter().any(|v| !v.is_finite() || *v < T::zero()) {
                return Err(SurvError::InvalidInput("weights must be >= 0".into()));
            }
            if n > 0 && w.iter().all(|v| *v == T::zero()) {
                return Err(SurvError::InvalidInput("weights are all zero".into()));
            }
        }
        Ok(Self {
            features,
            columns,
            targets,
            weights,
        })
    }

    /// Cohort with unnamed numeric columns `x0, x1, ...`.
    pub fn from_matrix(features: Array2<T>, targets: Vec<SurvivalTarget<T>>) -> Result<Self> {
        let columns = (0..features.ncols())
            .map(|j| ColumnMeta::numeric(format!("x{j}")))
            .collect();
        Self::new(features, columns, targets, None)
    }

    pub fn features(&self) -> ArrayView2<'_, T> {
        self.features.view()
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn targets(&self) -> &[SurvivalTarget<T>] {
        &self.targets
    }

    pub fn weights(&self) -> Option<&[T]> {
        self.weights.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_events(&self) -> usize {
        self.targets.iter().filter(|t| t.event).count()
    }

    pub fn with_weights(mut self, weights: Option<Vec<T>>) -> Result<Self> {
        let features = std::mem::take(&mut self.features);
        Self::new(features, self.columns, self.targets, weights)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            columns: self.columns.clone(),
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| rows.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Writes features followed by `time,event` columns.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.column_names();
        header.push("time".into());
        header.push("event".into());
        if self.weights.is_some() {
            header.push("weight".into());
        }
        w.write_record(&header)?;
        for (i, row) in self.features.outer_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(self.targets[i].time.to_string());
            rec.push(if self.targets[i].event { "1" } else { "0" }.into());
            if let Some(wt) = &self.weights {
                rec.push(wt[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout produced by [`Cohort::write_csv`]. Every column other than `time`,
    /// `event` and `weight` is a numeric feature.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let find = |name: &str| header.iter().position(|h| h == name);
        let time_col = find("time").ok_or_else(|| SurvError::MissingColumn("time".into()))?;
        let event_col = find("event").ok_or_else(|| SurvError::MissingColumn("event".into()))?;
        let weight_col = find("weight");
        let feature_cols: Vec<usize> = (0..header.len())
            .filter(|&j| j != time_col && j != event_col && Some(j) != weight_col)
            .collect();
        let mut values = Vec::new();
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let parse = |s: &str, what: &str| -> Result<T> {
            s.trim()
                .parse::<f64>()
                .map(T::of)
                .map_err(|_| SurvError::InvalidInput(format!("cannot parse {what} value {s:?}")))
        };
        for rec in rdr.records() {
            let rec = rec?;
            for &j in &feature_cols {
                values.push(parse(&rec[j], &header[j])?);
            }
            let event = match rec[event_col].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(SurvError::InvalidInput(format!(
                        "event must be 0 or 1, got {other:?}"
                    )))
                }
            };
            targets.push(SurvivalTarget::new(parse(&rec[time_col], "time")?, event));
            if let Some(wc) = weight_col {
                weights.push(parse(&rec[wc], "weight")?);
            }
        }
        if targets.is_empty() {
            return Err(SurvError::NoDataRows);
        }
        let features = Array2::from_shape_vec((targets.len(), feature_cols.len()), values)
            .map_err(|e| SurvError::InvalidInput(e.to_string()))?;
        let columns = feature_cols
            .iter()
            .map(|&j| ColumnMeta::numeric(&header[j]))
            .collect();
        Self::new(
            features,
            columns,
            targets,
            weight_col.map(|_| weights),
        )
    }
}

/// Column values before encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValues<T> {
    Numeric(Vec<T>),
    Categorical(Vec<String>),
}

impl<T> RawValues<T> {
    pub fn len(&self) -> usize {
        match self {
            RawValues::Numeric(v) => v.len(),
            RawValues::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn<T> {
    pub name: String,
    pub values: RawValues<T>,
}

/// Column-major cohort whose categorical columns still hold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCohort<T> {
    columns: Vec<RawColumn<T>>,
    targets: Vec<SurvivalTarget<T>>,
    weights: Option<Vec<T>>,
}

impl<T: Scalar> RawCohort<T> {
    pub fn new(
        columns: Vec<RawColumn<T>>,
        targets: Vec<SurvivalTarget<T>>,
        weights: Option<Vec<T>>,
    ) -> Result<Self> {
        let n = targets.len();
        for c in &columns {
            if c.values.len() != n {
                return Err(SurvError::LengthMismatch {
                    expected: n,
                    found: c.values.len(),
                });
            }
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(SurvError::LengthMismatch {
                    expected: n,
                    found: w.len(),
                });
            }
        }
        Ok(Self {
            columns,
            targets,
            weights,
        })
    }

    pub fn columns(&self) -> &[RawColumn<T>] {
        &self.columns
    }

    pub fn targets(&self) -> &[SurvivalTarget<T>] {
        &self.targets
    }

    pub fn weights(&self) -> Option<&[T]> {
        self.weights.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| RawColumn {
                name: c.name.clone(),
                values: match &c.values {
                    RawValues::Numeric(v) => RawValues::Numeric(rows.iter().map(|&i| v[i]).collect()),
                    RawValues::Categorical(v) => {
                        RawValues::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
                    }
                },
            })
            .collect();
        Self {
            columns,
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| rows.iter().map(|&i| w[i]).collect()),
        }
    }
}

/// Row-indexable cohort, used by the splitting helpers.
pub trait Rows<T>: Sized {
    fn n_rows(&self) -> usize;
    fn targets(&self) -> &[SurvivalTarget<T>];
    fn select_rows(&self, rows: &[usize]) -> Self;
}

impl<T: Scalar> Rows<T> for Cohort<T> {
    fn n_rows(&self) -> usize {
        Cohort::n_rows(self)
    }
    fn targets(&self) -> &[SurvivalTarget<T>] {
        Cohort::targets(self)
    }
    fn select_rows(&self, rows: &[usize]) -> Self {
        Cohort::select_rows(self, rows)
    }
}

impl<T: Scalar> Rows<T> for RawCohort<T> {
    fn n_rows(&self) -> usize {
        RawCohort::n_rows(self)
    }
    fn targets(&self) -> &[SurvivalTarget<T>] {
        RawCohort::targets(self)
    }
    fn select_rows(&self, rows: &[usize]) -> Self {
        RawCohort::select_rows(self, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cohort_rejects_bad_weights() {
        let x = array![[1.0], [2.0]];
        let t = SurvivalTarget::from_pairs(&[(1.0, true), (2.0, false)]);
        assert!(Cohort::from_matrix(x.clone(), t.clone())
            .unwrap()
            .with_weights(Some(vec![0.0, 0.0]))
            .is_err());
        assert!(Cohort::from_matrix(x.clone(), t.clone())
            .unwrap()
            .with_weights(Some(vec![-1.0, 1.0]))
            .is_err());
        assert!(Cohort::from_matrix(x, t)
            .unwrap()
            .with_weights(Some(vec![0.0, 1.0]))
            .is_ok());
    }

    #[test]
    fn cohort_rejects_non_finite_features() {
        let x = array![[1.0], [f64::NAN]];
        let t = SurvivalTarget::from_pairs(&[(1.0, true), (2.0, false)]);
        assert!(Cohort::from_matrix(x, t).is_err());
    }

    #[test]
    fn cohort_csv_round_trip() {
        let x = array![[1.5, -2.0], [0.1, 3.0]];
        let t = SurvivalTarget::from_pairs(&[(1.25, true), (2.0, false)]);
        let c = Cohort::from_matrix(x, t)
            .unwrap()
            .with_weights(Some(vec![1.0, 0.5]))
            .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = Cohort::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }
}
