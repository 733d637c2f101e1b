//! Ordinal encoding, z-score standardisation, train/validation split and k-fold partitions.

use std::collections::BTreeMap;

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Cohort, ColumnKind, ColumnMeta, RawCohort, RawValues, Rows, SurvivalTarget};
use crate::error::{Result, SurvError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum ColumnEncoder<T> {
    /// Category `categories[k]` maps to rank `k`.
    Ordinal {
        categories: Vec<String>,
        /// No order was configured, so categories were sorted lexicographically.
        lexicographic_fallback: bool,
    },
    Numeric { mean: T, sd: T },
}

/// Fitted per-column encoders, in cohort column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EncoderState<T> {
    pub columns: Vec<(String, ColumnEncoder<T>)>,
}

/// Fits encoders on `train`. Categorical columns use the order from `category_orders` when one
/// is given for the column name, otherwise their observed categories sorted lexicographically.
/// Numeric columns record the mean and population standard deviation.
pub fn fit_encoder<T: Scalar>(
    train: &RawCohort<T>,
    category_orders: &BTreeMap<String, Vec<String>>,
) -> Result<EncoderState<T>> {
    let n = train.n_rows();
    if n == 0 {
        return Err(SurvError::Empty("training cohort"));
    }
    let mut columns = Vec::with_capacity(train.columns().len());
    for col in train.columns() {
        let enc = match &col.values {
            RawValues::Categorical(values) => match category_orders.get(&col.name) {
                Some(order) => {
                    if let Some(bad) = values.iter().find(|v| !order.contains(v)) {
                        return Err(SurvError::UnseenCategory {
                            column: col.name.clone(),
                            category: bad.clone(),
                        });
                    }
                    let mut seen = std::collections::BTreeSet::new();
                    if let Some(dup) = order.iter().find(|c| !seen.insert(*c)) {
                        return Err(SurvError::InvalidInput(format!(
                            "category {dup:?} listed twice for column {}",
                            col.name
                        )));
                    }
                    ColumnEncoder::Ordinal {
                        categories: order.clone(),
                        lexicographic_fallback: false,
                    }
                }
                None => {
                    let mut cats: Vec<String> = values.clone();
                    cats.sort();
                    cats.dedup();
                    warn!(
                        "no category order configured for {}; using lexicographic order",
                        col.name
                    );
                    ColumnEncoder::Ordinal {
                        categories: cats,
                        lexicographic_fallback: true,
                    }
                }
            },
            RawValues::Numeric(values) => {
                let nn = T::of_usize(n);
                let mean = values.iter().copied().sum::<T>() / nn;
                let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nn;
                let sd = var.sqrt();
                if sd == T::zero() {
                    warn!("column {} is constant in training data; encoded as 0", col.name);
                }
                ColumnEncoder::Numeric { mean, sd }
            }
        };
        columns.push((col.name.clone(), enc));
    }
    Ok(EncoderState { columns })
}

impl<T: Scalar> EncoderState<T> {
    /// Names of ordinal columns whose order fell back to lexicographic.
    pub fn fallback_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|(_, e)| {
                matches!(
                    e,
                    ColumnEncoder::Ordinal {
                        lexicographic_fallback: true,
                        ..
                    }
                )
            })
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Encodes a raw cohort: ordinal labels become ranks, numeric values become z-scores
    /// (0 for zero-variance columns). Targets and weights pass through.
    pub fn transform(&self, cohort: &RawCohort<T>) -> Result<Cohort<T>> {
        if cohort.columns().len() != self.columns.len() {
            return Err(SurvError::DimensionMismatch {
                expected: self.columns.len(),
                found: cohort.columns().len(),
            });
        }
        let n = cohort.n_rows();
        let d = self.columns.len();
        let mut features = Array2::zeros((n, d));
        let mut metas = Vec::with_capacity(d);
        for (j, ((name, enc), col)) in self.columns.iter().zip(cohort.columns()).enumerate() {
            if *name != col.name {
                return Err(SurvError::MissingColumn(name.clone()));
            }
            match (enc, &col.values) {
                (ColumnEncoder::Ordinal { categories, .. }, RawValues::Categorical(values)) => {
                    let rank: BTreeMap<&str, usize> = categories
                        .iter()
                        .enumerate()
                        .map(|(k, c)| (c.as_str(), k))
                        .collect();
                    for (i, v) in values.iter().enumerate() {
                        let k = rank.get(v.as_str()).ok_or_else(|| SurvError::UnseenCategory {
                            column: name.clone(),
                            category: v.clone(),
                        })?;
                        features[[i, j]] = T::of_usize(*k);
                    }
                    metas.push(ColumnMeta {
                        name: name.clone(),
                        kind: ColumnKind::Ordinal {
                            categories: categories.clone(),
                        },
                    });
                }
                (ColumnEncoder::Numeric { mean, sd }, RawValues::Numeric(values)) => {
                    for (i, &v) in values.iter().enumerate() {
                        features[[i, j]] = if *sd > T::zero() {
                            (v - *mean) / *sd
                        } else {
                            T::zero()
                        };
                    }
                    metas.push(ColumnMeta::numeric(name.clone()));
                }
                _ => {
                    return Err(SurvError::InvalidInput(format!(
                        "column {name} changed kind between fit and transform"
                    )))
                }
            }
        }
        Cohort::new(
            features,
            metas,
            cohort.targets().to_vec(),
            cohort.weights().map(<[T]>::to_vec),
        )
    }

    /// Maps an encoded numeric value back to its original scale. `None` for ordinal columns and
    /// zero-variance columns.
    pub fn inverse_numeric(&self, column: usize, value: T) -> Option<T> {
        match self.columns.get(column)?.1 {
            ColumnEncoder::Numeric { mean, sd } if sd > T::zero() => Some(value * sd + mean),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Row indices `(train, test)`, each sorted ascending.
pub fn split_indices<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    test_fraction: f64,
    stratify_on_event: bool,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SurvError::InvalidInput(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = targets.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(SurvError::InvalidInput(format!(
            "{n} rows cannot be split with test fraction {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::with_capacity(n_test);
    if stratify_on_event {
        let mut events: Vec<usize> = (0..n).filter(|&i| targets[i].event).collect();
        let mut others: Vec<usize> = (0..n).filter(|&i| !targets[i].event).collect();
        events.shuffle(&mut rng);
        others.shuffle(&mut rng);
        let from_events = ((events.len() * n_test) as f64 / n as f64).round() as usize;
        let from_events = from_events
            .min(events.len())
            .max(n_test.saturating_sub(others.len()));
        test.extend_from_slice(&events[..from_events]);
        test.extend_from_slice(&others[..n_test - from_events]);
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        test.extend_from_slice(&all[..n_test]);
    }
    test.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test {
        in_test[i] = true;
    }
    let train = (0..n).filter(|&i| !in_test[i]).collect();
    Ok((train, test))
}

/// Train/test split of any row-indexable cohort.
pub fn split<T: Scalar, C: Rows<T>>(
    cohort: &C,
    test_fraction: f64,
    stratify_on_event: bool,
    seed: u64,
) -> Result<(C, C)> {
    let (train, test) = split_indices(cohort.targets(), test_fraction, stratify_on_event, seed)?;
    Ok((cohort.select_rows(&train), cohort.select_rows(&test)))
}

fn deal(order: &[usize], k: usize, folds: &mut [Vec<usize>], offset: usize) {
    for (pos, &i) in order.iter().enumerate() {
        folds[(pos + offset) % k].push(i);
    }
}

fn check_folds(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(SurvError::InvalidInput("k must be >= 2".into()));
    }
    if k > n {
        return Err(SurvError::InvalidInput(format!("k = {k} exceeds n = {n}")));
    }
    Ok(())
}

/// `k` disjoint folds covering `0..n` whose sizes differ by at most one; indices sorted within
/// each fold.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    check_folds(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    deal(&order, k, &mut folds, 0);
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Like [`kfold`], with events and non-events dealt separately so every fold carries a similar
/// event rate. Dealing the non-events continues where the events stopped, which keeps fold sizes
/// within one of each other.
pub fn stratified_kfold<T: Scalar>(
    targets: &[SurvivalTarget<T>],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = targets.len();
    check_folds(n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<usize> = (0..n).filter(|&i| targets[i].event).collect();
    let mut others: Vec<usize> = (0..n).filter(|&i| !targets[i].event).collect();
    events.shuffle(&mut rng);
    others.shuffle(&mut rng);
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    deal(&events, k, &mut folds, 0);
    deal(&others, k, &mut folds, events.len() % k);
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Complement of fold `f`: all indices in the other folds, sorted.
pub fn fold_complement(folds: &[Vec<usize>], f: usize) -> Vec<usize> {
    let mut rest: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(g, _)| *g != f)
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    rest.sort_unstable();
    rest
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RawColumn;
    use proptest::prelude::*;

    fn raw(columns: Vec<RawColumn<f64>>, n: usize) -> RawCohort<f64> {
        let targets = (0..n).map(|i| SurvivalTarget::new(i as f64 + 1.0, i % 2 == 0)).collect();
        RawCohort::new(columns, targets, None).unwrap()
    }

    fn numeric(name: &str, v: Vec<f64>) -> RawColumn<f64> {
        RawColumn {
            name: name.into(),
            values: RawValues::Numeric(v),
        }
    }

    fn categorical(name: &str, v: &[&str]) -> RawColumn<f64> {
        RawColumn {
            name: name.into(),
            values: RawValues::Categorical(v.iter().map(|s| s.to_string()).collect()),
        }
    }

    #[test]
    fn staging_order_gives_ranks() {
        let c = raw(vec![categorical("EC", &["III", "I", "IV", "II"])], 4);
        let orders = BTreeMap::from([(
            "EC".to_string(),
            vec!["I".into(), "II".into(), "III".into(), "IV".into()],
        )]);
        let enc = fit_encoder(&c, &orders).unwrap();
        let out = enc.transform(&c).unwrap();
        assert_eq!(out.features().column(0).to_vec(), vec![2.0, 0.0, 3.0, 1.0]);
        assert!(enc.fallback_columns().is_empty());
    }

    #[test]
    fn lexicographic_fallback_is_flagged() {
        let c = raw(vec![categorical("TOPO", &["C20", "C18", "C19"])], 3);
        let enc = fit_encoder(&c, &BTreeMap::new()).unwrap();
        assert_eq!(enc.fallback_columns(), vec!["TOPO"]);
        let out = enc.transform(&c).unwrap();
        assert_eq!(out.features().column(0).to_vec(), vec![2.0, 0.0, 1.0]);
    }

    #[test]
    fn population_sd_and_scaling() {
        let c = raw(vec![numeric("a", vec![2.0, 4.0])], 2);
        let enc = fit_encoder(&c, &BTreeMap::new()).unwrap();
        assert_eq!(enc.columns[0].1, ColumnEncoder::Numeric { mean: 3.0, sd: 1.0 });
        let test = raw(vec![numeric("a", vec![3.0, 4.0])], 2);
        let out = enc.transform(&test).unwrap();
        assert_eq!(out.features().column(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(enc.inverse_numeric(0, 1.0), Some(4.0));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let c = raw(vec![numeric("a", vec![5.0, 5.0, 5.0])], 3);
        let enc = fit_encoder(&c, &BTreeMap::new()).unwrap();
        assert_eq!(enc.columns[0].1, ColumnEncoder::Numeric { mean: 5.0, sd: 0.0 });
        let other = raw(vec![numeric("a", vec![1.0, 9.0, 5.0])], 3);
        assert!(enc.transform(&other).unwrap().features().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unseen_category_names_column() {
        let c = raw(vec![categorical("EC", &["I", "II"])], 2);
        let enc = fit_encoder(&c, &BTreeMap::new()).unwrap();
        let other = raw(vec![categorical("EC", &["I", "X"])], 2);
        match enc.transform(&other) {
            Err(SurvError::UnseenCategory { column, category }) => {
                assert_eq!((column.as_str(), category.as_str()), ("EC", "X"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_cohort_rejected() {
        let c = raw(vec![numeric("a", vec![])], 0);
        assert!(matches!(fit_encoder(&c, &BTreeMap::new()), Err(SurvError::Empty(_))));
    }

    #[test]
    fn encoder_json_round_trip() {
        let c = raw(
            vec![numeric("a", vec![1.0, 2.5, 4.0]), categorical("b", &["x", "y", "x"])],
            3,
        );
        let enc = fit_encoder(&c, &BTreeMap::new()).unwrap();
        assert_eq!(EncoderState::from_json(&enc.to_json().unwrap()).unwrap(), enc);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let t: Vec<SurvivalTarget<f64>> = (0..10).map(|i| SurvivalTarget::new(i as f64, i < 4)).collect();
        for strat in [false, true] {
            let (tr, te) = split_indices(&t, 0.2, strat, 7).unwrap();
            assert_eq!((tr.len(), te.len()), (8, 2));
            assert_eq!(split_indices(&t, 0.2, strat, 7).unwrap(), (tr, te));
        }
        assert!(split_indices(&t[..1], 0.2, false, 0).is_err());
        assert!(split_indices(&t, 0.0, false, 0).is_err());
    }

    #[test]
    fn stratified_split_keeps_event_rate() {
        let t: Vec<SurvivalTarget<f64>> =
            (0..10_000).map(|i| SurvivalTarget::new(1.0, i % 5 < 2)).collect();
        let (_, te) = split_indices(&t, 0.2, true, 3).unwrap();
        let rate = te.iter().filter(|&&i| t[i].event).count() as f64 / te.len() as f64;
        assert!((0.39..=0.41).contains(&rate), "{rate}");
    }

    #[test]
    fn kfold_examples() {
        let folds = kfold(10, 10, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        let mut sizes: Vec<usize> = kfold(10, 3, 1).unwrap().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        assert_eq!(kfold(10, 3, 5).unwrap(), kfold(10, 3, 5).unwrap());
        assert!(kfold(3, 4, 0).is_err());
        assert!(kfold(3, 1, 0).is_err());
    }

    fn is_partition(folds: &[Vec<usize>], n: usize) -> bool {
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        all == (0..n).collect::<Vec<_>>()
    }

    proptest! {
        #[test]
        fn kfold_partitions(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = kfold(n, k, seed).unwrap();
            prop_assert!(is_partition(&folds, n));
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn stratified_kfold_partitions(events in proptest::collection::vec(any::<bool>(), 2..200), k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= events.len());
            let t: Vec<SurvivalTarget<f64>> = events.iter().map(|&e| SurvivalTarget::new(1.0, e)).collect();
            let folds = stratified_kfold(&t, k, seed).unwrap();
            prop_assert!(is_partition(&folds, t.len()));
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn split_partitions(n in 2usize..400, frac in 0.05f64..0.95, strat in any::<bool>(), seed in any::<u64>()) {
            let t: Vec<SurvivalTarget<f64>> = (0..n).map(|i| SurvivalTarget::new(1.0, i % 3 == 0)).collect();
            if let Ok((tr, te)) = split_indices(&t, frac, strat, seed) {
                prop_assert!(is_partition(&[tr, te], n));
            }
        }

        #[test]
        fn zscores_standardise_and_invert(v in proptest::collection::vec(-1e3f64..1e3, 2..100)) {
            let n = v.len();
            let c = raw(vec![numeric("a", v.clone())], n);
            let enc = fit_encoder(&c, &BTreeMap::new()).unwrap();
            let ColumnEncoder::Numeric { sd, .. } = enc.columns[0].1 else { unreachable!() };
            prop_assume!(sd > 1e-6);
            let z = enc.transform(&c).unwrap().features().column(0).to_vec();
            let mean = z.iter().sum::<f64>() / n as f64;
            let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
            for (zi, vi) in z.iter().zip(&v) {
                let back = enc.inverse_numeric(0, *zi).unwrap();
                prop_assert!((back - vi).abs() <= 1e-9 * (1.0 + vi.abs()));
            }
        }
    }
}
