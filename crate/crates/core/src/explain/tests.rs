use ndarray::{array, s, Array1, Array2};

use super::*;
use crate::data::{synth_cohort, SurvivalTarget, SynthModel};
use crate::models::{fit, Family, ModelParams, ParamValue};

/// Risk = sum_j g_j(x_j) with a few nonlinear per-feature terms.
struct Additive;

fn g(j: usize, x: f64) -> f64 {
    match j {
        0 => x * x,
        1 => (2.0 * x).sin(),
        2 => 3.0 * x,
        _ => 0.0,
    }
}

impl RiskModel<f64> for Additive {
    fn n_features(&self) -> usize {
        4
    }

    fn predict_risk(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(x.outer_iter().map(|r| (0..4).map(|j| g(j, r[j])).sum()).collect())
    }
}

struct Linear(Vec<f64>);

impl RiskModel<f64> for Linear {
    fn n_features(&self) -> usize {
        self.0.len()
    }

    fn predict_risk(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(x.outer_iter().map(|r| r.iter().zip(&self.0).map(|(a, b)| a * b).sum()).collect())
    }
}

/// `x0 * x1 + x2`, symmetric in the first two features.
struct Product;

impl RiskModel<f64> for Product {
    fn n_features(&self) -> usize {
        3
    }

    fn predict_risk(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(x.outer_iter().map(|r| r[0] * r[1] + r[2]).collect())
    }
}

fn background(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let c = synth_cohort::<f64>(n, d, SynthModel::ProportionalHazards, &vec![0.0; d], 0.0, seed).unwrap();
    c.cohort.features().to_owned()
}

#[test]
fn additive_model_gets_centred_terms() {
    let bg = background(50, 4, 1);
    let x = array![0.3, -1.2, 0.8, 5.0];
    let phi = shapley_values(&Additive, x.view(), bg.view(), ShapleyMode::Exact, 0).unwrap();
    for j in 0..4 {
        let want = g(j, x[j]) - bg.column(j).iter().map(|&b| g(j, b)).sum::<f64>() / 50.0;
        assert!((phi.values[j] - want).abs() < 1e-12, "feature {j}");
    }
    assert!(phi.residual.abs() < 1e-9);
    assert_eq!(phi.values[3], 0.0);
}

#[test]
fn symmetric_features_share_credit() {
    // the value function is symmetric only if the background treats both columns alike
    let mut bg = background(40, 3, 2);
    let first = bg.column(0).to_owned();
    bg.column_mut(1).assign(&first);
    let x = array![0.7, 0.7, -0.2];
    let phi = shapley_values(&Product, x.view(), bg.view(), ShapleyMode::Exact, 0).unwrap();
    assert!((phi.values[0] - phi.values[1]).abs() < 1e-12);
}

fn tree_model(d: usize) -> (crate::models::FittedModel<f64>, Cohort<f64>) {
    let mut beta = vec![0.0; d];
    beta[0] = 1.0;
    beta[1] = -0.7;
    beta[2] = 0.4;
    let cohort = synth_cohort::<f64>(400, d, SynthModel::ProportionalHazards, &beta, 0.3, 3)
        .unwrap()
        .cohort;
    let mut params = ModelParams::default_for(Family::GbCox);
    params.apply("n_rounds", &ParamValue::Int(30)).unwrap();
    params.apply("max_depth", &ParamValue::Int(3)).unwrap();
    (fit(&cohort, &params).unwrap(), cohort)
}

#[test]
fn exact_values_are_efficient_on_trees() {
    let (model, cohort) = tree_model(6);
    let bg = background_sample(&cohort, 30, 4).unwrap();
    for r in [0, 7, 33] {
        let phi = shapley_values(&model, cohort.features().row(r), bg.view(), ShapleyMode::Exact, 0).unwrap();
        assert!(phi.residual.abs() < 1e-9, "{}", phi.residual);
    }
}

#[test]
fn monte_carlo_tracks_exact() {
    let (model, cohort) = tree_model(6);
    let bg = background_sample(&cohort, 30, 5).unwrap();
    let features = cohort.features();
    let x = features.row(11);
    let exact = shapley_values(&model, x, bg.view(), ShapleyMode::Exact, 0).unwrap();
    let mc = shapley_values(&model, x, bg.view(), ShapleyMode::MonteCarlo { n_permutations: 2000 }, 6).unwrap();
    let scale = exact.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = exact
        .values
        .iter()
        .zip(&mc.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(worst < 0.02 * scale, "{worst} vs {scale}");
    assert!(mc.residual.abs() < 0.05 * (mc.full - mc.base).abs().max(1e-12));
}

#[test]
fn exact_mode_caps_the_feature_count() {
    let model = Linear(vec![1.0; 13]);
    let bg = Array2::zeros((2, 13));
    let x = Array1::zeros(13);
    assert!(matches!(
        shapley_values(&model, x.view(), bg.view(), ShapleyMode::Exact, 0),
        Err(SurvError::TooManyFeatures(13))
    ));
}

fn cohort_from(x: Array2<f64>, targets: Vec<SurvivalTarget<f64>>) -> Cohort<f64> {
    Cohort::from_matrix(x, targets).unwrap()
}

#[test]
fn permutation_importance_of_a_single_feature_model() {
    let base = synth_cohort::<f64>(1000, 3, SynthModel::ProportionalHazards, &[1.5, 0.0, 0.0], 0.3, 7).unwrap();
    let x = base.cohort.features().to_owned();
    let mut with_copy = Array2::zeros((1000, 4));
    with_copy.slice_mut(s![.., ..3]).assign(&x);
    with_copy.column_mut(3).assign(&x.column(0));
    let cohort = cohort_from(with_copy, base.cohort.targets().to_vec());
    let model = Linear(vec![1.0, 0.0, 0.0, 0.0]);
    let config = PermutationConfig {
        n_repeats: 20,
        seed: 3,
        ..PermutationConfig::default()
    };
    let report = permutation_importance(&model, &cohort, &config).unwrap();
    let baseline = report.baseline.unwrap();
    assert!((report.features[0].value - (baseline - 0.5)).abs() < 0.03);
    for j in 1..4 {
        assert_eq!(report.features[j].value, 0.0, "feature {j}");
    }
    assert_eq!(report.ranking()[0], 0);
    assert_eq!(report, permutation_importance(&model, &cohort, &config).unwrap());

    let identity = PermutationConfig {
        permutation: Permutation::Identity,
        ..config
    };
    let report = permutation_importance(&model, &cohort, &identity).unwrap();
    assert!(report.features.iter().all(|f| f.value == 0.0 && f.dispersion == 0.0));
}

#[test]
fn global_attribution_properties() {
    let base = synth_cohort::<f64>(200, 3, SynthModel::ProportionalHazards, &[1.0, 0.0, 0.0], 0.3, 8).unwrap();
    let cohort = base.cohort;
    let bg = background_sample(&cohort, 50, 1).unwrap();
    let model = Linear(vec![2.0, 0.0, -0.5]);
    let report = global_attribution(&model, &cohort, bg.view(), 40, ShapleyMode::Exact, 2).unwrap();
    assert!(report.features[1].value < 1e-9);
    assert_eq!(report.ranking(), vec![0, 2, 1]);

    let one = cohort.select_rows(&[5]);
    let report = global_attribution(&model, &one, bg.view(), 1, ShapleyMode::Exact, 2).unwrap();
    let phi = shapley_values(&model, one.features().row(0), bg.view(), ShapleyMode::Exact, 0).unwrap();
    for j in 0..3 {
        assert_eq!(report.features[j].value, phi.values[j].abs());
    }
    assert!(global_attribution(&model, &one, bg.view(), 2, ShapleyMode::Exact, 2).is_err());
}

#[test]
fn linear_attribution_ranks_by_scaled_coefficients() {
    // columns with different spreads, so |beta| alone would rank differently
    let base = synth_cohort::<f64>(500, 3, SynthModel::ProportionalHazards, &[0.0; 3], 0.3, 9).unwrap();
    let mut x = base.cohort.features().to_owned();
    x.column_mut(0).mapv_inplace(|v| v * 0.1);
    x.column_mut(2).mapv_inplace(|v| v * 4.0);
    let cohort = cohort_from(x, base.cohort.targets().to_vec());
    let beta = vec![3.0, 1.0, 0.5];
    let model = Linear(beta.clone());
    let bg = background_sample(&cohort, 100, 3).unwrap();
    let report = global_attribution(&model, &cohort, bg.view(), 200, ShapleyMode::Exact, 4).unwrap();
    let scaled: Vec<f64> = (0..3)
        .map(|j| {
            let col = cohort.features().column(j).to_vec();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            beta[j].abs() * sd
        })
        .collect();
    let mut want: Vec<usize> = (0..3).collect();
    want.sort_by(|&a, &b| scaled[b].total_cmp(&scaled[a]));
    assert_eq!(report.ranking(), want);
}

#[test]
fn report_csv_layout() {
    let report = ImportanceReport {
        kind: ReportKind::Shapley,
        baseline: None,
        features: vec![
            FeatureImportance {
                feature: "age".into(),
                value: 0.1,
                dispersion: 0.01,
                raw: vec![],
            },
            FeatureImportance {
                feature: "stage".into(),
                value: 0.4,
                dispersion: 0.02,
                raw: vec![],
            },
        ],
    };
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "feature,value,dispersion\nstage,0.4,0.02\nage,0.1,0.01\n"
    );
}
