use super::*;
use crate::data::{synth_cohort, SynthModel};
use crate::models::ParamValue;

fn float_of(v: &ParamValue) -> f64 {
    match v {
        ParamValue::Float(x) => *x,
        ParamValue::Int(x) => *x as f64,
        ParamValue::Str(s) => panic!("expected a number, got {s}"),
    }
}

fn quadratic(a: &Assignment) -> Result<(f64, Vec<f64>)> {
    let x = float_of(&a["x"]);
    Ok((-(x - 0.7).powi(2), Vec::new()))
}

#[test]
fn random_floats_are_uniform() {
    let space = [ParamSpec::float("x", 0.0, 1.0)];
    let mean = (0..10_000)
        .map(|i| float_of(&sample_random(&space, 3, i)["x"]))
        .sum::<f64>()
        / 10_000.0;
    assert!((0.48..=0.52).contains(&mean), "{mean}");
}

#[test]
fn single_choice_is_always_chosen() {
    let space = [ParamSpec::categorical("c", &["only"])];
    for i in 0..50 {
        assert_eq!(sample_random(&space, 1, i)["c"], ParamValue::Str("only".into()));
    }
}

#[test]
fn random_is_deterministic_per_stream() {
    let space = default_space(Family::GbAft);
    assert_eq!(sample_random(&space, 9, 4), sample_random(&space, 9, 4));
    assert_ne!(sample_random(&space, 9, 4), sample_random(&space, 9, 5));
}

#[test]
fn tpe_startup_matches_random() {
    let space = [ParamSpec::float("x", 0.0, 1.0), ParamSpec::int("k", 1, 5)];
    let sampler = Sampler::Tpe(TpeConfig::default());
    let trials = optimize(&space, &sampler, 10, 7, |a| {
        Ok((-(float_of(&a["x"]) - 0.3).abs(), Vec::new()))
    })
    .unwrap();
    for t in &trials {
        assert_eq!(t.params, sample_random(&space, 7, t.index));
    }
}

#[test]
fn samplers_respect_bounds() {
    let space = vec![
        ParamSpec::float("x", -1.0, 2.0),
        ParamSpec::log_float("y", 1e-3, 1.0),
        ParamSpec::int("k", 2, 4),
        ParamSpec::categorical("c", &["a", "b", "c"]),
    ];
    for sampler in [
        Sampler::Random,
        Sampler::Tpe(TpeConfig::default()),
        Sampler::CmaEs(CmaConfig::default()),
    ] {
        let trials = optimize(&space, &sampler, 60, 2, |a| {
            let v = float_of(&a["x"]) + float_of(&a["y"]).ln() + float_of(&a["k"]);
            Ok((-(v * v), Vec::new()))
        })
        .unwrap();
        for t in &trials {
            for spec in &space {
                assert!(spec.contains(&t.params[&spec.name]), "{sampler}: {:?}", t.params);
            }
        }
    }
}

#[test]
fn tpe_with_gamma_one_still_samples() {
    let space = [ParamSpec::float("x", 0.0, 1.0), ParamSpec::categorical("c", &["a", "b"])];
    let sampler = Sampler::Tpe(TpeConfig {
        gamma: 1.0,
        ..TpeConfig::default()
    });
    let trials = optimize(&space, &sampler, 40, 3, quadratic).unwrap();
    assert_eq!(trials.len(), 40);
    assert!(trials.iter().all(|t| space[0].contains(&t.params["x"])));
}

#[test]
fn tpe_finds_the_quadratic_optimum() {
    let space = [ParamSpec::float("x", 0.0, 1.0)];
    let sampler = Sampler::Tpe(TpeConfig::default());
    let hits = (0..20)
        .filter(|&seed| {
            let trials = optimize(&space, &sampler, 150, seed, quadratic).unwrap();
            let best = &trials[best_trial(&trials).unwrap()];
            (float_of(&best.params["x"]) - 0.7).abs() <= 0.05
        })
        .count();
    assert_eq!(hits, 20, "{hits} of 20");
}

#[test]
fn tpe_concentrates_near_the_optimum() {
    let space = [ParamSpec::float("x", 0.0, 1.0)];
    let trials = optimize(&space, &Sampler::Tpe(TpeConfig::default()), 100, 5, quadratic).unwrap();
    let late: Vec<f64> = trials[60..].iter().map(|t| float_of(&t.params["x"])).collect();
    let near = late.iter().filter(|x| (*x - 0.7).abs() < 0.15).count();
    // uniform sampling would put about 30% of draws in this window
    assert!(near as f64 / late.len() as f64 > 0.6, "{near} of {}", late.len());
}

#[test]
fn cmaes_rejects_all_categorical_spaces() {
    let space = [ParamSpec::categorical("c", &["a", "b"])];
    let sampler = Sampler::CmaEs(CmaConfig::default());
    assert!(sampler.suggest(&space, &[], 0).is_err());
}

#[test]
fn cmaes_first_generation_is_centered() {
    let space = [ParamSpec::float("x", 0.0, 1.0)];
    let sampler = Sampler::CmaEs(CmaConfig::default());
    let xs: Vec<f64> = (0..400)
        .map(|seed| float_of(&sampler.suggest(&space, &[], seed).unwrap()["x"]))
        .collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    assert!((mean - 0.5).abs() < 0.03, "{mean}");
    assert!((sd - 0.2).abs() < 0.02, "{sd}");
}

#[test]
fn cmaes_covariance_stays_positive_definite() {
    let space: Vec<ParamSpec> = ["a", "b", "c"].iter().map(|n| ParamSpec::float(n, 0.0, 1.0)).collect();
    let cfg = CmaConfig::default();
    let sampler = Sampler::CmaEs(cfg);
    let sphere = |a: &Assignment| {
        let v: f64 = a.values().map(|x| (float_of(x) - 0.3).powi(2)).sum();
        Ok((-v, Vec::new()))
    };
    let trials = optimize(&space, &sampler, 140, 4, sphere).unwrap();
    let lambda = population_size(3, &cfg);
    for g in 1..=trials.len() / lambda {
        let state = cmaes_state(&space, &trials[..g * lambda], &cfg, 4).unwrap();
        assert_eq!(state.generation, g);
        let cov = &state.cov;
        assert!((cov - cov.transpose()).abs().max() < 1e-12);
        assert!(state.eigenvalues().iter().all(|&e| e > 0.0));
    }
    let best = &trials[best_trial(&trials).unwrap()];
    assert!(best.value.unwrap() > -1e-3);
}

#[test]
fn failed_trials_are_recorded() {
    let space = [ParamSpec::float("x", 0.0, 1.0)];
    let trials = optimize(&space, &Sampler::Random, 30, 1, |a| {
        let x = float_of(&a["x"]);
        if x < 0.5 {
            Err(SurvError::InvalidInput("left half".into()))
        } else {
            Ok((x, Vec::new()))
        }
    })
    .unwrap();
    for t in &trials {
        assert!(t.value.is_some() != t.failure.is_some());
    }
    assert!(trials.iter().any(|t| t.failure.is_some()));
    let best = best_trial(&trials).unwrap();
    let max = trials.iter().filter_map(|t| t.value).fold(f64::MIN, f64::max);
    assert_eq!(trials[best].value, Some(max));
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 0.2 {
        // the series does not converge here; Q_KS(0.2) equals 1 to double precision
        return (d, 1.0);
    }
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (d, p.clamp(0.0, 1.0))
}

#[test]
fn ks_oracle_behaves() {
    let a: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
    let shifted: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
    assert!(ks_two_sample(&a, &a).1 > 0.99);
    assert!(ks_two_sample(&a, &shifted).1 < 1e-6);
}

#[test]
fn dummy_parameter_does_not_matter() {
    let space = [ParamSpec::float("x", 0.0, 1.0), ParamSpec::categorical("dummy", &["a", "b"])];
    let mut by_value: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for seed in 0..50 {
        for sampler in [Sampler::Random, Sampler::Tpe(TpeConfig::default())] {
            let trials = optimize(&space, &sampler, 30, seed, quadratic).unwrap();
            let best = &trials[best_trial(&trials).unwrap()];
            let k = usize::from(best.params["dummy"] == ParamValue::Str("b".into()));
            by_value[k].push(best.value.unwrap());
        }
    }
    let (_, p) = ks_two_sample(&by_value[0], &by_value[1]);
    assert!(p > 0.01, "p = {p}");
}

fn tiny_cohort() -> Cohort<f64> {
    synth_cohort::<f64>(150, 3, SynthModel::ProportionalHazards, &[1.0, 0.5, 0.0], 0.3, 8)
        .unwrap()
        .cohort
}

fn tiny_config(sampler: Sampler, n_trials: usize) -> StudyConfig {
    let mut config = StudyConfig::new(Family::GbCox, sampler, 13);
    config.space = vec![
        ParamSpec::int("n_rounds", 5, 20),
        ParamSpec::log_float("learning_rate", 0.05, 0.3),
    ];
    config.n_trials = n_trials;
    config.k_folds = 3;
    config
}

#[test]
fn single_trial_study() {
    let study = run_study(&tiny_cohort(), &tiny_config(Sampler::Random, 1)).unwrap();
    assert_eq!(study.trials.len(), 1);
    assert_eq!(study.best, Some(0));
    assert_eq!(study.trials[0].fold_values.len(), 3);
    let mean = study.trials[0].fold_values.iter().sum::<f64>() / 3.0;
    assert_eq!(study.trials[0].value, Some(mean));
}

#[test]
fn studies_are_deterministic_and_prefix_consistent() {
    let cohort = tiny_cohort();
    for sampler in [Sampler::Random, Sampler::Tpe(TpeConfig::default()), Sampler::CmaEs(CmaConfig::default())] {
        let long = run_study(&cohort, &tiny_config(sampler, 12)).unwrap();
        let again = run_study(&cohort, &tiny_config(sampler, 12)).unwrap();
        assert_eq!(long, again);
        let short = run_study(&cohort, &tiny_config(sampler, 5)).unwrap();
        assert_eq!(short.trials[..], long.trials[..5]);
        let best_short = short.best_trial().unwrap().value.unwrap();
        let best_long = long.best_trial().unwrap().value.unwrap();
        assert!(best_long >= best_short);

        let resumed = resume_study(&cohort, short, 12).unwrap();
        assert_eq!(resumed, long);
        let text = serde_json::to_string(&long).unwrap();
        let back: Study = serde_json::from_str(&text).unwrap();
        assert_eq!(back, long);
    }
}

#[test]
fn study_with_failing_trials_continues() {
    let mut config = StudyConfig::new(Family::Rsf, Sampler::Random, 2);
    config.space = vec![ParamSpec::int("n_trees", 0, 2)];
    config.base_params.apply("max_depth", &ParamValue::Int(2)).unwrap();
    config.n_trials = 12;
    config.k_folds = 2;
    let study = run_study(&tiny_cohort(), &config).unwrap();
    assert!(study.trials.iter().any(|t| t.failure.is_some()));
    assert!(study.best_trial().unwrap().value.is_some());
    assert!(study.best_params().is_ok());

    config.space = vec![ParamSpec::int("n_trees", -3, -1)];
    assert!(matches!(run_study(&tiny_cohort(), &config), Err(SurvError::AllTrialsFailed)));
}

#[test]
fn ipcw_objective_runs() {
    let mut config = tiny_config(Sampler::Random, 2);
    config.objective = StudyObjective::IpcwC;
    let study = run_study(&tiny_cohort(), &config).unwrap();
    assert!(study.trials.iter().all(|t| t.value.is_some()));
}


