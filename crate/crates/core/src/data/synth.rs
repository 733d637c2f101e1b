//! Synthetic cohorts with known generating models, and synthetic registry extracts.

use chrono::{Duration, NaiveDate};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Cohort, RawRecord, RegistryColumn, SurvivalTarget};
use crate::error::{Result, SurvError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthModel {
    /// Exponential event times with rate `exp(beta . x)`.
    ProportionalHazards,
    /// `log T = -beta . x + N(0, 1)`.
    LognormalAft,
}

/// Generated cohort together with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCohort<T> {
    pub cohort: Cohort<T>,
    /// `beta . x` per row; larger means earlier events under both models.
    pub linear_predictor: Vec<T>,
    /// Event times before censoring.
    pub latent_times: Vec<T>,
    /// Rate of the exponential censoring distribution (0 when uncensored).
    pub censoring_rate: f64,
}

/// Expected censored fraction under exponential censoring with rate `lambda`.
fn expected_censored(times: &[f64], lambda: f64) -> f64 {
    times.iter().map(|&t| -(-lambda * t).exp_m1()).sum::<f64>() / times.len() as f64
}

/// Rate `lambda` such that the expected censored fraction matches `target`.
fn calibrate_censoring(times: &[f64], target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while expected_censored(times, hi) < target && hi < 1e300 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_censored(times, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Draws `n` subjects with `d` i.i.d. standard-normal features and event times from `model`,
/// censored by an independent exponential whose rate is calibrated so that the expected
/// censored fraction equals `censor_rate`.
pub fn synth_cohort<T: Scalar>(
    n: usize,
    d: usize,
    model: SynthModel,
    beta: &[f64],
    censor_rate: f64,
    seed: u64,
) -> Result<SyntheticCohort<T>> {
    if n == 0 || d == 0 {
        return Err(SurvError::InvalidInput("n and d must be >= 1".into()));
    }
    if beta.len() != d {
        return Err(SurvError::LengthMismatch {
            expected: d,
            found: beta.len(),
        });
    }
    if !(0.0..1.0).contains(&censor_rate) {
        return Err(SurvError::InvalidInput(format!(
            "censor_rate must lie in [0, 1), got {censor_rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let eta: Vec<f64> = x
        .chunks(d)
        .map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum())
        .collect();
    let latent: Vec<f64> = eta
        .iter()
        .map(|&e| match model {
            SynthModel::ProportionalHazards => {
                let u: f64 = Exp1.sample(&mut rng);
                u * (-e).exp()
            }
            SynthModel::LognormalAft => {
                let z: f64 = rng.sample(StandardNormal);
                (-e + z).exp()
            }
        })
        .collect();
    let lambda = if censor_rate == 0.0 {
        0.0
    } else {
        calibrate_censoring(&latent, censor_rate)
    };
    let targets = latent
        .iter()
        .map(|&t| {
            if lambda == 0.0 {
                return SurvivalTarget::new(T::of(t), true);
            }
            let c: f64 = Exp1.sample(&mut rng);
            let c = c / lambda;
            if t <= c {
                SurvivalTarget::new(T::of(t), true)
            } else {
                SurvivalTarget::new(T::of(c), false)
            }
        })
        .collect();
    let features = Array2::from_shape_vec((n, d), x.into_iter().map(T::of).collect())
        .expect("shape matches generated length");
    Ok(SyntheticCohort {
        cohort: Cohort::from_matrix(features, targets)?,
        linear_predictor: eta.into_iter().map(T::of).collect(),
        latent_times: latent.into_iter().map(T::of).collect(),
        censoring_rate: lambda,
    })
}

const STAGES: [&str; 4] = ["I", "II", "III", "IV"];
const TOPOGRAPHIES: [&str; 3] = ["C18", "C19", "C20"];
const MUNICIPALITIES: [&str; 5] = ["3550308", "3509502", "3548708", "3543402", "3552205"];

/// Registry-shaped records for exercising the preparation pipeline end to end. A share of rows
/// violates each default exclusion rule, and survival depends on stage, age and treatment delay.
pub fn synth_registry(n: usize, seed: u64) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let study_end = NaiveDate::from_ymd_opt(2023, 12, 31).expect("valid date");
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut rec = RawRecord::default();
        let age: u32 = rng.random_range(15..=90);
        rec.age = Some(age);
        rec.residence_state = Some(if rng.random_bool(0.93) { "SP" } else { "MG" }.into());
        let stage_rank = rng.random_range(0..4usize);
        let staging = if rng.random_bool(0.03) {
            ["0", "X", "Y"][rng.random_range(0..3)].to_string()
        } else {
            STAGES[stage_rank].to_string()
        };
        rec.staging_code = Some(staging.clone());
        rec.microscopic_confirmation = Some(if rng.random_bool(0.97) { "1" } else { "2" }.into());
        rec.bone_marrow_transplant = Some(if rng.random_bool(0.01) { "1" } else { "0" }.into());
        rec.morphology = Some(if rng.random_bool(0.9) { "8140/3" } else { "8480/3" }.into());

        let year: i32 = rng.random_range(2000..=2020);
        let institution = rng.random_range(1..=30u32);
        let drs_inst = 1 + institution % 17;
        let codes: [(RegistryColumn, String); 13] = [
            (RegistryColumn::Institu, institution.to_string()),
            (RegistryColumn::Escolari, rng.random_range(1..=5u32).to_string()),
            (RegistryColumn::Sexo, rng.random_range(1..=2u32).to_string()),
            (
                RegistryColumn::Ibge,
                MUNICIPALITIES[rng.random_range(0..MUNICIPALITIES.len())].to_string(),
            ),
            (RegistryColumn::Cateatend, rng.random_range(1..=3u32).to_string()),
            (RegistryColumn::Diagprev, rng.random_range(1..=2u32).to_string()),
            (
                RegistryColumn::Topo,
                TOPOGRAPHIES[rng.random_range(0..TOPOGRAPHIES.len())].to_string(),
            ),
            (RegistryColumn::Ec, staging),
            (RegistryColumn::Anodiag, year.to_string()),
            (RegistryColumn::Drs, rng.random_range(1..=17u32).to_string()),
            (
                RegistryColumn::Ibgeaten,
                MUNICIPALITIES[rng.random_range(0..MUNICIPALITIES.len())].to_string(),
            ),
            (RegistryColumn::Habilit2, rng.random_range(1..=9u32).to_string()),
            (RegistryColumn::DrsInst, drs_inst.to_string()),
        ];
        for (col, value) in codes {
            rec.set_code(col, Some(value));
        }
        if rng.random_bool(0.01) {
            rec.set_code(RegistryColumn::Escolari, None);
        }

        let diag = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid date")
            + Duration::days(rng.random_range(0..365));
        rec.diagnosis_date = Some(diag);
        rec.consultation_date = Some(diag - Duration::days(rng.random_range(0..=60)));
        let delay = if rng.random_bool(0.08) {
            None
        } else {
            let e: f64 = Exp1.sample(&mut rng);
            Some((e * 55.0).round() as i64)
        };
        rec.treatment_date = delay.map(|d| diag + Duration::days(d));

        let log_hazard = -4.6 + 0.55 * stage_rank as f64 + 0.02 * (age as f64 - 60.0)
            + match delay {
                None => 0.8,
                Some(d) if d > 90 => 0.3,
                Some(d) if d > 60 => 0.15,
                Some(_) => 0.0,
            };
        let e: f64 = Exp1.sample(&mut rng);
        let death_days = (e / log_hazard.exp() * 30.4375).round() as i64;
        let loss: f64 = Exp1.sample(&mut rng);
        let loss_days = (loss * 3000.0).round() as i64;
        let admin_days = (study_end - diag).num_days();
        let censor_days = loss_days.min(admin_days);
        let (days, dead) = if death_days <= censor_days {
            (death_days, true)
        } else {
            (censor_days, false)
        };
        rec.last_info_date = Some(diag + Duration::days(days));
        rec.vital_status = Some(if dead { "3" } else { "1" }.into());
        out.push(rec);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_censoring_means_all_events() {
        let s = synth_cohort::<f64>(200, 3, SynthModel::ProportionalHazards, &[0.5, 0.0, -0.5], 0.0, 1)
            .unwrap();
        assert!(s.cohort.targets().iter().all(|t| t.event));
        assert_eq!(s.censoring_rate, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synth_cohort::<f64>(100, 2, SynthModel::LognormalAft, &[1.0, 0.0], 0.3, 9).unwrap();
        let b = synth_cohort::<f64>(100, 2, SynthModel::LognormalAft, &[1.0, 0.0], 0.3, 9).unwrap();
        assert_eq!(a.cohort, b.cohort);
        let c = synth_cohort::<f64>(100, 2, SynthModel::LognormalAft, &[1.0, 0.0], 0.3, 10).unwrap();
        assert_ne!(a.cohort, c.cohort);
    }

    #[test]
    fn censored_fraction_is_calibrated() {
        for model in [SynthModel::ProportionalHazards, SynthModel::LognormalAft] {
            let s = synth_cohort::<f64>(10_000, 2, model, &[1.0, 0.0], 0.3, 3).unwrap();
            let censored =
                s.cohort.targets().iter().filter(|t| !t.event).count() as f64 / 10_000.0;
            assert!((0.25..=0.35).contains(&censored), "{model:?}: {censored}");
        }
    }

    #[test]
    fn observed_time_is_min_of_latent_and_censoring() {
        let s = synth_cohort::<f64>(500, 2, SynthModel::ProportionalHazards, &[1.0, 1.0], 0.5, 4)
            .unwrap();
        for (t, &latent) in s.cohort.targets().iter().zip(&s.latent_times) {
            if t.event {
                assert_eq!(t.time, latent);
            } else {
                assert!(t.time < latent);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let ph = SynthModel::ProportionalHazards;
        assert!(synth_cohort::<f64>(10, 1, ph, &[0.0], 1.0, 0).is_err());
        assert!(synth_cohort::<f64>(0, 1, ph, &[0.0], 0.2, 0).is_err());
        assert!(synth_cohort::<f64>(10, 2, ph, &[0.0], 0.2, 0).is_err());
    }

    #[test]
    fn registry_records_are_reproducible_and_mostly_valid() {
        let a = synth_registry(500, 5);
        assert_eq!(a, synth_registry(500, 5));
        let (kept, report) = super::super::apply_filters(&a, &Default::default());
        assert!(report.removed.age_under_min > 0);
        assert!(report.removed.non_resident > 0);
        assert!(kept.len() > 300);
        assert!(a.iter().any(|r| r.treatment_date.is_none()));
        assert!(a
            .iter()
            .all(|r| r.diagnosis_date.unwrap() <= r.last_info_date.unwrap()));
    }
}
