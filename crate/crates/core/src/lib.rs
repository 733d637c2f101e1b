//! Survival analysis toolkit for censored time-to-event data.
//!
//! The crate covers the full comparison workflow for survival models:
//!
//! - [`data`]: registry schema, exclusion filters, interval categories, survival targets,
//!   CSV ingestion and a synthetic cohort generator.
//! - [`preprocess`]: ordinal encoding, z-scores, train/validation split, k-fold.
//! - [`estimators`]: Kaplan–Meier, Nelson–Aalen, censoring distribution, Breslow baseline
//!   and one-coefficient Cox calibration, all returning [`StepFunction`]s.
//! - [`metrics`]: Harrell and IPCW concordance, Brier score, integrated Brier score and
//!   cumulative/dynamic time-dependent AUC.
//! - [`engine`] and [`losses`]: exact-greedy regression trees, log-rank survival trees and a
//!   second-order boosting loop with Cox, AFT, squared and logistic losses.
//! - [`models`]: random survival forest, gradient-boosted survival (first- and second-order),
//!   survival SVM, AFT boosting, weighted regression and a horizon classifier.
//! - [`hpo`]: random, TPE and CMA-ES samplers plus a cross-validated study runner.
//! - [`explain`]: permutation importance and Shapley attribution.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases below are the
//! concrete types used by the command-line pipeline.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod explain;
pub mod hpo;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod preprocess;
pub mod scalar;

pub use error::{Result, SurvError};
pub use estimators::StepFunction;
pub use scalar::Scalar;

pub type Cohort64 = data::Cohort<f64>;
pub type Cohort32 = data::Cohort<f32>;
pub type RawCohort64 = data::RawCohort<f64>;
pub type SurvivalTarget64 = data::SurvivalTarget<f64>;
pub type StepFunction64 = estimators::StepFunction<f64>;
pub type StepFunction32 = estimators::StepFunction<f32>;
pub type FittedModel64 = models::FittedModel<f64>;
pub type FittedModel32 = models::FittedModel<f32>;
pub type BoostedEnsemble64 = engine::BoostedEnsemble<f64>;
pub type TimeGrid64 = metrics::TimeGrid<f64>;
pub type EncoderState64 = preprocess::EncoderState<f64>;
