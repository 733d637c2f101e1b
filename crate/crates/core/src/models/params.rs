//! Hyperparameters for every family, with string-keyed overrides for configs and samplers.

use serde::{Deserialize, Serialize};

use super::Family;
use crate::engine::{BoostParams, TreeParams};
use crate::error::{Result, SurvError};
use crate::losses::{AftDistribution, AftLossConfig};

/// A single hyperparameter value as produced by a sampler or a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    fn as_f64(&self, key: &str) -> Result<f64> {
        match self {
            ParamValue::Int(v) => Ok(*v as f64),
            ParamValue::Float(v) => Ok(*v),
            ParamValue::Str(s) => s
                .trim()
                .parse()
                .map_err(|_| bad_value(key, &format!("{s:?} is not a number"))),
        }
    }

    fn as_usize(&self, key: &str) -> Result<usize> {
        match self {
            ParamValue::Int(v) if *v >= 0 => Ok(*v as usize),
            ParamValue::Float(v) if *v >= 0.0 && v.fract() == 0.0 && v.is_finite() => Ok(*v as usize),
            ParamValue::Str(s) => s
                .trim()
                .parse()
                .map_err(|_| bad_value(key, &format!("{s:?} is not a non-negative integer"))),
            other => Err(bad_value(key, &format!("{other} is not a non-negative integer"))),
        }
    }

    fn as_str(&self) -> String {
        match self {
            ParamValue::Str(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

fn bad_value(key: &str, why: &str) -> SurvError {
    SurvError::InvalidInput(format!("hyperparameter {key}: {why}"))
}

fn unknown_key(family: Family, key: &str) -> SurvError {
    SurvError::InvalidInput(format!("unknown hyperparameter {key:?} for {family}"))
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad_value(key, &format!("must be > 0, got {v}")))
    }
}

fn fraction(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(bad_value(key, &format!("must lie in (0, 1], got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad_value(key, &format!("must be >= 0, got {v}")))
    }
}

/// Random survival forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsfParams {
    pub n_trees: usize,
    /// Candidate features per node; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Draw a bootstrap sample per tree. When off, every tree sees all rows once.
    pub bootstrap: bool,
    /// Bootstrap size as a fraction of the training rows.
    pub sample_fraction: f64,
    pub seed: u64,
}

impl Default for RsfParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            max_depth: 32,
            min_samples_leaf: 3,
            bootstrap: true,
            sample_fraction: 1.0,
            seed: 0,
        }
    }
}

/// Boosting hyperparameters shared by the gradient-boosted families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_child_weight: f64,
    /// L2 penalty on leaf values. Ignored by GBSA, which always uses 0.
    pub reg_lambda: f64,
    pub min_split_gain: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbParams {
    fn default() -> Self {
        let tree = TreeParams::default();
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: tree.max_depth,
            min_samples_leaf: tree.min_samples_leaf,
            min_child_weight: tree.min_child_weight,
            reg_lambda: tree.reg_lambda,
            min_split_gain: tree.min_split_gain,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbParams {
    pub(crate) fn boost_params(&self, reg_lambda: f64) -> BoostParams {
        BoostParams {
            n_rounds: self.n_rounds,
            learning_rate: self.learning_rate,
            tree: TreeParams {
                max_depth: self.max_depth,
                min_samples_leaf: self.min_samples_leaf,
                min_child_weight: self.min_child_weight,
                reg_lambda,
                min_split_gain: self.min_split_gain,
            },
            subsample: self.subsample,
            seed: self.seed,
        }
    }

    fn apply(&mut self, family: Family, key: &str, value: &ParamValue) -> Result<()> {
        match key {
            "n_rounds" => self.n_rounds = value.as_usize(key)?,
            "learning_rate" => self.learning_rate = positive(key, value.as_f64(key)?)?,
            "max_depth" => self.max_depth = value.as_usize(key)?,
            "min_samples_leaf" => self.min_samples_leaf = value.as_usize(key)?,
            "min_child_weight" => self.min_child_weight = non_negative(key, value.as_f64(key)?)?,
            "reg_lambda" => self.reg_lambda = non_negative(key, value.as_f64(key)?)?,
            "min_split_gain" => self.min_split_gain = non_negative(key, value.as_f64(key)?)?,
            "subsample" => self.subsample = fraction(key, value.as_f64(key)?)?,
            "seed" => self.seed = value.as_usize(key)? as u64,
            _ => return Err(unknown_key(family, key)),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    All,
    Nearest,
}

/// Linear survival SVM with squared hinge loss on ranking pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvmParams {
    pub gamma: f64,
    pub pair_mode: PairMode,
    pub max_pairs: usize,
    /// Maximum descent iterations.
    pub epochs: usize,
    /// Initial step size; halved until the objective decreases enough.
    pub step_size: f64,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SsvmParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            pair_mode: PairMode::Nearest,
            max_pairs: 100_000,
            epochs: 1000,
            step_size: 1.0,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Per-family hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Rsf(RsfParams),
    Gbsa(GbParams),
    Ssvm(SsvmParams),
    GbCox(GbParams),
    GbAft {
        #[serde(flatten)]
        boost: GbParams,
        aft: AftLossConfig,
    },
    GbRegWeighted {
        #[serde(flatten)]
        boost: GbParams,
        /// Sample weight of censored rows; events weigh 1.
        censored_weight: f64,
    },
    HorizonClassifier {
        #[serde(flatten)]
        boost: GbParams,
        /// Horizon in the time unit of the cohort.
        horizon: f64,
    },
}

impl ModelParams {
    /// Defaults for `family`.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Rsf => ModelParams::Rsf(RsfParams::default()),
            Family::Gbsa => ModelParams::Gbsa(GbParams::default()),
            Family::Ssvm => ModelParams::Ssvm(SsvmParams::default()),
            Family::GbCox => ModelParams::GbCox(GbParams::default()),
            Family::GbAft => ModelParams::GbAft {
                boost: GbParams::default(),
                aft: AftLossConfig::default(),
            },
            Family::GbRegWeighted => ModelParams::GbRegWeighted {
                boost: GbParams::default(),
                censored_weight: 0.5,
            },
            Family::HorizonClassifier => ModelParams::HorizonClassifier {
                boost: GbParams::default(),
                horizon: 12.0,
            },
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelParams::Rsf(_) => Family::Rsf,
            ModelParams::Gbsa(_) => Family::Gbsa,
            ModelParams::Ssvm(_) => Family::Ssvm,
            ModelParams::GbCox(_) => Family::GbCox,
            ModelParams::GbAft { .. } => Family::GbAft,
            ModelParams::GbRegWeighted { .. } => Family::GbRegWeighted,
            ModelParams::HorizonClassifier { .. } => Family::HorizonClassifier,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelParams::Rsf(p) => p.seed,
            ModelParams::Ssvm(p) => p.seed,
            ModelParams::Gbsa(b)
            | ModelParams::GbCox(b)
            | ModelParams::GbAft { boost: b, .. }
            | ModelParams::GbRegWeighted { boost: b, .. }
            | ModelParams::HorizonClassifier { boost: b, .. } => b.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ModelParams::Rsf(p) => p.seed = seed,
            ModelParams::Ssvm(p) => p.seed = seed,
            ModelParams::Gbsa(b)
            | ModelParams::GbCox(b)
            | ModelParams::GbAft { boost: b, .. }
            | ModelParams::GbRegWeighted { boost: b, .. }
            | ModelParams::HorizonClassifier { boost: b, .. } => b.seed = seed,
        }
    }

    /// Overrides one hyperparameter by name.
    pub fn apply(&mut self, key: &str, value: &ParamValue) -> Result<()> {
        let family = self.family();
        match self {
            ModelParams::Rsf(p) => match key {
                "n_trees" => p.n_trees = value.as_usize(key)?,
                "mtry" => {
                    p.mtry = match value.as_str().as_str() {
                        "auto" | "sqrt" | "none" => None,
                        _ => Some(value.as_usize(key)?),
                    }
                }
                "max_depth" => p.max_depth = value.as_usize(key)?,
                "min_samples_leaf" => p.min_samples_leaf = value.as_usize(key)?,
                "bootstrap" => {
                    p.bootstrap = match value.as_str().as_str() {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        other => return Err(bad_value(key, &format!("{other:?} is not a boolean"))),
                    }
                }
                "sample_fraction" => p.sample_fraction = fraction(key, value.as_f64(key)?)?,
                "seed" => p.seed = value.as_usize(key)? as u64,
                _ => return Err(unknown_key(family, key)),
            },
            ModelParams::Ssvm(p) => match key {
                "gamma" => p.gamma = non_negative(key, value.as_f64(key)?)?,
                "pair_mode" => {
                    p.pair_mode = match value.as_str().as_str() {
                        "all" => PairMode::All,
                        "nearest" => PairMode::Nearest,
                        other => return Err(bad_value(key, &format!("{other:?} is not all|nearest"))),
                    }
                }
                "max_pairs" => p.max_pairs = value.as_usize(key)?,
                "epochs" => p.epochs = value.as_usize(key)?,
                "step_size" => p.step_size = positive(key, value.as_f64(key)?)?,
                "tol" => p.tol = non_negative(key, value.as_f64(key)?)?,
                "seed" => p.seed = value.as_usize(key)? as u64,
                _ => return Err(unknown_key(family, key)),
            },
            ModelParams::Gbsa(b) | ModelParams::GbCox(b) => b.apply(family, key, value)?,
            ModelParams::GbAft { boost, aft } => match key {
                "sigma" => aft.sigma = positive(key, value.as_f64(key)?)?,
                "distribution" => {
                    aft.distribution = match value.as_str().as_str() {
                        "normal" => AftDistribution::Normal,
                        "logistic" => AftDistribution::Logistic,
                        other => return Err(bad_value(key, &format!("{other:?} is not normal|logistic"))),
                    }
                }
                _ => boost.apply(family, key, value)?,
            },
            ModelParams::GbRegWeighted {
                boost,
                censored_weight,
            } => match key {
                "censored_weight" => *censored_weight = non_negative(key, value.as_f64(key)?)?,
                _ => boost.apply(family, key, value)?,
            },
            ModelParams::HorizonClassifier { boost, horizon } => match key {
                "horizon" => *horizon = positive(key, value.as_f64(key)?)?,
                _ => boost.apply(family, key, value)?,
            },
        }
        Ok(())
    }
}
