//! Search-space definitions and the unit-cube encoding shared by the samplers.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};
use crate::models::{Family, ParamValue};

/// One sampled configuration, keyed by parameter name.
pub type Assignment = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Float {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
    },
    Int {
        low: i64,
        high: i64,
    },
    Categorical {
        choices: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn float(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Float { low, high, log: false },
        }
    }

    pub fn log_float(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Float { low, high, log: true },
        }
    }

    pub fn int(name: &str, low: i64, high: i64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Int { low, high },
        }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(SurvError::InvalidInput(format!("parameter {}: {why}", self.name)));
        match &self.kind {
            ParamKind::Float { low, high, log } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return bad(format!("need low < high, got [{low}, {high}]"));
                }
                if *log && *low <= 0.0 {
                    return bad(format!("log scale needs low > 0, got {low}"));
                }
            }
            ParamKind::Int { low, high } => {
                if low >= high {
                    return bad(format!("need low < high, got [{low}, {high}]"));
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("no choices".into());
                }
            }
        }
        Ok(())
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self.kind, ParamKind::Categorical { .. })
    }

    /// Maps `u` in `[0, 1]` to a value. Integers split the unit interval into equal cells.
    pub fn from_unit(&self, u: f64) -> ParamValue {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Float { low, high, log } => {
                let v = if *log {
                    (low.ln() + u * (high.ln() - low.ln())).exp()
                } else {
                    low + u * (high - low)
                };
                ParamValue::Float(v.clamp(*low, *high))
            }
            ParamKind::Int { low, high } => {
                let cells = (high - low + 1) as f64;
                let k = ((u * cells).floor() as i64).min(high - low);
                ParamValue::Int(low + k)
            }
            ParamKind::Categorical { choices } => {
                let k = ((u * choices.len() as f64).floor() as usize).min(choices.len() - 1);
                ParamValue::Str(choices[k].clone())
            }
        }
    }

    /// Position of `value` in `[0, 1]`; integers map to their cell centre.
    pub fn to_unit(&self, value: &ParamValue) -> Option<f64> {
        let num = match value {
            ParamValue::Int(v) => *v as f64,
            ParamValue::Float(v) => *v,
            ParamValue::Str(_) => return None,
        };
        match &self.kind {
            ParamKind::Float { low, high, log } => Some(if *log {
                (num.ln() - low.ln()) / (high.ln() - low.ln())
            } else {
                (num - low) / (high - low)
            }),
            ParamKind::Int { low, high } => Some((num - *low as f64 + 0.5) / ((high - low + 1) as f64)),
            ParamKind::Categorical { .. } => None,
        }
    }

    /// Index of a categorical value among the choices.
    pub fn choice_index(&self, value: &ParamValue) -> Option<usize> {
        match (&self.kind, value) {
            (ParamKind::Categorical { choices }, ParamValue::Str(s)) => choices.iter().position(|c| c == s),
            _ => None,
        }
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (ParamKind::Float { low, high, .. }, ParamValue::Float(v)) => *low <= *v && *v <= *high,
            (ParamKind::Int { low, high }, ParamValue::Int(v)) => *low <= *v && *v <= *high,
            (ParamKind::Categorical { choices }, ParamValue::Str(s)) => choices.contains(s),
            _ => false,
        }
    }

    /// Independent draw: uniform, log-uniform, uniform integer or uniform choice.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> ParamValue {
        match &self.kind {
            ParamKind::Float { low, high, log } => {
                let v = if *log {
                    rng.random_range(low.ln()..=high.ln()).exp()
                } else {
                    rng.random_range(*low..=*high)
                };
                ParamValue::Float(v.clamp(*low, *high))
            }
            ParamKind::Int { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
            ParamKind::Categorical { choices } => ParamValue::Str(choices[rng.random_range(0..choices.len())].clone()),
        }
    }
}

pub fn validate_space(space: &[ParamSpec]) -> Result<()> {
    if space.is_empty() {
        return Err(SurvError::Empty("search space"));
    }
    for (i, spec) in space.iter().enumerate() {
        spec.validate()?;
        if space[..i].iter().any(|s| s.name == spec.name) {
            return Err(SurvError::InvalidInput(format!("parameter {} declared twice", spec.name)));
        }
    }
    Ok(())
}

/// Editable default ranges per family. They are starting points for tuning, not recommendations.
pub fn default_space(family: Family) -> Vec<ParamSpec> {
    let boosting = || {
        vec![
            ParamSpec::int("n_rounds", 50, 300),
            ParamSpec::log_float("learning_rate", 0.01, 0.3),
            ParamSpec::int("max_depth", 1, 6),
            ParamSpec::int("min_samples_leaf", 1, 30),
            ParamSpec::float("subsample", 0.5, 1.0),
        ]
    };
    match family {
        Family::Rsf => vec![
            ParamSpec::int("n_trees", 50, 300),
            ParamSpec::int("max_depth", 3, 20),
            ParamSpec::int("min_samples_leaf", 3, 30),
            ParamSpec::float("sample_fraction", 0.5, 1.0),
        ],
        Family::Gbsa => boosting(),
        Family::GbCox | Family::HorizonClassifier => {
            let mut s = boosting();
            s.push(ParamSpec::log_float("reg_lambda", 1e-3, 10.0));
            s
        }
        Family::GbAft => {
            let mut s = boosting();
            s.push(ParamSpec::log_float("reg_lambda", 1e-3, 10.0));
            s.push(ParamSpec::log_float("sigma", 0.5, 2.0));
            s.push(ParamSpec::categorical("distribution", &["normal", "logistic"]));
            s
        }
        Family::GbRegWeighted => {
            let mut s = boosting();
            s.push(ParamSpec::log_float("reg_lambda", 1e-3, 10.0));
            s.push(ParamSpec::float("censored_weight", 0.0, 1.0));
            s
        }
        Family::Ssvm => vec![
            ParamSpec::log_float("gamma", 1e-3, 10.0),
            ParamSpec::categorical("pair_mode", &["nearest", "all"]),
        ],
    }
}
