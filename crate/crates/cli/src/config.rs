//! Run configuration from a flat `key = value` text file.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored. List values are
//! comma separated. An empty value disables optional settings (filters, `tau`). Unknown and
//! repeated keys are errors. Settings apply in file order, so `filters = none` followed by
//! `filter.min_age = 18` enables only the age rule.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use survkit::data::{CohortConfig, FilterRules, IntervalCategory, RegistryColumn, Schema, SynthModel, INTERVAL_COLUMNS};
use survkit::hpo::{Sampler, StudyObjective};
use survkit::models::{Family, ParamValue};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// Registry extract: filters, interval categories and targets are derived by `prep`.
    Registry,
    /// Already tabular: numeric feature columns plus `time` and `event`.
    Cohort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplainData {
    Validation,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapleyChoice {
    /// Exact up to 12 features, Monte Carlo beyond.
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainSettings {
    pub data: ExplainData,
    pub repeats: usize,
    pub background: usize,
    pub sample: usize,
    pub ipcw: bool,
    pub shapley: ShapleyChoice,
    pub permutations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub n: usize,
    pub d: usize,
    pub model: SynthModel,
    pub beta: Option<Vec<f64>>,
    pub censor_rate: f64,
    pub format: InputFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub input_format: InputFormat,
    pub schema: Schema,
    pub filters: FilterRules,
    pub cohort: CohortConfig,
    pub category_orders: BTreeMap<String, Vec<String>>,
    pub test_fraction: f64,
    pub stratify_split: bool,
    pub families: Vec<Family>,
    pub params: BTreeMap<Family, Vec<(String, ParamValue)>>,
    pub use_best_params: bool,
    pub horizons: Vec<f64>,
    pub samplers: Vec<Sampler>,
    pub n_trials: usize,
    pub k_folds: usize,
    pub stratified_folds: bool,
    pub objective: StudyObjective,
    pub tau: Option<f64>,
    pub grid_resolution: usize,
    pub explain: ExplainSettings,
    pub synth: SynthSettings,
}

/// The six survival families compared in the default run.
pub const DEFAULT_FAMILIES: [Family; 6] = [
    Family::Rsf,
    Family::Gbsa,
    Family::Ssvm,
    Family::GbCox,
    Family::GbAft,
    Family::GbRegWeighted,
];

impl Default for RunConfig {
    fn default() -> Self {
        let mut category_orders = BTreeMap::new();
        category_orders.insert(
            RegistryColumn::Ec.name().to_string(),
            ["I", "II", "III", "IV"].map(String::from).to_vec(),
        );
        for name in INTERVAL_COLUMNS {
            category_orders.insert(name.to_string(), IntervalCategory::ordered_labels());
        }
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            input: None,
            input_format: InputFormat::Registry,
            schema: Schema::default(),
            filters: FilterRules::default(),
            cohort: CohortConfig::default(),
            category_orders,
            test_fraction: 0.2,
            stratify_split: true,
            families: DEFAULT_FAMILIES.to_vec(),
            params: BTreeMap::new(),
            use_best_params: true,
            horizons: vec![12.0],
            samplers: all_samplers(),
            n_trials: 150,
            k_folds: 10,
            stratified_folds: true,
            objective: StudyObjective::HarrellC,
            tau: None,
            grid_resolution: 100,
            explain: ExplainSettings {
                data: ExplainData::Validation,
                repeats: 10,
                background: 100,
                sample: 100,
                ipcw: false,
                shapley: ShapleyChoice::Auto,
                permutations: 100,
            },
            synth: SynthSettings {
                n: 2000,
                d: 5,
                model: SynthModel::ProportionalHazards,
                beta: None,
                censor_rate: 0.3,
                format: InputFormat::Cohort,
            },
        }
    }
}

pub fn all_samplers() -> Vec<Sampler> {
    ["random", "tpe", "cmaes"]
        .iter()
        .map(|s| Sampler::from_str(s).expect("known sampler"))
        .collect()
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn optional(value: &str) -> Option<String> {
    let v = value.trim();
    (!v.is_empty()).then(|| v.to_string())
}

fn parse_num<N: FromStr>(key: &str, value: &str) -> std::result::Result<N, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("{key}: {other:?} is not a boolean")),
    }
}

fn parse_format(key: &str, value: &str) -> std::result::Result<InputFormat, String> {
    match value.trim() {
        "registry" => Ok(InputFormat::Registry),
        "cohort" => Ok(InputFormat::Cohort),
        other => Err(format!("{key}: {other:?} is not registry|cohort")),
    }
}

pub fn parse_families(value: &str) -> std::result::Result<Vec<Family>, String> {
    let mut out = Vec::new();
    for name in list(value) {
        let family = Family::from_str(&name).map_err(|e| e.to_string())?;
        if !out.contains(&family) {
            out.push(family);
        }
    }
    Ok(out)
}

pub fn parse_samplers(value: &str) -> std::result::Result<Vec<Sampler>, String> {
    let mut out: Vec<Sampler> = Vec::new();
    for name in list(value) {
        if name.eq_ignore_ascii_case("all") {
            return Ok(all_samplers());
        }
        let sampler = Sampler::from_str(&name).map_err(|e| e.to_string())?;
        if !out.iter().any(|s| s.key() == sampler.key()) {
            out.push(sampler);
        }
    }
    if out.is_empty() {
        return Err("no sampler given".into());
    }
    Ok(out)
}

fn registry_column(name: &str) -> std::result::Result<RegistryColumn, String> {
    RegistryColumn::ALL
        .into_iter()
        .find(|c| c.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| format!("unknown registry column {name:?}"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CliError::Config(format!("config file {} not found", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        let mut schema_pairs: Vec<(String, String)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::ConfigLine {
                    line,
                    message: format!("expected key = value, got {content:?}"),
                });
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::ConfigLine {
                    line,
                    message: format!("{key} set twice"),
                });
            }
            if let Some(field) = key.strip_prefix("schema.") {
                schema_pairs.push((field.to_string(), value.trim().to_string()));
                continue;
            }
            config
                .set(key, value.trim())
                .map_err(|message| CliError::ConfigLine { line, message })?;
        }
        if !schema_pairs.is_empty() {
            config.schema = Schema::from_pairs(schema_pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())))
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        if let Some(column) = key.strip_prefix("order.") {
            self.category_orders.insert(column.to_string(), list(value));
            return Ok(());
        }
        if let Some(rest) = key.strip_prefix("param.") {
            let (family, name) = rest
                .split_once('.')
                .ok_or_else(|| format!("{key}: expected param.<family>.<name>"))?;
            let family = Family::from_str(family).map_err(|e| e.to_string())?;
            // check the key and value now rather than at training time
            let mut probe = survkit::models::ModelParams::default_for(family);
            let value = ParamValue::Str(value.to_string());
            probe.apply(name, &value).map_err(|e| e.to_string())?;
            self.params.entry(family).or_default().push((name.to_string(), value));
            return Ok(());
        }
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "input" => self.input = optional(value).map(PathBuf::from),
            "input_format" => self.input_format = parse_format(key, value)?,
            "filters" => {
                self.filters = match value {
                    "default" => FilterRules::default(),
                    "none" => FilterRules::none(),
                    other => return Err(format!("{key}: {other:?} is not default|none")),
                }
            }
            "filter.min_age" => {
                self.filters.min_age = optional(value).map(|v| parse_num(key, &v)).transpose()?
            }
            "filter.resident_state" => self.filters.resident_state = optional(value),
            "filter.excluded_staging" => self.filters.excluded_staging = optional(value).map(|v| list(&v)),
            "filter.confirmed_codes" => self.filters.confirmed_codes = optional(value).map(|v| list(&v)),
            "filter.transplant_codes" => self.filters.transplant_codes = optional(value).map(|v| list(&v)),
            "filter.morphology" => self.filters.morphology = optional(value),
            "days_per_month" => self.cohort.targets.days_per_month = parse_num(key, value)?,
            "death_codes" => self.cohort.targets.death_codes = list(value),
            "ordinal_columns" => {
                self.cohort.ordinal_columns = list(value)
                    .iter()
                    .map(|c| registry_column(c))
                    .collect::<std::result::Result<_, _>>()?
            }
            "include_intervals" => self.cohort.include_intervals = parse_bool(key, value)?,
            "test_fraction" => self.test_fraction = parse_num(key, value)?,
            "stratify_split" => self.stratify_split = parse_bool(key, value)?,
            "families" => self.families = parse_families(value)?,
            "use_best_params" => self.use_best_params = parse_bool(key, value)?,
            "horizons" => {
                self.horizons = list(value)
                    .iter()
                    .map(|h| parse_num(key, h))
                    .collect::<std::result::Result<_, _>>()?
            }
            "samplers" => self.samplers = parse_samplers(value)?,
            "trials" => self.n_trials = parse_num(key, value)?,
            "folds" => self.k_folds = parse_num(key, value)?,
            "stratified_folds" => self.stratified_folds = parse_bool(key, value)?,
            "objective" => {
                self.objective = match value {
                    "harrell_c" => StudyObjective::HarrellC,
                    "ipcw_c" => StudyObjective::IpcwC,
                    other => return Err(format!("{key}: {other:?} is not harrell_c|ipcw_c")),
                }
            }
            "tau" => self.tau = optional(value).map(|v| parse_num(key, &v)).transpose()?,
            "grid_resolution" => self.grid_resolution = parse_num(key, value)?,
            "explain.data" => {
                self.explain.data = match value {
                    "validation" | "test" => ExplainData::Validation,
                    "train" => ExplainData::Train,
                    other => return Err(format!("{key}: {other:?} is not validation|train")),
                }
            }
            "explain.repeats" => self.explain.repeats = parse_num(key, value)?,
            "explain.background" => self.explain.background = parse_num(key, value)?,
            "explain.sample" => self.explain.sample = parse_num(key, value)?,
            "explain.metric" => {
                self.explain.ipcw = match value {
                    "harrell_c" => false,
                    "ipcw_c" => true,
                    other => return Err(format!("{key}: {other:?} is not harrell_c|ipcw_c")),
                }
            }
            "explain.shapley" => {
                self.explain.shapley = match value {
                    "auto" => ShapleyChoice::Auto,
                    "exact" => ShapleyChoice::Exact,
                    "monte_carlo" | "mc" => ShapleyChoice::MonteCarlo,
                    other => return Err(format!("{key}: {other:?} is not auto|exact|monte_carlo")),
                }
            }
            "explain.permutations" => self.explain.permutations = parse_num(key, value)?,
            "synth.n" => self.synth.n = parse_num(key, value)?,
            "synth.d" => self.synth.d = parse_num(key, value)?,
            "synth.model" => {
                self.synth.model = match value {
                    "proportional_hazards" | "ph" => SynthModel::ProportionalHazards,
                    "lognormal_aft" | "aft" => SynthModel::LognormalAft,
                    other => return Err(format!("{key}: {other:?} is not proportional_hazards|lognormal_aft")),
                }
            }
            "synth.beta" => {
                self.synth.beta = Some(
                    list(value)
                        .iter()
                        .map(|b| parse_num(key, b))
                        .collect::<std::result::Result<_, _>>()?,
                )
            }
            "synth.censor_rate" => self.synth.censor_rate = parse_num(key, value)?,
            "synth.format" => self.synth.format = parse_format(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Checks ranges that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.families.is_empty() {
            return fail("no model families configured".into());
        }
        if self.n_trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if self.k_folds < 2 {
            return fail(format!("folds must be >= 2, got {}", self.k_folds));
        }
        if self.grid_resolution == 0 {
            return fail("grid_resolution must be >= 1".into());
        }
        if self.horizons.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return fail("horizons must be positive".into());
        }
        if let Some(tau) = self.tau {
            if !(tau.is_finite() && tau > 0.0) {
                return fail(format!("tau must be positive, got {tau}"));
            }
        }
        if self.explain.repeats == 0 || self.explain.background == 0 || self.explain.sample == 0 {
            return fail("explain.repeats, explain.background and explain.sample must be >= 1".into());
        }
        if self.explain.permutations == 0 {
            return fail("explain.permutations must be >= 1".into());
        }
        if let Some(beta) = &self.synth.beta {
            if beta.len() != self.synth.d {
                return fail(format!("synth.beta has {} entries, synth.d is {}", beta.len(), self.synth.d));
            }
        }
        Ok(())
    }
}
