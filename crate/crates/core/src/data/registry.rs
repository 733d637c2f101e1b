//! Hospital registry records: CSV ingestion, exclusion filters, interval categories and
//! survival targets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{RawCohort, RawColumn, RawValues, SurvivalTarget};
use crate::error::{Result, SurvError};
use crate::scalar::Scalar;

/// Mean Gregorian month in days.
pub const DEFAULT_DAYS_PER_MONTH: f64 = 30.4375;

/// Registry covariates, in model-input order. `IDADE` (age) is held separately as an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegistryColumn {
    Institu,
    Escolari,
    Idade,
    Sexo,
    Ibge,
    Cateatend,
    Diagprev,
    Topo,
    Ec,
    Anodiag,
    Drs,
    Ibgeaten,
    Habilit2,
    DrsInst,
}

impl RegistryColumn {
    pub const ALL: [RegistryColumn; 14] = [
        RegistryColumn::Institu,
        RegistryColumn::Escolari,
        RegistryColumn::Idade,
        RegistryColumn::Sexo,
        RegistryColumn::Ibge,
        RegistryColumn::Cateatend,
        RegistryColumn::Diagprev,
        RegistryColumn::Topo,
        RegistryColumn::Ec,
        RegistryColumn::Anodiag,
        RegistryColumn::Drs,
        RegistryColumn::Ibgeaten,
        RegistryColumn::Habilit2,
        RegistryColumn::DrsInst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegistryColumn::Institu => "INSTITU",
            RegistryColumn::Escolari => "ESCOLARI",
            RegistryColumn::Idade => "IDADE",
            RegistryColumn::Sexo => "SEXO",
            RegistryColumn::Ibge => "IBGE",
            RegistryColumn::Cateatend => "CATEATEND",
            RegistryColumn::Diagprev => "DIAGPREV",
            RegistryColumn::Topo => "TOPO",
            RegistryColumn::Ec => "EC",
            RegistryColumn::Anodiag => "ANODIAG",
            RegistryColumn::Drs => "DRS",
            RegistryColumn::Ibgeaten => "IBGEATEN",
            RegistryColumn::Habilit2 => "HABILIT2",
            RegistryColumn::DrsInst => "DRS_INST",
        }
    }

    fn code_slot(self) -> Option<usize> {
        match self {
            RegistryColumn::Idade => None,
            other => {
                let pos = Self::ALL.iter().position(|&c| c == other).unwrap();
                Some(if pos > 2 { pos - 1 } else { pos })
            }
        }
    }
}

impl fmt::Display for RegistryColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Derived interval columns (consultation→treatment, diagnosis→treatment).
pub const INTERVAL_COLUMNS: [&str; 2] = ["TRATCONS_CAT", "DIAGTRAT_CAT"];

/// One registry row. Cells that are empty or fail to parse are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    codes: [Option<String>; 13],
    pub age: Option<u32>,
    pub diagnosis_date: Option<NaiveDate>,
    pub consultation_date: Option<NaiveDate>,
    pub treatment_date: Option<NaiveDate>,
    pub last_info_date: Option<NaiveDate>,
    pub vital_status: Option<String>,
    pub morphology: Option<String>,
    pub residence_state: Option<String>,
    pub microscopic_confirmation: Option<String>,
    pub bone_marrow_transplant: Option<String>,
    pub staging_code: Option<String>,
}

impl RawRecord {
    /// Code of a registry column; for `IDADE` the age rendered as text.
    pub fn code(&self, column: RegistryColumn) -> Option<String> {
        match column.code_slot() {
            Some(k) => self.codes[k].clone(),
            None => self.age.map(|a| a.to_string()),
        }
    }

    pub fn set_code(&mut self, column: RegistryColumn, value: Option<String>) {
        match column.code_slot() {
            Some(k) => self.codes[k] = value,
            None => self.age = value.and_then(|v| v.trim().parse().ok()),
        }
    }
}

/// Non-covariate fields a schema can map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemaField {
    Column(RegistryColumn),
    DiagnosisDate,
    ConsultationDate,
    TreatmentDate,
    LastInfoDate,
    VitalStatus,
    Morphology,
    ResidenceState,
    MicroscopicConfirmation,
    BoneMarrowTransplant,
    StagingCode,
}

impl SchemaField {
    pub fn all() -> Vec<SchemaField> {
        let mut v: Vec<SchemaField> = RegistryColumn::ALL
            .iter()
            .map(|&c| SchemaField::Column(c))
            .collect();
        v.extend([
            SchemaField::DiagnosisDate,
            SchemaField::ConsultationDate,
            SchemaField::TreatmentDate,
            SchemaField::LastInfoDate,
            SchemaField::VitalStatus,
            SchemaField::Morphology,
            SchemaField::ResidenceState,
            SchemaField::MicroscopicConfirmation,
            SchemaField::BoneMarrowTransplant,
            SchemaField::StagingCode,
        ]);
        v
    }

    /// Configuration key.
    pub fn key(self) -> &'static str {
        match self {
            SchemaField::Column(c) => c.name(),
            SchemaField::DiagnosisDate => "diagnosis_date",
            SchemaField::ConsultationDate => "consultation_date",
            SchemaField::TreatmentDate => "treatment_date",
            SchemaField::LastInfoDate => "last_info_date",
            SchemaField::VitalStatus => "vital_status",
            SchemaField::Morphology => "morphology",
            SchemaField::ResidenceState => "residence_state",
            SchemaField::MicroscopicConfirmation => "microscopic_confirmation",
            SchemaField::BoneMarrowTransplant => "bone_marrow_transplant",
            SchemaField::StagingCode => "staging_code",
        }
    }

    fn default_header(self) -> &'static str {
        match self {
            SchemaField::Column(c) => c.name(),
            SchemaField::DiagnosisDate => "DTDIAG",
            SchemaField::ConsultationDate => "DTCONSULT",
            SchemaField::TreatmentDate => "DTTRAT",
            SchemaField::LastInfoDate => "DTULTINFO",
            SchemaField::VitalStatus => "ULTINFO",
            SchemaField::Morphology => "MORFO",
            SchemaField::ResidenceState => "UFRESID",
            SchemaField::MicroscopicConfirmation => "BASEMICRO",
            SchemaField::BoneMarrowTransplant => "TMO",
            SchemaField::StagingCode => "EC",
        }
    }
}

/// Field → CSV header mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    mapping: BTreeMap<SchemaField, String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            mapping: SchemaField::all()
                .into_iter()
                .map(|f| (f, f.default_header().to_string()))
                .collect(),
        }
    }
}

impl Schema {
    pub fn empty() -> Self {
        Self {
            mapping: BTreeMap::new(),
        }
    }

    /// Default mapping overridden by `key = header` pairs; an empty header unmaps the field.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut schema = Self::default();
        let fields = SchemaField::all();
        for (key, header) in pairs {
            let field = fields
                .iter()
                .copied()
                .find(|f| f.key().eq_ignore_ascii_case(key))
                .ok_or_else(|| SurvError::InvalidInput(format!("unknown schema key {key:?}")))?;
            schema.set(field, header);
        }
        Ok(schema)
    }

    pub fn set(&mut self, field: SchemaField, header: &str) {
        if header.trim().is_empty() {
            self.mapping.remove(&field);
        } else {
            self.mapping.insert(field, header.trim().to_string());
        }
    }

    pub fn header(&self, field: SchemaField) -> Option<&str> {
        self.mapping.get(&field).map(String::as_str)
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%d/%m/%Y"))
        .ok()
}

fn non_empty(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

/// Reads one [`RawRecord`] per data row of a UTF-8, comma-separated file with a header row.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Vec<RawRecord>> {
    if !path.exists() {
        return Err(SurvError::MissingFile(path.to_path_buf()));
    }
    let file = std::fs::File::open(path)?;
    ingest_reader(file, schema)
}

pub(crate) fn ingest_reader<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut positions = Vec::new();
    for (field, header) in &schema.mapping {
        let idx = headers
            .iter()
            .position(|h| h.trim() == header)
            .ok_or_else(|| SurvError::MissingColumn(header.clone()))?;
        positions.push((*field, idx));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let mut rec = RawRecord::default();
        for &(field, idx) in &positions {
            let cell = row.get(idx).unwrap_or("");
            match field {
                SchemaField::Column(c) => rec.set_code(c, non_empty(cell)),
                SchemaField::DiagnosisDate => rec.diagnosis_date = parse_date(cell),
                SchemaField::ConsultationDate => rec.consultation_date = parse_date(cell),
                SchemaField::TreatmentDate => rec.treatment_date = parse_date(cell),
                SchemaField::LastInfoDate => rec.last_info_date = parse_date(cell),
                SchemaField::VitalStatus => rec.vital_status = non_empty(cell),
                SchemaField::Morphology => rec.morphology = non_empty(cell),
                SchemaField::ResidenceState => rec.residence_state = non_empty(cell),
                SchemaField::MicroscopicConfirmation => {
                    rec.microscopic_confirmation = non_empty(cell)
                }
                SchemaField::BoneMarrowTransplant => rec.bone_marrow_transplant = non_empty(cell),
                SchemaField::StagingCode => rec.staging_code = non_empty(cell),
            }
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(SurvError::NoDataRows);
    }
    Ok(out)
}

/// Writes records under the given schema's headers (the inverse of [`ingest_csv`]).
pub fn write_records<W: std::io::Write>(
    writer: W,
    records: &[RawRecord],
    schema: &Schema,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let fields: Vec<(SchemaField, &str)> = schema
        .mapping
        .iter()
        .map(|(f, h)| (*f, h.as_str()))
        .collect();
    // EC and the staging filter code share a header by default.
    let mut seen = std::collections::BTreeSet::new();
    let fields: Vec<_> = fields.into_iter().filter(|(_, h)| seen.insert(*h)).collect();
    w.write_record(fields.iter().map(|(_, h)| *h))?;
    let date = |d: &Option<NaiveDate>| d.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
    for rec in records {
        let row: Vec<String> = fields
            .iter()
            .map(|(f, _)| match f {
                SchemaField::Column(c) => rec.code(*c).unwrap_or_default(),
                SchemaField::DiagnosisDate => date(&rec.diagnosis_date),
                SchemaField::ConsultationDate => date(&rec.consultation_date),
                SchemaField::TreatmentDate => date(&rec.treatment_date),
                SchemaField::LastInfoDate => date(&rec.last_info_date),
                SchemaField::VitalStatus => rec.vital_status.clone().unwrap_or_default(),
                SchemaField::Morphology => rec.morphology.clone().unwrap_or_default(),
                SchemaField::ResidenceState => rec.residence_state.clone().unwrap_or_default(),
                SchemaField::MicroscopicConfirmation => {
                    rec.microscopic_confirmation.clone().unwrap_or_default()
                }
                SchemaField::BoneMarrowTransplant => {
                    rec.bone_marrow_transplant.clone().unwrap_or_default()
                }
                SchemaField::StagingCode => rec.staging_code.clone().unwrap_or_default(),
            })
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Active exclusion rules. `None` disables a rule.
///
/// Rules that require a property (age, residence, staging, confirmation, morphology) reject a
/// record whose field is missing; the transplant rule only rejects positive codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRules {
    pub min_age: Option<u32>,
    pub resident_state: Option<String>,
    /// Staging codes meaning undefined or in situ.
    pub excluded_staging: Option<Vec<String>>,
    /// Codes meaning microscopically confirmed.
    pub confirmed_codes: Option<Vec<String>>,
    /// Codes meaning the patient underwent bone-marrow transplantation.
    pub transplant_codes: Option<Vec<String>>,
    pub morphology: Option<String>,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            min_age: Some(20),
            resident_state: Some("SP".into()),
            excluded_staging: Some(vec!["0".into(), "X".into(), "Y".into()]),
            confirmed_codes: Some(vec!["1".into()]),
            transplant_codes: Some(vec!["1".into()]),
            morphology: Some("8140/3".into()),
        }
    }
}

impl FilterRules {
    pub fn none() -> Self {
        Self {
            min_age: None,
            resident_state: None,
            excluded_staging: None,
            confirmed_codes: None,
            transplant_codes: None,
            morphology: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalCounts {
    pub age_under_min: usize,
    pub non_resident: usize,
    pub staging_undefined_or_in_situ: usize,
    pub no_microscopic_confirmation: usize,
    pub bone_marrow_transplant: usize,
    pub morphology_mismatch: usize,
}

impl RemovalCounts {
    pub fn total(&self) -> usize {
        self.age_under_min
            + self.non_resident
            + self.staging_undefined_or_in_situ
            + self.no_microscopic_confirmation
            + self.bone_marrow_transplant
            + self.morphology_mismatch
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub initial: usize,
    pub removed: RemovalCounts,
    #[serde(rename = "final")]
    pub final_count: usize,
}

fn normalize_morphology(code: &str) -> String {
    code.chars().filter(|c| c.is_ascii_alphanumeric()).collect()
}

fn in_codes(value: &Option<String>, codes: &[String]) -> bool {
    value
        .as_deref()
        .is_some_and(|v| codes.iter().any(|c| c.eq_ignore_ascii_case(v.trim())))
}

/// Index of the first active rule that rejects `rec`, in the fixed attribution order.
fn first_rejection(rec: &RawRecord, rules: &FilterRules) -> Option<usize> {
    if let Some(min) = rules.min_age {
        if rec.age.is_none_or(|a| a < min) {
            return Some(0);
        }
    }
    if let Some(state) = &rules.resident_state {
        if !rec
            .residence_state
            .as_deref()
            .is_some_and(|s| s.trim().eq_ignore_ascii_case(state))
        {
            return Some(1);
        }
    }
    if let Some(excluded) = &rules.excluded_staging {
        if rec.staging_code.is_none() || in_codes(&rec.staging_code, excluded) {
            return Some(2);
        }
    }
    if let Some(ok) = &rules.confirmed_codes {
        if !in_codes(&rec.microscopic_confirmation, ok) {
            return Some(3);
        }
    }
    if let Some(bmt) = &rules.transplant_codes {
        if in_codes(&rec.bone_marrow_transplant, bmt) {
            return Some(4);
        }
    }
    if let Some(morph) = &rules.morphology {
        let want = normalize_morphology(morph);
        if !rec
            .morphology
            .as_deref()
            .is_some_and(|m| normalize_morphology(m) == want)
        {
            return Some(5);
        }
    }
    None
}

/// Keeps records passing every active rule; each removal is attributed to the first rule
/// (age, residence, staging, confirmation, transplant, morphology) that rejects it.
pub fn apply_filters(records: &[RawRecord], rules: &FilterRules) -> (Vec<RawRecord>, FilterReport) {
    let mut kept = Vec::with_capacity(records.len());
    let mut removed = RemovalCounts::default();
    for rec in records {
        match first_rejection(rec, rules) {
            None => kept.push(rec.clone()),
            Some(0) => removed.age_under_min += 1,
            Some(1) => removed.non_resident += 1,
            Some(2) => removed.staging_undefined_or_in_situ += 1,
            Some(3) => removed.no_microscopic_confirmation += 1,
            Some(4) => removed.bone_marrow_transplant += 1,
            Some(_) => removed.morphology_mismatch += 1,
        }
    }
    let report = FilterReport {
        initial: records.len(),
        final_count: kept.len(),
        removed,
    };
    (kept, report)
}

/// Time-to-treatment bins. Ordinal rank follows declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntervalCategory {
    UpTo60,
    From61To90,
    Over90,
    Untreated,
}

impl IntervalCategory {
    pub const ORDER: [IntervalCategory; 4] = [
        IntervalCategory::UpTo60,
        IntervalCategory::From61To90,
        IntervalCategory::Over90,
        IntervalCategory::Untreated,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IntervalCategory::UpTo60 => "<=60",
            IntervalCategory::From61To90 => "61-90",
            IntervalCategory::Over90 => ">90",
            IntervalCategory::Untreated => "untreated",
        }
    }

    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn ordered_labels() -> Vec<String> {
        Self::ORDER.iter().map(|c| c.label().to_string()).collect()
    }
}

pub fn categorize_interval(days: Option<i64>) -> Result<IntervalCategory> {
    match days {
        None => Ok(IntervalCategory::Untreated),
        Some(d) if d < 0 => Err(SurvError::TreatmentPrecedesReference),
        Some(d) if d <= 60 => Ok(IntervalCategory::UpTo60),
        Some(d) if d <= 90 => Ok(IntervalCategory::From61To90),
        Some(_) => Ok(IntervalCategory::Over90),
    }
}

/// Days from `reference` to `treatment`. `Ok(None)` means untreated (no treatment date);
/// a treatment date without a reference date is an error, since only a missing treatment date
/// marks a patient as untreated.
pub fn interval_days(
    reference: Option<NaiveDate>,
    treatment: Option<NaiveDate>,
) -> Result<Option<i64>> {
    match (reference, treatment) {
        (_, None) => Ok(None),
        (Some(r), Some(t)) => Ok(Some((t - r).num_days())),
        (None, Some(_)) => Err(SurvError::InvalidInput(
            "treatment date present but reference date missing".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub days_per_month: f64,
    /// Vital-status codes meaning death from any cause.
    pub death_codes: Vec<String>,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            days_per_month: DEFAULT_DAYS_PER_MONTH,
            death_codes: vec!["3".into(), "4".into()],
        }
    }
}

fn target_for<T: Scalar>(rec: &RawRecord, config: &TargetConfig) -> Result<SurvivalTarget<T>> {
    let (Some(diag), Some(last)) = (rec.diagnosis_date, rec.last_info_date) else {
        return Err(SurvError::InvalidInput(
            "diagnosis or last-information date missing".into(),
        ));
    };
    let days = (last - diag).num_days();
    if days < 0 {
        return Err(SurvError::DatesOutOfOrder);
    }
    let event = in_codes(&rec.vital_status, &config.death_codes);
    Ok(SurvivalTarget::new(
        T::of(days as f64 / config.days_per_month),
        event,
    ))
}

/// Time in months from diagnosis to last information, and death from any cause.
pub fn build_targets<T: Scalar>(
    records: &[RawRecord],
    config: &TargetConfig,
) -> Result<Vec<SurvivalTarget<T>>> {
    if !(config.days_per_month > 0.0) {
        return Err(SurvError::InvalidInput("days_per_month must be > 0".into()));
    }
    records.iter().map(|r| target_for(r, config)).collect()
}

/// How registry covariates become cohort columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub targets: TargetConfig,
    /// Registry columns encoded ordinally; every other column is parsed as a number.
    pub ordinal_columns: Vec<RegistryColumn>,
    /// Append the two time-to-treatment category columns.
    pub include_intervals: bool,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            targets: TargetConfig::default(),
            ordinal_columns: vec![RegistryColumn::Topo, RegistryColumn::Ec],
            include_intervals: true,
        }
    }
}

/// Rows dropped while turning records into a cohort.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub input: usize,
    /// Missing or unparseable covariate, counted against the first offending column.
    pub missing_covariate: BTreeMap<String, usize>,
    pub invalid_dates: usize,
    pub treatment_precedes_reference: usize,
    pub retained: usize,
}

enum Cell<T> {
    Num(T),
    Cat(String),
}

/// Builds the pre-encoding cohort: Table-1 covariates, the two interval categories and the
/// survival targets. Rows with a missing covariate or inconsistent dates are dropped and
/// counted in the report.
pub fn assemble_cohort<T: Scalar>(
    records: &[RawRecord],
    config: &CohortConfig,
) -> Result<(RawCohort<T>, AssemblyReport)> {
    let mut report = AssemblyReport {
        input: records.len(),
        ..Default::default()
    };
    let mut names: Vec<String> = RegistryColumn::ALL.iter().map(|c| c.name().to_string()).collect();
    if config.include_intervals {
        names.extend(INTERVAL_COLUMNS.iter().map(|s| s.to_string()));
    }
    let mut rows: Vec<Vec<Cell<T>>> = Vec::new();
    let mut targets = Vec::new();

    'records: for rec in records {
        let target = match target_for::<T>(rec, &config.targets) {
            Ok(t) => t,
            Err(_) => {
                report.invalid_dates += 1;
                continue;
            }
        };
        let mut row = Vec::with_capacity(names.len());
        for col in RegistryColumn::ALL {
            let value = rec.code(col);
            let cell = match value {
                None => None,
                Some(v) if config.ordinal_columns.contains(&col) => Some(Cell::Cat(v)),
                Some(v) => v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).map(|x| Cell::Num(T::of(x))),
            };
            match cell {
                Some(c) => row.push(c),
                None => {
                    *report.missing_covariate.entry(col.name().to_string()).or_default() += 1;
                    continue 'records;
                }
            }
        }
        if config.include_intervals {
            for (k, reference) in [rec.consultation_date, rec.diagnosis_date].into_iter().enumerate() {
                let cat = match interval_days(reference, rec.treatment_date) {
                    Ok(days) => categorize_interval(days),
                    Err(_) => {
                        *report
                            .missing_covariate
                            .entry(INTERVAL_COLUMNS[k].to_string())
                            .or_default() += 1;
                        continue 'records;
                    }
                };
                match cat {
                    Ok(c) => row.push(Cell::Cat(c.label().to_string())),
                    Err(_) => {
                        report.treatment_precedes_reference += 1;
                        continue 'records;
                    }
                }
            }
        }
        rows.push(row);
        targets.push(target);
    }
    report.retained = rows.len();

    let mut columns = Vec::with_capacity(names.len());
    for (j, name) in names.into_iter().enumerate() {
        let numeric = rows.first().is_some_and(|r| matches!(r[j], Cell::Num(_)))
            || (rows.is_empty() && j < RegistryColumn::ALL.len()
                && !config.ordinal_columns.contains(&RegistryColumn::ALL[j]));
        let values = if numeric {
            RawValues::Numeric(
                rows.iter()
                    .map(|r| match &r[j] {
                        Cell::Num(x) => *x,
                        Cell::Cat(_) => unreachable!("column kinds are fixed per column"),
                    })
                    .collect(),
            )
        } else {
            RawValues::Categorical(
                rows.iter()
                    .map(|r| match &r[j] {
                        Cell::Cat(s) => s.clone(),
                        Cell::Num(_) => unreachable!("column kinds are fixed per column"),
                    })
                    .collect(),
            )
        };
        columns.push(RawColumn { name, values });
    }
    Ok((RawCohort::new(columns, targets, None)?, report))
}
