//! The nine per-record features, computed from strictly-past records only.
//!
//! Featurization runs in two steps. [`compute_base_features`] derives the
//! per-record values that depend on history (comorbidities, volume,
//! historical LoS). [`encode_features`] then turns a chosen subset of
//! features into numeric columns, fitting any encoder on train-role rows
//! only. The experiment runner reuses one base table for every rung.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codemaps::CodeMapSet;
use crate::learn::{EncodeMode, LearnError, Matrix, TargetEncoder};
use crate::model::history::{day_number, KeyedTimelines};
use crate::model::{Dataset, HistoryIndex, HospitalizationRecord, Icd9Code};
use crate::par;
use crate::provenance::Provenance;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown encoding method {0:?}")]
    UnknownMethod(String),
    #[error("invalid feature configuration: {0}")]
    ConfigInvalid(String),
    #[error("the {0} table is required for this encoding")]
    MissingTable(&'static str),
    #[error("{0} roles for {1} records")]
    LengthMismatch(usize, usize),
    #[error("no train-role rows to fit encoders on")]
    NoTrainRows,
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The Table-2 features. Flag columns belong to the feature they qualify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    AgeGroup,
    Comorbidities,
    ElixhauserIndex,
    Diagnosis,
    Procedure,
    AdmissionType,
    AdmissionMonth,
    PatientVolume,
    HistoricalLos,
}

impl Feature {
    pub const ALL: [Feature; 9] = [
        Feature::AgeGroup,
        Feature::Comorbidities,
        Feature::ElixhauserIndex,
        Feature::Diagnosis,
        Feature::Procedure,
        Feature::AdmissionType,
        Feature::AdmissionMonth,
        Feature::PatientVolume,
        Feature::HistoricalLos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::AgeGroup => "age_group",
            Feature::Comorbidities => "n_comorbidities",
            Feature::ElixhauserIndex => "elixhauser_index",
            Feature::Diagnosis => "diagnosis",
            Feature::Procedure => "procedure",
            Feature::AdmissionType => "admission_type",
            Feature::AdmissionMonth => "admission_month",
            Feature::PatientVolume => "patient_volume",
            Feature::HistoricalLos => "historical_los",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, FeatureError> {
        Feature::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| FeatureError::ConfigInvalid(format!("unknown feature {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    OneHot,
    Target,
    Embedding,
    Raw,
}

impl Encoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::OneHot => "one_hot",
            Encoding::Target => "target",
            Encoding::Embedding => "embedding",
            Encoding::Raw => "raw",
        }
    }
}

impl FromStr for Encoding {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, FeatureError> {
        match s {
            "one_hot" | "onehot" => Ok(Encoding::OneHot),
            "target" => Ok(Encoding::Target),
            "embedding" => Ok(Encoding::Embedding),
            "raw" => Ok(Encoding::Raw),
            other => Err(FeatureError::UnknownMethod(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub window_days: u32,
    pub smoothing_k: f64,
    pub target_prior: f64,
    pub target_folds: usize,
    /// Seeds the target encoders' fold assignment.
    pub seed: u64,
    pub diagnosis_encoding: Encoding,
    pub procedure_encoding: Encoding,
    pub admission_type_encoding: Encoding,
    /// Last resort for historical LoS; `None` uses the mean LoS of train rows.
    pub fallback_prior_los: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_days: 90,
            smoothing_k: 5.0,
            target_prior: 5.0,
            target_folds: 5,
            seed: 0,
            diagnosis_encoding: Encoding::Raw,
            procedure_encoding: Encoding::Raw,
            admission_type_encoding: Encoding::Raw,
            fallback_prior_los: None,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::ConfigInvalid(m.to_string()));
        if self.window_days < 1 {
            return bad("window_days must be >= 1");
        }
        if !(self.smoothing_k >= 0.0 && self.smoothing_k.is_finite()) {
            return bad("smoothing_k must be >= 0");
        }
        if !(self.target_prior >= 0.0 && self.target_prior.is_finite()) {
            return bad("target_prior must be >= 0");
        }
        if self.target_folds < 2 {
            return bad("target_folds must be >= 2");
        }
        if self.admission_type_encoding == Encoding::Embedding {
            return bad("admission type has no embedding table");
        }
        if let Some(p) = self.fallback_prior_los {
            if !(p.is_finite() && p >= 0.0) {
                return bad("fallback_prior_los must be finite and >= 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
        }
    }
}

/// `(n_comorbidities, elixhauser_index)` from the patient's stays before `t`.
/// Each category counts once, however many of its codes appear.
pub fn comorbidity_features(patient_id: &str, t: NaiveDate, index: &HistoryIndex, maps: &CodeMapSet) -> (u32, i32) {
    let codes = index.prior_diagnoses(patient_id, t);
    let cats = maps.comorbidity_categories(&codes);
    (cats.len() as u32, cats.iter().map(|(_, w)| w).sum())
}

/// Stays per observed day at the same facility with the same diagnosis in
/// the window before admission. `None` when the window has no observed day.
pub fn patient_volume(record: &HospitalizationRecord, index: &HistoryIndex, window_days: u32) -> Option<f64> {
    let t = day_number(record.admission_date);
    let start = index.coverage_start().map(day_number).unwrap_or(t);
    let observed = (t - start).clamp(0, window_days as i64);
    if observed == 0 {
        return None;
    }
    let stats = index.facility_diagnosis_window(&record.facility, &record.diagnosis, record.admission_date, window_days);
    Some(stats.count as f64 / observed as f64)
}

/// Shrinkage of an observed mean toward a global mean: `(n*obs + k*glob)/(n + k)`.
pub fn smoothed_mean(n: usize, observed_mean: f64, k: f64, global_mean: f64) -> f64 {
    if n == 0 {
        return global_mean;
    }
    let n = n as f64;
    (n * observed_mean + k * global_mean) / (n + k)
}

/// Window stays per (facility, DRG group), the pool behind the global mean.
pub struct GroupHistory {
    groups: KeyedTimelines<(String, String)>,
}

impl GroupHistory {
    pub fn build(dataset: &Dataset, maps: &CodeMapSet) -> Self {
        Self {
            groups: KeyedTimelines::build(dataset.records(), |r| {
                (r.facility.clone(), maps.drg_group(&r.diagnosis).to_string())
            }),
        }
    }
}

/// Where a historical-LoS value came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HistoricalSource {
    /// Unit mean shrunk toward the facility's DRG-group mean.
    Smoothed(f64),
    /// No DRG-group stays in the window: facility-wide window mean.
    FacilityMean(f64),
    /// No facility stays in the window either.
    Prior,
}

pub fn historical_los_source(
    record: &HospitalizationRecord,
    index: &HistoryIndex,
    groups: &GroupHistory,
    maps: &CodeMapSet,
    window_days: u32,
    k: f64,
) -> HistoricalSource {
    let t = record.admission_date;
    let (from, before) = crate::model::history::window_bounds(t, window_days);
    let unit = index.unit_window(&record.facility, &record.department, &record.diagnosis, t, window_days);
    let key = (record.facility.clone(), maps.drg_group(&record.diagnosis).to_string());
    match groups.groups.window(&key, from, before).mean() {
        Some(glob) => HistoricalSource::Smoothed(smoothed_mean(unit.count, unit.mean().unwrap_or(glob), k, glob)),
        None => match index.facility_window(&record.facility, t, window_days).mean() {
            Some(m) => HistoricalSource::FacilityMean(m),
            None => HistoricalSource::Prior,
        },
    }
}

/// Smoothed historical mean LoS of the record's unit and diagnosis.
pub fn historical_los(
    record: &HospitalizationRecord,
    index: &HistoryIndex,
    groups: &GroupHistory,
    maps: &CodeMapSet,
    cfg: &FeatureConfig,
    prior: f64,
) -> f64 {
    match historical_los_source(record, index, groups, maps, cfg.window_days, cfg.smoothing_k) {
        HistoricalSource::Smoothed(v) | HistoricalSource::FacilityMean(v) => v,
        HistoricalSource::Prior => prior,
    }
}

/// History-derived and raw per-record values, before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRow {
    pub age_group: usize,
    pub n_comorbidities: u32,
    pub elixhauser_index: i32,
    pub diagnosis: Icd9Code,
    pub procedure: Option<Icd9Code>,
    pub admission_type: usize,
    pub admission_month: u32,
    pub patient_volume: Option<f64>,
    pub historical_los: HistoricalSource,
    pub los: f64,
}

pub fn compute_base_features(
    dataset: &Dataset,
    index: &HistoryIndex,
    maps: &CodeMapSet,
    cfg: &FeatureConfig,
) -> Result<Vec<BaseRow>, FeatureError> {
    cfg.validate()?;
    let groups = GroupHistory::build(dataset, maps);
    Ok(par::map(dataset.records(), |r| {
        let (n_comorbidities, elixhauser_index) = comorbidity_features(&r.patient_id, r.admission_date, index, maps);
        BaseRow {
            age_group: r.age_group.index(),
            n_comorbidities,
            elixhauser_index,
            diagnosis: r.diagnosis.clone(),
            procedure: r.procedure.clone(),
            admission_type: r.admission_type.index(),
            admission_month: r.admission_date.month(),
            patient_volume: patient_volume(r, index, cfg.window_days),
            historical_los: historical_los_source(r, index, &groups, maps, cfg.window_days, cfg.smoothing_k),
            los: r.los_days() as f64,
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    /// Integer category ids, for learners with native categorical handling.
    Categorical,
    /// One component of an appended vector block.
    Vector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub feature: Feature,
}

/// What was fitted to produce a feature's columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderInfo {
    pub feature: Feature,
    pub method: Encoding,
    /// One-hot categories seen in training, or target-encoder categories.
    pub categories: usize,
    pub dimension: Option<usize>,
    pub table_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<Column>,
    pub encoders: Vec<EncoderInfo>,
    pub config: FeatureConfig,
    /// Resolved fallback for historical LoS.
    pub fallback_prior_los: f64,
}

impl FeatureSchema {
    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn categorical_columns(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&j| self.columns[j].kind == ColumnKind::Categorical).collect()
    }

    /// Column indices of each feature, in schema order.
    pub fn feature_groups(&self) -> Vec<(Feature, Vec<usize>)> {
        let mut out: Vec<(Feature, Vec<usize>)> = Vec::new();
        for (j, c) in self.columns.iter().enumerate() {
            match out.iter_mut().find(|(f, _)| *f == c.feature) {
                Some((_, cols)) => cols.push(j),
                None => out.push((c.feature, vec![j])),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub values: Matrix,
    pub targets: Vec<f64>,
    pub roles: Vec<Option<Role>>,
    pub patient_ids: Vec<String>,
    pub admission_dates: Vec<NaiveDate>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn rows_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.roles[i] == Some(role)).collect()
    }

    /// Feature values and targets of the given rows.
    pub fn subset(&self, rows: &[usize]) -> (Matrix, Vec<f64>) {
        (self.values.select_rows(rows), rows.iter().map(|&i| self.targets[i]).collect())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.schema.columns.iter().position(|c| c.name == name).map(|j| self.values.col(j))
    }

    pub fn write_csv(&self, mut out: impl Write, provenance: &Provenance) -> Result<(), FeatureError> {
        out.write_all(provenance.comment_header().as_bytes())?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["patient_id".to_string(), "admission_date".into(), "role".into(), "los_days".into()];
        header.extend(self.schema.column_names());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n_rows() {
            let mut row = vec![
                self.patient_ids[i].clone(),
                self.admission_dates[i].to_string(),
                self.roles[i].map_or("excluded", Role::as_str).to_string(),
                self.targets[i].to_string(),
            ];
            row.extend((0..self.values.n_cols()).map(|j| format_value(self.values.get(i, j))));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn schema_json(&self, provenance: &Provenance) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            provenance: &'a Provenance,
            #[serde(flatten)]
            schema: &'a FeatureSchema,
        }
        serde_json::to_string_pretty(&Sidecar { provenance, schema: &self.schema }).expect("schema serializes") + "\n"
    }

    pub fn read(csv_in: impl BufRead, schema_json: &str) -> Result<Self, FeatureError> {
        let schema: FeatureSchema =
            serde_json::from_str(schema_json).map_err(|e| FeatureError::Format(format!("schema: {e}")))?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv_in);
        let header = r.headers().map_err(csv_err)?.clone();
        let expected: Vec<String> = ["patient_id", "admission_date", "role", "los_days"]
            .iter()
            .map(|s| s.to_string())
            .chain(schema.column_names())
            .collect();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(FeatureError::Format("CSV header does not match the schema".into()));
        }
        let p = schema.columns.len();
        let mut cols = vec![Vec::new(); p];
        let (mut targets, mut roles, mut patient_ids, mut dates) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let bad = |what: &str| FeatureError::Format(format!("row {}: bad {what}", line + 1));
            patient_ids.push(rec[0].to_string());
            dates.push(rec[1].parse::<NaiveDate>().map_err(|_| bad("admission_date"))?);
            roles.push(match &rec[2] {
                "train" => Some(Role::Train),
                "validation" => Some(Role::Validation),
                "test" => Some(Role::Test),
                "excluded" => None,
                _ => return Err(bad("role")),
            });
            targets.push(rec[3].parse::<f64>().map_err(|_| bad("los_days"))?);
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(rec[4 + j].parse::<f64>().map_err(|_| bad(&schema.columns[j].name))?);
            }
        }
        let values = if p == 0 { Matrix::empty(targets.len()) } else { Matrix::from_columns(cols)? };
        Ok(Self { schema, values, targets, roles, patient_ids, admission_dates: dates })
    }
}

fn csv_err(e: csv::Error) -> FeatureError {
    FeatureError::Format(e.to_string())
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

/// Category id used by raw and target encodings; a missing procedure is -1.
fn category_id(code: Option<&Icd9Code>) -> i64 {
    code.map_or(-1, Icd9Code::stable_id)
}

struct Builder {
    columns: Vec<Column>,
    data: Vec<Vec<f64>>,
    encoders: Vec<EncoderInfo>,
}

impl Builder {
    fn push(&mut self, name: impl Into<String>, kind: ColumnKind, feature: Feature, values: Vec<f64>) {
        self.columns.push(Column { name: name.into(), kind, feature });
        self.data.push(values);
    }
}

/// Encodes one categorical column.
///
/// `ids` are category ids; `labels` give one-hot column names. `embed` looks
/// up a code's vector and whether it was found.
#[allow(clippy::too_many_arguments)]
fn encode_categorical_into(
    b: &mut Builder,
    feature: Feature,
    method: Encoding,
    ids: &[i64],
    label: impl Fn(i64) -> String,
    embed: Option<(&dyn Fn(usize) -> (Vec<f64>, bool), usize, Option<String>)>,
    train_rows: &[usize],
    targets: &[f64],
    cfg: &FeatureConfig,
) -> Result<(), FeatureError> {
    let name = feature.as_str();
    match method {
        Encoding::Raw => {
            b.push(name, ColumnKind::Categorical, feature, ids.iter().map(|&c| c as f64).collect());
            b.encoders.push(EncoderInfo {
                feature,
                method,
                categories: ids.iter().collect::<BTreeSet<_>>().len(),
                dimension: None,
                table_source: None,
            });
        }
        Encoding::OneHot => {
            let seen: BTreeSet<i64> = train_rows.iter().map(|&i| ids[i]).collect();
            let position: BTreeMap<i64, usize> = seen.iter().enumerate().map(|(k, &c)| (c, k)).collect();
            let mut blocks = vec![vec![0.0; ids.len()]; seen.len() + 1];
            for (i, c) in ids.iter().enumerate() {
                blocks[position.get(c).copied().unwrap_or(seen.len())][i] = 1.0;
            }
            for (c, col) in seen.iter().map(Some).chain([None]).zip(blocks) {
                let col_name = match c {
                    Some(&c) => format!("{name}={}", label(c)),
                    None => format!("{name}=other"),
                };
                b.push(col_name, ColumnKind::Numeric, feature, col);
            }
            b.encoders.push(EncoderInfo { feature, method, categories: seen.len(), dimension: None, table_source: None });
        }
        Encoding::Target => {
            if train_rows.is_empty() {
                return Err(FeatureError::NoTrainRows);
            }
            let train_ids: Vec<i64> = train_rows.iter().map(|&i| ids[i]).collect();
            let train_y: Vec<f64> = train_rows.iter().map(|&i| targets[i]).collect();
            let enc = TargetEncoder::fit(&train_ids, &train_y, cfg.target_prior, cfg.target_folds, cfg.seed ^ feature as u64)?;
            let mut col: Vec<f64> = ids.iter().map(|&c| enc.encode_one(c)).collect();
            for (&i, v) in train_rows.iter().zip(enc.apply(&train_ids, EncodeMode::Train)?) {
                col[i] = v;
            }
            b.push(name, ColumnKind::Numeric, feature, col);
            b.encoders.push(EncoderInfo {
                feature,
                method,
                categories: enc.n_categories(),
                dimension: None,
                table_source: None,
            });
        }
        Encoding::Embedding => {
            let (lookup, dim, source) = embed.ok_or(FeatureError::MissingTable("embedding"))?;
            let rows: Vec<(Vec<f64>, bool)> = (0..ids.len()).map(lookup).collect();
            for d in 0..dim {
                b.push(format!("{name}_emb_{}", d + 1), ColumnKind::Vector, feature, rows.iter().map(|r| r.0[d]).collect());
            }
            b.push(
                format!("{name}_emb_missing"),
                ColumnKind::Numeric,
                feature,
                rows.iter().map(|r| if r.1 { 0.0 } else { 1.0 }).collect(),
            );
            b.encoders.push(EncoderInfo { feature, method, categories: 0, dimension: Some(dim), table_source: source });
        }
    }
    Ok(())
}

/// Encodes one categorical column of plain category ids (no embeddings).
pub fn encode_categorical(
    feature: Feature,
    ids: &[i64],
    method: Encoding,
    train_rows: &[usize],
    targets: &[f64],
    cfg: &FeatureConfig,
) -> Result<(Vec<Column>, Matrix), FeatureError> {
    let mut b = Builder { columns: Vec::new(), data: Vec::new(), encoders: Vec::new() };
    encode_categorical_into(&mut b, feature, method, ids, |c| c.to_string(), None, train_rows, targets, cfg)?;
    Ok((b.columns, Matrix::from_columns(b.data)?))
}

/// Encodes `features` (schema order follows [`Feature::ALL`]) for every row.
pub fn encode_features(
    dataset: &Dataset,
    base: &[BaseRow],
    maps: &CodeMapSet,
    cfg: &FeatureConfig,
    roles: &[Option<Role>],
    features: &[Feature],
) -> Result<FeatureMatrix, FeatureError> {
    cfg.validate()?;
    let n = base.len();
    if roles.len() != n || dataset.len() != n {
        return Err(FeatureError::LengthMismatch(roles.len(), n));
    }
    let targets: Vec<f64> = base.iter().map(|r| r.los).collect();
    let train_rows: Vec<usize> = (0..n).filter(|&i| roles[i] == Some(Role::Train)).collect();
    let prior = match cfg.fallback_prior_los {
        Some(p) => p,
        None if train_rows.is_empty() => return Err(FeatureError::NoTrainRows),
        None => train_rows.iter().map(|&i| targets[i]).sum::<f64>() / train_rows.len() as f64,
    };
    let wanted: BTreeSet<Feature> = features.iter().copied().collect();
    let mut b = Builder { columns: Vec::new(), data: Vec::new(), encoders: Vec::new() };
    let numeric = |f: fn(&BaseRow) -> f64| base.iter().map(f).collect::<Vec<f64>>();

    for feature in Feature::ALL.into_iter().filter(|f| wanted.contains(f)) {
        match feature {
            Feature::AgeGroup => b.push("age_group", ColumnKind::Numeric, feature, numeric(|r| r.age_group as f64)),
            Feature::Comorbidities => {
                b.push("n_comorbidities", ColumnKind::Numeric, feature, numeric(|r| r.n_comorbidities as f64))
            }
            Feature::ElixhauserIndex => {
                b.push("elixhauser_index", ColumnKind::Numeric, feature, numeric(|r| r.elixhauser_index as f64))
            }
            Feature::AdmissionMonth => {
                b.push("admission_month", ColumnKind::Categorical, feature, numeric(|r| r.admission_month as f64))
            }
            Feature::PatientVolume => {
                b.push("patient_volume", ColumnKind::Numeric, feature, numeric(|r| r.patient_volume.unwrap_or(0.0)));
                b.push(
                    "patient_volume_missing",
                    ColumnKind::Numeric,
                    feature,
                    numeric(|r| if r.patient_volume.is_none() { 1.0 } else { 0.0 }),
                );
            }
            Feature::HistoricalLos => {
                let values = base
                    .iter()
                    .map(|r| match r.historical_los {
                        HistoricalSource::Smoothed(v) | HistoricalSource::FacilityMean(v) => v,
                        HistoricalSource::Prior => prior,
                    })
                    .collect();
                b.push("historical_los", ColumnKind::Numeric, feature, values);
                b.push(
                    "historical_los_fallback",
                    ColumnKind::Numeric,
                    feature,
                    numeric(|r| if matches!(r.historical_los, HistoricalSource::Smoothed(_)) { 0.0 } else { 1.0 }),
                );
            }
            Feature::AdmissionType => {
                let ids: Vec<i64> = base.iter().map(|r| r.admission_type as i64).collect();
                let label = |c: i64| crate::model::AdmissionType::ALL[c as usize].as_str().to_string();
                encode_categorical_into(
                    &mut b,
                    feature,
                    cfg.admission_type_encoding,
                    &ids,
                    label,
                    None,
                    &train_rows,
                    &targets,
                    cfg,
                )?;
            }
            Feature::Diagnosis | Feature::Procedure => {
                let is_dx = feature == Feature::Diagnosis;
                let method = if is_dx { cfg.diagnosis_encoding } else { cfg.procedure_encoding };
                let code = |i: usize| if is_dx { Some(&base[i].diagnosis) } else { base[i].procedure.as_ref() };
                let ids: Vec<i64> = (0..n).map(|i| category_id(code(i))).collect();
                let labels: BTreeMap<i64, String> =
                    (0..n).map(|i| (ids[i], code(i).map_or("none".to_string(), |c| c.to_string()))).collect();
                let table = if is_dx { maps.dx_embeddings.as_ref() } else { maps.px_embeddings.as_ref() };
                let lookup = |i: usize| -> (Vec<f64>, bool) {
                    if is_dx {
                        maps.diagnosis_embedding(&base[i].diagnosis).expect("table checked")
                    } else {
                        maps.procedure_embedding(base[i].procedure.as_ref()).expect("table checked")
                    }
                };
                let embed = match (method, table) {
                    (Encoding::Embedding, None) => {
                        return Err(FeatureError::MissingTable(if is_dx { "diagnosis embedding" } else { "procedure embedding" }))
                    }
                    (_, Some(t)) => Some((&lookup as &dyn Fn(usize) -> (Vec<f64>, bool), t.dimension(), t.provenance.source.clone())),
                    _ => None,
                };
                encode_categorical_into(
                    &mut b,
                    feature,
                    method,
                    &ids,
                    |c| labels.get(&c).cloned().unwrap_or_default(),
                    embed,
                    &train_rows,
                    &targets,
                    cfg,
                )?;
            }
        }
    }

    let values = if b.data.is_empty() { Matrix::empty(n) } else { Matrix::from_columns(b.data)? };
    Ok(FeatureMatrix {
        schema: FeatureSchema { columns: b.columns, encoders: b.encoders, config: cfg.clone(), fallback_prior_los: prior },
        values,
        targets,
        roles: roles.to_vec(),
        patient_ids: dataset.records().iter().map(|r| r.patient_id.clone()).collect(),
        admission_dates: dataset.records().iter().map(|r| r.admission_date).collect(),
    })
}

/// All nine features for every record.
pub fn featurize(
    dataset: &Dataset,
    index: &HistoryIndex,
    maps: &CodeMapSet,
    cfg: &FeatureConfig,
    roles: &[Option<Role>],
) -> Result<FeatureMatrix, FeatureError> {
    let base = compute_base_features(dataset, index, maps, cfg)?;
    encode_features(dataset, &base, maps, cfg, roles, &Feature::ALL)
}
