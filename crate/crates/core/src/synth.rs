//! Seeded synthetic hospitalization datasets.
//!
//! Default marginals (age group, admission type, month, year) follow the
//! published counts of the Piedmont cohort. LoS is log-normal with additive
//! effects on the log scale. Facility and department effects are not visible
//! as record fields to a model: they only show up through history-derived
//! features, which is what makes the historical-LoS feature informative.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use chrono::{Datelike, Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codemaps::{
    parse_map_table, CodeMapSet, ElixhauserMap, EmbeddingTable, LoadedTable, MapTable, TableKind, TableProvenance,
};
use crate::model::{AdmissionType, AgeGroup, CodeKind, Dataset, HospitalizationRecord, Icd9Code};
use crate::par::{self, mix_seed};
use crate::stats::{group_descriptives, DescriptiveRow};

/// Stays per age group, "0" through "90+".
pub const PAPER_AGE_COUNTS: [f64; 20] = [
    3215.0, 2215.0, 898.0, 599.0, 927.0, 1183.0, 1824.0, 2646.0, 2485.0, 1976.0, 2510.0, 3184.0, 4092.0, 4374.0,
    4793.0, 5558.0, 5734.0, 5566.0, 3893.0, 2012.0,
];
/// Surgical, medical, ordinary.
pub const PAPER_TYPE_COUNTS: [f64; 3] = [8090.0, 3777.0, 47817.0];
pub const PAPER_MONTH_COUNTS: [f64; 12] =
    [4641.0, 4617.0, 5175.0, 4381.0, 5076.0, 5079.0, 5329.0, 4509.0, 5270.0, 5900.0, 5600.0, 4107.0];
/// 2020 through 2023.
pub const PAPER_YEAR_COUNTS: [f64; 4] = [10147.0, 15142.0, 16674.0, 17721.0];

const AGE_MEDIANS: [f64; 20] = [3., 3., 2., 2., 3., 3., 3., 3., 3., 3., 3., 3., 4., 4., 5., 6., 7., 8., 9., 9.];
const TYPE_MEDIANS: [f64; 3] = [1.0, 7.0, 5.0];
const MONTH_MEDIANS: [f64; 12] = [5., 4., 4., 5., 5., 4., 4., 5., 4., 4., 4., 3.];

const ELIXHAUSER_TABLE: &str = include_str!("../fixtures/maps/elixhauser.csv");

/// Frequent inpatient diagnoses, used as the head of the Zipf pool.
const CURATED_DIAGNOSES: [&str; 40] = [
    "428.0", "486", "410.71", "427.31", "584.9", "820.8", "724.2", "599.0", "496", "414.01", "518.81", "038.9",
    "434.91", "715.96", "562.11", "574.20", "540.9", "682.6", "577.0", "786.50", "780.2", "996.81", "401.9", "250.00",
    "491.21", "585.9", "571.5", "162.9", "197.7", "276.1", "250.40", "403.90", "707.03", "332.0", "295.30", "311",
    "303.90", "278.01", "280.0", "414.00",
];
const CURATED_ICD10: [(&str, &str); 12] = [
    ("428.0", "I50.9"),
    ("486", "J18.9"),
    ("410.71", "I21.4"),
    ("427.31", "I48.91"),
    ("584.9", "N17.9"),
    ("820.8", "S72.009A"),
    ("724.2", "M54.5"),
    ("599.0", "N39.0"),
    ("496", "J44.9"),
    ("414.01", "I25.10"),
    ("401.9", "I10"),
    ("250.00", "E11.9"),
];
const CURATED_PROCEDURES: [&str; 10] =
    ["88.93", "99.04", "45.13", "81.54", "36.01", "00.66", "38.93", "87.44", "74.1", "68.49"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    ConfigInvalid(String),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Additive effects on log-LoS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectModel {
    pub base_log_los: f64,
    /// One per age group.
    pub age: Vec<f64>,
    /// Surgical, medical, ordinary.
    pub admission_type: Vec<f64>,
    /// January through December.
    pub month: Vec<f64>,
    pub diagnosis_sd: f64,
    pub procedure_sd: f64,
    pub facility_sd: f64,
    /// Spread of the (facility, department) effect.
    pub department_sd: f64,
    /// Larger facilities get shorter stays: effect `-volume * z(log size)`.
    pub volume: f64,
    /// Per distinct comorbidity category in the patient's earlier stays.
    pub comorbidity: f64,
    pub noise_sd: f64,
}

impl Default for EffectModel {
    fn default() -> Self {
        let rel = |m: &[f64], to: f64| m.iter().map(|v| (v / to).ln()).collect::<Vec<_>>();
        Self {
            base_log_los: 4.5f64.ln(),
            age: rel(&AGE_MEDIANS, 4.0),
            admission_type: rel(&TYPE_MEDIANS, 5.0),
            month: rel(&MONTH_MEDIANS, 4.3),
            diagnosis_sd: 0.5,
            procedure_sd: 0.35,
            facility_sd: 0.45,
            department_sd: 0.5,
            volume: 0.15,
            comorbidity: 0.2,
            noise_sd: 0.55,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_records: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    /// Proportions per age group.
    pub age_distribution: Vec<f64>,
    /// Surgical, medical, ordinary.
    pub type_distribution: Vec<f64>,
    pub month_distribution: Vec<f64>,
    /// One weight per calendar year in the date range; `None` weighs years by
    /// their number of days in range.
    pub year_weights: Option<Vec<f64>>,
    pub diagnosis_pool: usize,
    pub diagnosis_zipf: f64,
    pub procedure_pool: usize,
    pub procedure_zipf: f64,
    pub procedure_missing_rate: f64,
    pub facilities: usize,
    pub facility_zipf: f64,
    pub departments: usize,
    /// Chance that a record belongs to an already-seen patient.
    pub readmission_rate: f64,
    pub max_los: u32,
    /// Diagnoses per synthetic DRG group.
    pub drg_group_size: usize,
    pub effects: EffectModel,
}

fn normalized(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_records: 50_000,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            end_date: NaiveDate::from_ymd_opt(2023, 12, 31).expect("valid date"),
            age_distribution: normalized(&PAPER_AGE_COUNTS),
            type_distribution: normalized(&PAPER_TYPE_COUNTS),
            month_distribution: normalized(&PAPER_MONTH_COUNTS),
            year_weights: Some(PAPER_YEAR_COUNTS.to_vec()),
            diagnosis_pool: 3689,
            diagnosis_zipf: 1.05,
            procedure_pool: 1645,
            procedure_zipf: 1.05,
            procedure_missing_rate: 0.3,
            facilities: 66,
            facility_zipf: 0.9,
            departments: 52,
            readmission_rate: 0.37,
            max_los: 365,
            drg_group_size: 8,
            effects: EffectModel::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::ConfigInvalid(m));
        let distribution = |name: &str, d: &[f64], len: usize| -> Result<(), SynthError> {
            if d.len() != len {
                return bad(format!("{name} needs {len} entries, got {}", d.len()));
            }
            if d.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return bad(format!("{name} has a negative or non-finite entry"));
            }
            let sum: f64 = d.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("{name} sums to {sum}, not 1"));
            }
            Ok(())
        };
        distribution("age_distribution", &self.age_distribution, AgeGroup::COUNT)?;
        distribution("type_distribution", &self.type_distribution, 3)?;
        distribution("month_distribution", &self.month_distribution, 12)?;
        if self.end_date < self.start_date {
            return bad("end_date is before start_date".into());
        }
        let years = (self.end_date.year() - self.start_date.year() + 1) as usize;
        if let Some(w) = &self.year_weights {
            if w.len() != years {
                return bad(format!("year_weights needs {years} entries for the date range, got {}", w.len()));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad("year_weights must be non-negative with a positive sum".into());
            }
        }
        for (name, v) in [
            ("diagnosis_pool", self.diagnosis_pool),
            ("procedure_pool", self.procedure_pool),
            ("facilities", self.facilities),
            ("departments", self.departments),
            ("drg_group_size", self.drg_group_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.diagnosis_pool > 9000 || self.procedure_pool > 9000 {
            return bad("code pools are limited to 9000 codes".into());
        }
        for (name, v) in [("readmission_rate", self.readmission_rate), ("procedure_missing_rate", self.procedure_missing_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        for (name, v) in [("diagnosis_zipf", self.diagnosis_zipf), ("procedure_zipf", self.procedure_zipf), ("facility_zipf", self.facility_zipf)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0"));
            }
        }
        if self.max_los < 1 {
            return bad("max_los must be >= 1".into());
        }
        let e = &self.effects;
        if !(e.noise_sd > 0.0 && e.noise_sd.is_finite()) {
            return bad(format!("noise scale must be > 0, got {}", e.noise_sd));
        }
        if e.age.len() != AgeGroup::COUNT || e.admission_type.len() != 3 || e.month.len() != 12 {
            return bad("effect vectors need 20 age, 3 type and 12 month entries".into());
        }
        for v in [e.diagnosis_sd, e.procedure_sd, e.facility_sd, e.department_sd] {
            if !(v.is_finite() && v >= 0.0) {
                return bad("effect spreads must be >= 0".into());
            }
        }
        Ok(())
    }
}

struct Facility {
    name: String,
    effect: f64,
    departments: Vec<(String, f64)>,
}

/// Everything shared by all records: code pools, effects, facilities.
struct World {
    diagnoses: Vec<Icd9Code>,
    diagnosis_effects: Vec<f64>,
    procedures: Vec<Icd9Code>,
    procedure_effects: Vec<f64>,
    facilities: Vec<Facility>,
    elixhauser: ElixhauserMap,
    dx_sampler: WeightedIndex<f64>,
    px_sampler: WeightedIndex<f64>,
    facility_sampler: WeightedIndex<f64>,
    age_sampler: WeightedIndex<f64>,
    type_sampler: WeightedIndex<f64>,
    month_sampler: WeightedIndex<f64>,
    year_sampler: WeightedIndex<f64>,
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-s)).collect()
}

fn diagnosis_pool(n: usize) -> Vec<Icd9Code> {
    let parse = |t: &str| Icd9Code::parse(t, CodeKind::Diagnosis).expect("pool codes are valid");
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for t in CURATED_DIAGNOSES.iter().take(n) {
        let c = parse(t);
        seen.insert(c.clone());
        out.push(c);
    }
    let mut k = 0usize;
    while out.len() < n {
        let root = 1 + (k * 389) % 999;
        let sub = (k / 999) % 10;
        let c = parse(&format!("{root:03}.{sub}"));
        if seen.insert(c.clone()) {
            out.push(c);
        }
        k += 1;
    }
    out
}

fn procedure_pool(n: usize) -> Vec<Icd9Code> {
    let parse = |t: &str| Icd9Code::parse(t, CodeKind::Procedure).expect("pool codes are valid");
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for t in CURATED_PROCEDURES.iter().take(n) {
        let c = parse(t);
        seen.insert(c.clone());
        out.push(c);
    }
    let mut k = 0usize;
    while out.len() < n {
        let root = (k * 37) % 100;
        let sub = (k / 100) % 100;
        let c = parse(&format!("{root:02}.{sub:02}"));
        if seen.insert(c.clone()) {
            out.push(c);
        }
        k += 1;
    }
    out
}

fn synthetic_elixhauser() -> ElixhauserMap {
    match parse_map_table("elixhauser", ELIXHAUSER_TABLE, TableKind::Elixhauser) {
        Ok(LoadedTable::Elixhauser(e)) => e,
        _ => unreachable!("bundled Elixhauser table is valid"),
    }
}

fn weighted(w: &[f64]) -> Result<WeightedIndex<f64>, SynthError> {
    WeightedIndex::new(w).map_err(|e| SynthError::ConfigInvalid(e.to_string()))
}

impl World {
    fn build(cfg: &GeneratorConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::MAX));
        let e = &cfg.effects;
        let normal = |rng: &mut ChaCha8Rng, sd: f64| sd * rng.sample::<f64, _>(StandardNormal);

        let diagnoses = diagnosis_pool(cfg.diagnosis_pool);
        let diagnosis_effects = diagnoses.iter().map(|_| normal(&mut rng, e.diagnosis_sd)).collect();
        let procedures = procedure_pool(cfg.procedure_pool);
        let procedure_effects = procedures.iter().map(|_| normal(&mut rng, e.procedure_sd)).collect();

        let facility_weights = zipf_weights(cfg.facilities, cfg.facility_zipf);
        let log_size: Vec<f64> = facility_weights.iter().map(|w| w.ln()).collect();
        let mean = log_size.iter().sum::<f64>() / log_size.len() as f64;
        let sd = (log_size.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / log_size.len() as f64).sqrt();
        let department_names: Vec<String> = (1..=cfg.departments).map(|d| format!("DEP{d:02}")).collect();
        let mut facilities = Vec::with_capacity(cfg.facilities);
        for (f, ls) in log_size.iter().enumerate() {
            let z = if sd > 0.0 { (ls - mean) / sd } else { 0.0 };
            let effect = normal(&mut rng, e.facility_sd) - e.volume * z;
            let n_dept = rng.gen_range(2..=12usize).min(cfg.departments);
            let picked = rand::seq::index::sample(&mut rng, cfg.departments, n_dept).into_vec();
            let departments = picked
                .into_iter()
                .map(|d| (department_names[d].clone(), normal(&mut rng, e.department_sd)))
                .collect();
            facilities.push(Facility { name: format!("F{:03}", f + 1), effect, departments });
        }

        let first_year = cfg.start_date.year();
        let year_weights = match &cfg.year_weights {
            Some(w) => w.clone(),
            None => (first_year..=cfg.end_date.year())
                .map(|y| {
                    let lo = cfg.start_date.max(NaiveDate::from_ymd_opt(y, 1, 1).expect("valid date"));
                    let hi = cfg.end_date.min(NaiveDate::from_ymd_opt(y, 12, 31).expect("valid date"));
                    ((hi - lo).num_days() + 1) as f64
                })
                .collect(),
        };

        Ok(Self {
            dx_sampler: weighted(&zipf_weights(diagnoses.len(), cfg.diagnosis_zipf))?,
            px_sampler: weighted(&zipf_weights(procedures.len(), cfg.procedure_zipf))?,
            facility_sampler: weighted(&facility_weights)?,
            age_sampler: weighted(&cfg.age_distribution)?,
            type_sampler: weighted(&cfg.type_distribution)?,
            month_sampler: weighted(&cfg.month_distribution)?,
            year_sampler: weighted(&year_weights)?,
            diagnoses,
            diagnosis_effects,
            procedures,
            procedure_effects,
            facilities,
            elixhauser: synthetic_elixhauser(),
        })
    }
}

/// Per-record draws, made independently of every other record.
struct Draw {
    ordinal: usize,
    date: NaiveDate,
    age: usize,
    admission_type: usize,
    diagnosis: usize,
    procedure: Option<usize>,
    facility: usize,
    department: usize,
    noise: f64,
    reuse: Option<f64>,
}

fn draw_record(world: &World, cfg: &GeneratorConfig, ordinal: usize) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, ordinal as u64));
    let first_year = cfg.start_date.year();
    let mut date = cfg.start_date;
    for _ in 0..1000 {
        let year = first_year + world.year_sampler.sample(&mut rng) as i32;
        let month = world.month_sampler.sample(&mut rng) as u32 + 1;
        let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid date");
        let next = if month == 12 {
            NaiveDate::from_ymd_opt(year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(year, month + 1, 1)
        }
        .expect("valid date");
        let day = rng.gen_range(0..(next - first).num_days());
        let d = first + Duration::days(day);
        if d >= cfg.start_date && d <= cfg.end_date {
            date = d;
            break;
        }
    }
    let age = world.age_sampler.sample(&mut rng);
    let admission_type = world.type_sampler.sample(&mut rng);
    let diagnosis = world.dx_sampler.sample(&mut rng);
    let procedure = if rng.gen::<f64>() < cfg.procedure_missing_rate { None } else { Some(world.px_sampler.sample(&mut rng)) };
    let facility = world.facility_sampler.sample(&mut rng);
    let n_dept = world.facilities[facility].departments.len();
    // Most stays of a diagnosis land in the same department of a facility.
    let department = if rng.gen::<f64>() < 0.8 {
        (mix_seed(diagnosis as u64, facility as u64) % n_dept as u64) as usize
    } else {
        rng.gen_range(0..n_dept)
    };
    let noise = cfg.effects.noise_sd * rng.sample::<f64, _>(StandardNormal);
    let reuse = if rng.gen::<f64>() < cfg.readmission_rate { Some(rng.gen::<f64>()) } else { None };
    Draw { ordinal, date, age, admission_type, diagnosis, procedure, facility, department, noise, reuse }
}

/// Generates `n_records` valid records; output is a pure function of the config.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Dataset, SynthError> {
    let world = World::build(cfg)?;
    let mut draws = par::map_range(cfg.n_records, |i| draw_record(&world, cfg, i));
    draws.sort_by_key(|d| (d.date, d.ordinal));

    let e = &cfg.effects;
    // Patient of each sorted record, and each patient's age group.
    let mut patient_of: Vec<usize> = Vec::with_capacity(draws.len());
    let mut patient_age: Vec<usize> = Vec::new();
    let mut history: HashMap<usize, Vec<(NaiveDate, usize)>> = HashMap::new();
    let mut records = Vec::with_capacity(draws.len());
    for (k, d) in draws.iter().enumerate() {
        let patient = match d.reuse {
            Some(u) if k > 0 => patient_of[((u * k as f64) as usize).min(k - 1)],
            _ => {
                patient_age.push(d.age);
                patient_age.len() - 1
            }
        };
        patient_of.push(patient);

        let past = history.entry(patient).or_default();
        let categories: HashSet<&str> = past
            .iter()
            .filter(|(t, _)| *t < d.date)
            .filter_map(|(_, dx)| world.elixhauser.lookup(&world.diagnoses[*dx]).map(|(c, _)| c))
            .collect();
        past.push((d.date, d.diagnosis));

        let facility = &world.facilities[d.facility];
        let (department, dept_effect) = &facility.departments[d.department];
        let age = patient_age[patient];
        let month = d.date.month0() as usize;
        let log_los = e.base_log_los
            + e.age[age]
            + e.admission_type[d.admission_type]
            + e.month[month]
            + world.diagnosis_effects[d.diagnosis]
            + d.procedure.map_or(0.0, |p| world.procedure_effects[p])
            + facility.effect
            + dept_effect
            + e.comorbidity * categories.len() as f64
            + d.noise;
        let los = (log_los.exp().round().clamp(1.0, cfg.max_los as f64)) as i64;
        let admission_type = AdmissionType::ALL[d.admission_type];
        let record = HospitalizationRecord::new(
            format!("P{:07}", patient + 1),
            AgeGroup::from_index(age).expect("age index in range"),
            world.diagnoses[d.diagnosis].clone(),
            d.procedure.map(|p| world.procedures[p].clone()),
            facility.name.clone(),
            department.clone(),
            admission_type,
            d.date,
            d.date + Duration::days(los),
        )
        .expect("LoS is at least one day");
        records.push(record);
    }
    Ok(Dataset::from_records(records))
}

/// Code tables matching a generated dataset: a GEM subset, DRG groups that
/// cluster diagnoses with similar effects, the Elixhauser table, and
/// embeddings that carry a noisy copy of each code's effect.
pub fn synthetic_code_maps(cfg: &GeneratorConfig) -> Result<CodeMapSet, SynthError> {
    let world = World::build(cfg)?;
    let provenance = |what: &str| TableProvenance {
        source: Some(format!("loskit synthetic {what}")),
        version: Some(format!("seed-{}", cfg.seed)),
        params: BTreeMap::new(),
    };

    let mut gem = MapTable::new("gem", CodeKind::Diagnosis, provenance("GEM subset"));
    for (icd9, icd10) in CURATED_ICD10 {
        let code = Icd9Code::parse(icd9, CodeKind::Diagnosis).expect("valid code");
        if world.diagnoses.contains(&code) {
            gem.insert(code, icd10);
        }
    }

    let mut drg = MapTable::new("drg", CodeKind::Diagnosis, provenance("DRG grouping"));
    let mut by_effect: Vec<usize> = (0..world.diagnoses.len()).collect();
    by_effect.sort_by(|&a, &b| world.diagnosis_effects[a].total_cmp(&world.diagnosis_effects[b]).then(a.cmp(&b)));
    for (rank, &d) in by_effect.iter().enumerate() {
        drg.insert(world.diagnoses[d].clone(), format!("S{:03}", rank / cfg.drg_group_size + 1));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::MAX - 1));
    let mut embed = |kind: CodeKind, codes: &[Icd9Code], effects: &[f64], what: &str| {
        let dim = EmbeddingTable::default_dimension(kind);
        let direction: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt()).collect();
        let mut table = EmbeddingTable::new(kind, dim, provenance(what));
        for (code, effect) in codes.iter().zip(effects) {
            let v: Vec<f64> = direction
                .iter()
                .map(|a| {
                    let x = a * effect * 4.0 + 0.05 * rng.sample::<f64, _>(StandardNormal);
                    (x * 1e6).round() / 1e6
                })
                .collect();
            table.insert(code.to_string(), v).expect("fresh key of the table dimension");
        }
        table
    };
    let dx = embed(CodeKind::Diagnosis, &world.diagnoses, &world.diagnosis_effects, "diagnosis embeddings");
    let px = embed(CodeKind::Procedure, &world.procedures, &world.procedure_effects, "procedure embeddings");

    Ok(CodeMapSet {
        gem: Some(gem),
        drg: Some(drg),
        elixhauser: Some(world.elixhauser),
        dx_embeddings: Some(dx),
        px_embeddings: Some(px),
    })
}

/// LoS summaries of a dataset by age group, admission type, month and year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalReport {
    pub age_group: Vec<DescriptiveRow<String>>,
    pub admission_type: Vec<DescriptiveRow<String>>,
    pub month: Vec<DescriptiveRow<String>>,
    pub year: Vec<DescriptiveRow<String>>,
}

pub fn marginal_report(dataset: &Dataset) -> Result<MarginalReport, SynthError> {
    if dataset.is_empty() {
        return Err(SynthError::EmptyDataset);
    }
    let los: Vec<f64> = dataset.records().iter().map(|r| r.los_days() as f64).collect();
    fn rows<K: Ord + Clone>(los: &[f64], keys: Vec<K>, label: impl Fn(&K) -> String) -> Vec<DescriptiveRow<String>> {
        group_descriptives(los, &keys)
            .expect("non-empty, equal lengths")
            .into_iter()
            .map(|r| DescriptiveRow {
                group: label(&r.group),
                n: r.n,
                percent: r.percent,
                median: r.median,
                std: r.std,
                q25: r.q25,
                q75: r.q75,
                min: r.min,
                max: r.max,
            })
            .collect()
    }
    let recs = dataset.records();
    Ok(MarginalReport {
        age_group: rows(&los, recs.iter().map(|r| r.age_group).collect(), |a| a.label().to_string()),
        admission_type: rows(&los, recs.iter().map(|r| r.admission_type).collect(), |t| t.as_str().to_string()),
        month: rows(&los, recs.iter().map(|r| r.admission_date.month()).collect(), |m| m.to_string()),
        year: rows(&los, recs.iter().map(|r| r.admission_date.year()).collect(), |y| y.to_string()),
    })
}

impl MarginalReport {
    pub fn sections(&self) -> [(&'static str, &[DescriptiveRow<String>]); 4] {
        [
            ("age_group", &self.age_group),
            ("admission_type", &self.admission_type),
            ("month", &self.month),
            ("year", &self.year),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,category,n,percent,median,std,q25,q75,min,max\n");
        for (name, rows) in self.sections() {
            for r in rows {
                let _ = writeln!(
                    out,
                    "{name},{},{},{:.4},{},{:.4},{},{},{},{}",
                    r.group, r.n, r.percent, r.median, r.std, r.q25, r.q75, r.min, r.max
                );
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, rows) in self.sections() {
            let _ = writeln!(out, "{name}");
            let _ = writeln!(out, "  {:<16} {:>7} {:>7} {:>7} {:>8} {:>9} {:>5} {:>5}", "", "n", "%", "median", "std", "IQR", "min", "max");
            for r in rows {
                let _ = writeln!(
                    out,
                    "  {:<16} {:>7} {:>7.2} {:>7} {:>8.2} {:>9} {:>5} {:>5}",
                    r.group,
                    r.n,
                    r.percent,
                    r.median,
                    r.std,
                    format!("{}-{}", r.q25, r.q75),
                    r.min,
                    r.max
                );
            }
            out.push('\n');
        }
        out
    }
}
