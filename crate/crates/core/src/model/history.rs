//! Time-ordered lookups over past admissions.
//!
//! Every query takes a reference date `t` and only ever sees stays admitted
//! strictly before `t`. Same-day admissions are invisible to each other.

use std::collections::HashMap;
use std::hash::Hash;

use chrono::NaiveDate;

use super::dataset::Dataset;
use super::icd9::Icd9Code;
use super::record::HospitalizationRecord;

/// Day number used for all date arithmetic inside the index.
pub fn day_number(date: NaiveDate) -> i64 {
    date.signed_duration_since(NaiveDate::MIN).num_days()
}

/// Count and LoS total of the stays falling in a window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowStats {
    pub count: usize,
    pub los_sum: f64,
}

impl WindowStats {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.los_sum / self.count as f64)
    }
}

/// Stays of one key, ascending by admission day, with prefix sums of LoS.
#[derive(Debug, Clone, Default)]
pub struct Timeline {
    days: Vec<i64>,
    los: Vec<u32>,
    // prefix[i] = sum of los[..i]
    prefix: Vec<u64>,
}

impl Timeline {
    fn push(&mut self, day: i64, los: u32) {
        debug_assert!(self.days.last().is_none_or(|&d| d <= day));
        if self.prefix.is_empty() {
            self.prefix.push(0);
        }
        self.days.push(day);
        self.los.push(los);
        let last = *self.prefix.last().unwrap();
        self.prefix.push(last + los as u64);
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Stays admitted in `[from, before)` as `(day, los)` pairs.
    pub fn entries(&self, from: i64, before: i64) -> impl Iterator<Item = (i64, u32)> + '_ {
        let (lo, hi) = self.bounds(from, before);
        self.days[lo..hi].iter().copied().zip(self.los[lo..hi].iter().copied())
    }

    /// Count and LoS sum of stays admitted in `[from, before)`.
    pub fn window(&self, from: i64, before: i64) -> WindowStats {
        let (lo, hi) = self.bounds(from, before);
        if lo >= hi {
            return WindowStats::default();
        }
        WindowStats { count: hi - lo, los_sum: (self.prefix[hi] - self.prefix[lo]) as f64 }
    }

    fn bounds(&self, from: i64, before: i64) -> (usize, usize) {
        let lo = self.days.partition_point(|&d| d < from);
        let hi = self.days.partition_point(|&d| d < before);
        (lo, hi.max(lo))
    }
}

/// Timelines grouped by an arbitrary key derived from each record.
#[derive(Debug, Clone)]
pub struct KeyedTimelines<K> {
    map: HashMap<K, Timeline>,
}

impl<K: Hash + Eq> KeyedTimelines<K> {
    /// `records` must be sorted by admission date.
    pub fn build<'a>(
        records: impl IntoIterator<Item = &'a HospitalizationRecord>,
        mut key: impl FnMut(&HospitalizationRecord) -> K,
    ) -> Self {
        let mut map: HashMap<K, Timeline> = HashMap::new();
        for r in records {
            map.entry(key(r)).or_default().push(day_number(r.admission_date), r.los_days());
        }
        Self { map }
    }

    pub fn get(&self, key: &K) -> Option<&Timeline> {
        self.map.get(key)
    }

    pub fn window(&self, key: &K, from: i64, before: i64) -> WindowStats {
        self.map.get(key).map(|t| t.window(from, before)).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub type UnitKey = (String, String, Icd9Code);
pub type FacilityDiagnosisKey = (String, Icd9Code);

/// Immutable indexes for strictly-past queries, built once per dataset.
#[derive(Debug, Clone)]
pub struct HistoryIndex {
    patients: HashMap<String, Vec<(i64, Icd9Code)>>,
    unit_stays: KeyedTimelines<UnitKey>,
    facility_diagnosis_stays: KeyedTimelines<FacilityDiagnosisKey>,
    facility_stays: KeyedTimelines<String>,
    coverage_start: Option<NaiveDate>,
    frozen_at: Option<NaiveDate>,
}

impl HistoryIndex {
    pub fn build(dataset: &Dataset) -> Self {
        let records = dataset.records();
        let mut patients: HashMap<String, Vec<(i64, Icd9Code)>> = HashMap::new();
        for r in records {
            patients
                .entry(r.patient_id.clone())
                .or_default()
                .push((day_number(r.admission_date), r.diagnosis.clone()));
        }
        Self {
            patients,
            unit_stays: KeyedTimelines::build(records, |r| {
                (r.facility.clone(), r.department.clone(), r.diagnosis.clone())
            }),
            facility_diagnosis_stays: KeyedTimelines::build(records, |r| {
                (r.facility.clone(), r.diagnosis.clone())
            }),
            facility_stays: KeyedTimelines::build(records, |r| r.facility.clone()),
            coverage_start: dataset.coverage().map(|c| c.0),
            frozen_at: dataset.coverage().map(|c| c.1),
        }
    }

    pub fn coverage_start(&self) -> Option<NaiveDate> {
        self.coverage_start
    }

    /// Last admission date the index has seen.
    pub fn frozen_at(&self) -> Option<NaiveDate> {
        self.frozen_at
    }

    /// Unique diagnoses of the patient's stays admitted before `t`, sorted.
    pub fn prior_diagnoses(&self, patient_id: &str, t: NaiveDate) -> Vec<Icd9Code> {
        let t = day_number(t);
        let Some(stays) = self.patients.get(patient_id) else {
            return Vec::new();
        };
        let end = stays.partition_point(|(d, _)| *d < t);
        let mut codes: Vec<Icd9Code> = stays[..end].iter().map(|(_, c)| c.clone()).collect();
        codes.sort();
        codes.dedup();
        codes
    }

    /// Stays at the same facility, department and diagnosis admitted in
    /// `[t - window_days, t)`.
    pub fn unit_window(
        &self,
        facility: &str,
        department: &str,
        diagnosis: &Icd9Code,
        t: NaiveDate,
        window_days: u32,
    ) -> WindowStats {
        let key = (facility.to_string(), department.to_string(), diagnosis.clone());
        let (from, before) = window_bounds(t, window_days);
        self.unit_stays.window(&key, from, before)
    }

    /// Stays at the facility with the given diagnosis admitted in `[t - window_days, t)`.
    pub fn facility_diagnosis_window(
        &self,
        facility: &str,
        diagnosis: &Icd9Code,
        t: NaiveDate,
        window_days: u32,
    ) -> WindowStats {
        let key = (facility.to_string(), diagnosis.clone());
        let (from, before) = window_bounds(t, window_days);
        self.facility_diagnosis_stays.window(&key, from, before)
    }

    /// All stays at the facility admitted in `[t - window_days, t)`.
    pub fn facility_window(&self, facility: &str, t: NaiveDate, window_days: u32) -> WindowStats {
        let (from, before) = window_bounds(t, window_days);
        self.facility_stays.window(&facility.to_string(), from, before)
    }

    /// Raw `(day, los)` entries of a unit before `t`, for inspection and audits.
    pub fn unit_entries(
        &self,
        facility: &str,
        department: &str,
        diagnosis: &Icd9Code,
        t: NaiveDate,
    ) -> Vec<(i64, u32)> {
        let key = (facility.to_string(), department.to_string(), diagnosis.clone());
        self.unit_stays
            .get(&key)
            .map(|tl| tl.entries(i64::MIN, day_number(t)).collect())
            .unwrap_or_default()
    }
}

/// `[t - window_days, t)` as day numbers.
pub fn window_bounds(t: NaiveDate, window_days: u32) -> (i64, i64) {
    let t = day_number(t);
    (t - window_days as i64, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::icd9::CodeKind;
    use crate::model::record::{AdmissionType, AgeGroup};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(days_from_2020: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(days_from_2020)
    }

    fn rec(patient: &str, dx: &str, fac: &str, dept: &str, adm: i64, los: i64) -> HospitalizationRecord {
        HospitalizationRecord::new(
            patient,
            AgeGroup::from_index(10).unwrap(),
            Icd9Code::parse(dx, CodeKind::Diagnosis).unwrap(),
            None,
            fac,
            dept,
            AdmissionType::Ordinary,
            d(adm),
            d(adm + los),
        )
        .unwrap()
    }

    #[test]
    fn prior_diagnoses_are_strictly_past() {
        let ds = Dataset::from_records(vec![
            rec("a", "428.0", "H", "D", 0, 2),
            rec("a", "401.9", "H", "D", 10, 2),
            rec("a", "250.00", "H", "D", 20, 2),
        ]);
        let idx = HistoryIndex::build(&ds);
        let prior = idx.prior_diagnoses("a", d(20));
        assert_eq!(prior.len(), 2);
        assert!(idx.prior_diagnoses("a", d(0)).is_empty());
        assert!(idx.prior_diagnoses("a", d(-5)).is_empty());
        assert!(idx.prior_diagnoses("zzz", d(50)).is_empty());
    }

    #[test]
    fn empty_dataset_gives_empty_index() {
        let idx = HistoryIndex::build(&Dataset::default());
        assert!(idx.coverage_start().is_none());
        assert_eq!(idx.facility_window("H", d(10), 90), WindowStats::default());
    }

    #[test]
    fn same_day_stays_are_not_visible() {
        let ds = Dataset::from_records(vec![
            rec("a", "428.0", "H", "D", 5, 2),
            rec("b", "428.0", "H", "D", 5, 4),
        ]);
        let idx = HistoryIndex::build(&ds);
        let dx = Icd9Code::parse("428.0", CodeKind::Diagnosis).unwrap();
        assert_eq!(idx.unit_window("H", "D", &dx, d(5), 90).count, 0);
        let w = idx.unit_window("H", "D", &dx, d(6), 90);
        assert_eq!(w.count, 2);
        assert_eq!(w.mean(), Some(3.0));
    }

    #[test]
    fn window_excludes_stays_older_than_window() {
        let ds = Dataset::from_records(vec![
            rec("a", "428.0", "H", "D", 0, 2),
            rec("b", "428.0", "H", "D", 10, 4),
        ]);
        let idx = HistoryIndex::build(&ds);
        // [100 - 90, 100) = [10, 100): only the second stay.
        assert_eq!(idx.facility_window("H", d(100), 90).count, 1);
        assert_eq!(idx.facility_window("H", d(101), 90).count, 0);
    }

    #[test]
    fn index_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dxs = ["428.0", "401.9", "724.2", "250.00"];
        let facs = ["H1", "H2", "H3"];
        let depts = ["A", "B"];
        let records: Vec<_> = (0..2000)
            .map(|i| {
                rec(
                    &format!("p{}", rng.gen_range(0..300)),
                    dxs[rng.gen_range(0..dxs.len())],
                    facs[rng.gen_range(0..facs.len())],
                    depts[rng.gen_range(0..depts.len())],
                    rng.gen_range(0..700),
                    rng.gen_range(1..30) + (i % 2),
                )
            })
            .collect();
        let ds = Dataset::from_records(records);
        let idx = HistoryIndex::build(&ds);

        for _ in 0..1000 {
            let t = d(rng.gen_range(-10..760));
            let window = rng.gen_range(1..200u32);
            let fac = facs[rng.gen_range(0..facs.len())];
            let dept = depts[rng.gen_range(0..depts.len())];
            let dx = Icd9Code::parse(dxs[rng.gen_range(0..dxs.len())], CodeKind::Diagnosis).unwrap();
            let patient = format!("p{}", rng.gen_range(0..300));

            let in_window = |r: &&HospitalizationRecord| {
                r.admission_date < t && r.admission_date >= t - chrono::Duration::days(window as i64)
            };
            let scan = |pred: &dyn Fn(&HospitalizationRecord) -> bool| {
                let hits: Vec<_> = ds.records().iter().filter(in_window).filter(|r| pred(r)).collect();
                (hits.len(), hits.iter().map(|r| r.los_days() as f64).sum::<f64>())
            };

            let w = idx.unit_window(fac, dept, &dx, t, window);
            let s = scan(&|r| r.facility == fac && r.department == dept && r.diagnosis == dx);
            assert_eq!((w.count, w.los_sum), s);

            let w = idx.facility_diagnosis_window(fac, &dx, t, window);
            let s = scan(&|r| r.facility == fac && r.diagnosis == dx);
            assert_eq!((w.count, w.los_sum), s);

            let w = idx.facility_window(fac, t, window);
            let s = scan(&|r| r.facility == fac);
            assert_eq!((w.count, w.los_sum), s);

            let mut expect: Vec<Icd9Code> = ds
                .records()
                .iter()
                .filter(|r| r.patient_id == patient && r.admission_date < t)
                .map(|r| r.diagnosis.clone())
                .collect();
            expect.sort();
            expect.dedup();
            assert_eq!(idx.prior_diagnoses(&patient, t), expect);

            for (day, _) in idx.unit_entries(fac, dept, &dx, t) {
                assert!(day < day_number(t));
            }
        }
    }
}
