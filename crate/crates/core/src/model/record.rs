use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::icd9::Icd9Code;

const AGE_LABELS: [&str; 20] = [
    "0", "1-4", "5-9", "10-14", "15-19", "20-24", "25-29", "30-34", "35-39", "40-44", "45-49",
    "50-54", "55-59", "60-64", "65-69", "70-74", "75-79", "80-84", "85-89", "90+",
];

/// Five-year age band; index 0 is newborns and 19 is `90+`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgeGroup(u8);

impl AgeGroup {
    pub const COUNT: usize = 20;

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(AgeGroup(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> &'static str {
        AGE_LABELS[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = AgeGroup> {
        (0..Self::COUNT as u8).map(AgeGroup)
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AgeGroup {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        AGE_LABELS
            .iter()
            .position(|l| *l == s)
            .map(|i| AgeGroup(i as u8))
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdmissionType {
    Surgical,
    Medical,
    Ordinary,
}

impl AdmissionType {
    pub const ALL: [AdmissionType; 3] =
        [AdmissionType::Surgical, AdmissionType::Medical, AdmissionType::Ordinary];

    pub fn as_str(self) -> &'static str {
        match self {
            AdmissionType::Surgical => "surgical",
            AdmissionType::Medical => "medical",
            AdmissionType::Ordinary => "ordinary",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AdmissionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdmissionType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "surgical" => Ok(AdmissionType::Surgical),
            "medical" => Ok(AdmissionType::Medical),
            "ordinary" => Ok(AdmissionType::Ordinary),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("discharge {discharge} is not after admission {admission}")]
pub struct NonPositiveStay {
    pub admission: NaiveDate,
    pub discharge: NaiveDate,
}

/// Calendar days between admission and discharge.
pub fn compute_los(admission: NaiveDate, discharge: NaiveDate) -> Result<u32, NonPositiveStay> {
    let days = (discharge - admission).num_days();
    if days < 1 {
        return Err(NonPositiveStay { admission, discharge });
    }
    Ok(days as u32)
}

/// One inpatient admission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HospitalizationRecord {
    pub patient_id: String,
    pub age_group: AgeGroup,
    pub diagnosis: Icd9Code,
    pub procedure: Option<Icd9Code>,
    pub facility: String,
    pub department: String,
    pub admission_type: AdmissionType,
    pub admission_date: NaiveDate,
    pub discharge_date: NaiveDate,
    los_days: u32,
}

impl HospitalizationRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        patient_id: impl Into<String>,
        age_group: AgeGroup,
        diagnosis: Icd9Code,
        procedure: Option<Icd9Code>,
        facility: impl Into<String>,
        department: impl Into<String>,
        admission_type: AdmissionType,
        admission_date: NaiveDate,
        discharge_date: NaiveDate,
    ) -> Result<Self, NonPositiveStay> {
        let los_days = compute_los(admission_date, discharge_date)?;
        Ok(Self {
            patient_id: patient_id.into(),
            age_group,
            diagnosis,
            procedure,
            facility: facility.into(),
            department: department.into(),
            admission_type,
            admission_date,
            discharge_date,
            los_days,
        })
    }

    pub fn los_days(&self) -> u32 {
        self.los_days
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn los_examples() {
        assert_eq!(compute_los(d(2021, 7, 22), d(2021, 7, 25)), Ok(3));
        assert!(compute_los(d(2021, 7, 22), d(2021, 7, 22)).is_err());
        assert!(compute_los(d(2021, 7, 22), d(2021, 7, 21)).is_err());
    }

    #[test]
    fn los_across_leap_day() {
        // Oracle: walk the calendar one day at a time.
        let (start, end) = (d(2020, 2, 28), d(2020, 3, 1));
        let mut steps = 0;
        let mut cur = start;
        while cur < end {
            cur = cur.succ_opt().unwrap();
            steps += 1;
        }
        assert_eq!(steps, 2);
        assert_eq!(compute_los(start, end), Ok(steps));
    }

    #[test]
    fn age_groups_are_ordered() {
        let labels: Vec<_> = AgeGroup::all().map(|g| g.label()).collect();
        assert_eq!(labels.len(), 20);
        assert_eq!(labels[0], "0");
        assert_eq!(labels[1], "1-4");
        assert_eq!(labels[19], "90+");
        for (i, l) in labels.iter().enumerate() {
            assert_eq!(l.parse::<AgeGroup>().unwrap().index(), i);
        }
        assert!("91".parse::<AgeGroup>().is_err());
    }

    #[test]
    fn admission_types_parse() {
        assert_eq!("Surgical".parse(), Ok(AdmissionType::Surgical));
        assert_eq!(" medical ".parse(), Ok(AdmissionType::Medical));
        assert!("day".parse::<AdmissionType>().is_err());
    }
}
