use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::icd9::{CodeKind, Icd9Code};
use super::record::{AdmissionType, AgeGroup, HospitalizationRecord};

/// Column order of the record CSV.
pub const COLUMNS: [&str; 9] = [
    "patient_id",
    "age_group",
    "diagnosis_code",
    "procedure_code",
    "facility",
    "department",
    "admission_type",
    "admission_date",
    "discharge_date",
];

/// Admissions sorted by `(admission_date, patient_id)`, ties kept in input order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    records: Vec<HospitalizationRecord>,
    coverage: Option<(NaiveDate, NaiveDate)>,
    unique_patients: usize,
}

impl Dataset {
    pub fn from_records(mut records: Vec<HospitalizationRecord>) -> Self {
        // `sort_by` is stable, so equal keys keep their input order.
        records.sort_by(|a, b| {
            a.admission_date.cmp(&b.admission_date).then_with(|| a.patient_id.cmp(&b.patient_id))
        });
        let coverage = match (records.first(), records.last()) {
            (Some(f), Some(l)) => Some((f.admission_date, l.admission_date)),
            _ => None,
        };
        let unique_patients =
            records.iter().map(|r| r.patient_id.as_str()).collect::<HashSet<_>>().len();
        Self { records, coverage, unique_patients }
    }

    pub fn records(&self) -> &[HospitalizationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First and last admission date.
    pub fn coverage(&self) -> Option<(NaiveDate, NaiveDate)> {
        self.coverage
    }

    pub fn unique_patients(&self) -> usize {
        self.unique_patients
    }

    /// Keeps records matching `keep`; order is preserved.
    pub fn filtered(&self, keep: impl Fn(&HospitalizationRecord) -> bool) -> Dataset {
        Dataset::from_records(self.records.iter().filter(|r| keep(r)).cloned().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DateFormat {
    /// `YYYY-MM-DD`
    #[default]
    Iso,
    /// `DD/MM/YYYY`
    DayMonthYear,
}

impl DateFormat {
    fn pattern(self) -> &'static str {
        match self {
            DateFormat::Iso => "%Y-%m-%d",
            DateFormat::DayMonthYear => "%d/%m/%Y",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub date_format: DateFormat,
    /// Abort on the first rejected row instead of reporting it.
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    WrongColumnCount,
    MissingField,
    MalformedCode,
    BadAgeGroup,
    BadAdmissionType,
    BadDate,
    NonPositiveStay,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line_no: u64,
    pub reason: RejectReason,
    pub raw_row: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub rows: Vec<Rejection>,
}

impl RejectionReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["line_no", "reason", "raw_row"])?;
        for r in &self.rows {
            w.write_record([r.line_no.to_string(), r.reason.to_string(), r.raw_row.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("source unreadable: {0}")]
    SourceUnreadable(#[from] csv::Error),
    #[error("header must be exactly `{}`, found `{found}`", COLUMNS.join(","))]
    BadHeader { found: String },
    #[error("strict load aborted: {count} rejected row(s), first at line {first_line} ({first_reason})")]
    Strict { count: usize, first_line: u64, first_reason: RejectReason },
}

/// Reads the nine-column record CSV. Lines starting with `#` are ignored.
pub fn load_dataset<R: Read>(
    source: R,
    options: LoadOptions,
) -> Result<(Dataset, RejectionReport), LoadError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    if header.len() != COLUMNS.len() || header.iter().zip(COLUMNS).any(|(h, c)| h != c) {
        return Err(LoadError::BadHeader { found: header.iter().collect::<Vec<_>>().join(",") });
    }

    let mut records = Vec::new();
    let mut report = RejectionReport::default();
    for row in rdr.records() {
        let row = row?;
        let line_no = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, options.date_format) {
            Ok(rec) => records.push(rec),
            Err(reason) => report.rows.push(Rejection {
                line_no,
                reason,
                raw_row: row.iter().collect::<Vec<_>>().join(","),
            }),
        }
    }
    if options.strict {
        if let Some(first) = report.rows.first() {
            return Err(LoadError::Strict {
                count: report.len(),
                first_line: first.line_no,
                first_reason: first.reason,
            });
        }
    }
    Ok((Dataset::from_records(records), report))
}

fn parse_row(row: &csv::StringRecord, fmt: DateFormat) -> Result<HospitalizationRecord, RejectReason> {
    if row.len() != COLUMNS.len() {
        return Err(RejectReason::WrongColumnCount);
    }
    let field = |i: usize| -> Result<&str, RejectReason> {
        let v = &row[i];
        if v.is_empty() {
            Err(RejectReason::MissingField)
        } else {
            Ok(v)
        }
    };
    let patient_id = field(0)?;
    let age_group: AgeGroup = field(1)?.parse().map_err(|_| RejectReason::BadAgeGroup)?;
    let diagnosis = Icd9Code::parse(field(2)?, CodeKind::Diagnosis)
        .map_err(|_| RejectReason::MalformedCode)?;
    let procedure = match &row[3] {
        "" => None,
        text => Some(
            Icd9Code::parse(text, CodeKind::Procedure).map_err(|_| RejectReason::MalformedCode)?,
        ),
    };
    let facility = field(4)?;
    let department = field(5)?;
    let admission_type: AdmissionType =
        field(6)?.parse().map_err(|_| RejectReason::BadAdmissionType)?;
    let date = |s: &str| NaiveDate::parse_from_str(s, fmt.pattern()).map_err(|_| RejectReason::BadDate);
    let admission = date(field(7)?)?;
    let discharge = date(field(8)?)?;
    HospitalizationRecord::new(
        patient_id,
        age_group,
        diagnosis,
        procedure,
        facility,
        department,
        admission_type,
        admission,
        discharge,
    )
    .map_err(|_| RejectReason::NonPositiveStay)
}

/// Writes records in the CSV layout accepted by [`load_dataset`] with ISO dates.
pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in dataset.records() {
        let procedure = r.procedure.as_ref().map(|p| p.to_string()).unwrap_or_default();
        w.write_record([
            r.patient_id.as_str(),
            r.age_group.label(),
            &r.diagnosis.to_string(),
            &procedure,
            &r.facility,
            &r.department,
            r.admission_type.as_str(),
            &r.admission_date.format("%Y-%m-%d").to_string(),
            &r.discharge_date.format("%Y-%m-%d").to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "patient_id,age_group,diagnosis_code,procedure_code,facility,department,admission_type,admission_date,discharge_date\n";

    fn load(body: &str, options: LoadOptions) -> Result<(Dataset, RejectionReport), LoadError> {
        load_dataset(format!("{HEADER}{body}").as_bytes(), options)
    }

    #[test]
    fn loads_well_formed_rows() {
        let body = "p2,70-74,724.2,88.93,H1,ORTHO,medical,2021-07-22,2021-07-25\n\
                    p1,0,V30.0,,H1,NEO,ordinary,2021-07-20,2021-07-23\n\
                    p3,90+,428.0,,H2,CARD,surgical,2021-07-22,2021-07-23\n";
        let (ds, report) = load(body, LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(report.is_empty());
        assert_eq!(ds.records()[0].patient_id, "p1");
        assert_eq!(ds.records()[1].patient_id, "p2");
        assert_eq!(ds.records()[1].los_days(), 3);
        assert!(ds.records()[0].procedure.is_none());
        let (lo, hi) = ds.coverage().unwrap();
        assert_eq!(lo.to_string(), "2021-07-20");
        assert_eq!(hi.to_string(), "2021-07-22");
        assert_eq!(ds.unique_patients(), 3);
    }

    #[test]
    fn rejects_discharge_before_admission() {
        let body = "p1,0,724.2,,H1,D,medical,2021-07-25,2021-07-22\n";
        let (ds, report) = load(body, LoadOptions::default()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.rows[0].reason, RejectReason::NonPositiveStay);
        assert_eq!(report.rows[0].line_no, 2);
    }

    #[test]
    fn reports_each_reason() {
        let body = "p1,0,7A4.2,,H1,D,medical,2021-07-22,2021-07-25\n\
                    p1,200,724.2,,H1,D,medical,2021-07-22,2021-07-25\n\
                    p1,0,724.2,,H1,D,daycare,2021-07-22,2021-07-25\n\
                    p1,0,724.2,,H1,D,medical,22/07/2021,2021-07-25\n\
                    ,0,724.2,,H1,D,medical,2021-07-22,2021-07-25\n\
                    p1,0,724.2,,H1\n";
        let (_, report) = load(body, LoadOptions::default()).unwrap();
        let reasons: Vec<_> = report.rows.iter().map(|r| r.reason).collect();
        assert_eq!(
            reasons,
            vec![
                RejectReason::MalformedCode,
                RejectReason::BadAgeGroup,
                RejectReason::BadAdmissionType,
                RejectReason::BadDate,
                RejectReason::MissingField,
                RejectReason::WrongColumnCount,
            ]
        );
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("line_no,reason,raw_row\n2,MalformedCode,"));
    }

    #[test]
    fn strict_mode_aborts() {
        let body = "p1,0,724.2,,H1,D,medical,2021-07-25,2021-07-22\n";
        let err = load(body, LoadOptions { strict: true, ..Default::default() }).unwrap_err();
        assert!(matches!(err, LoadError::Strict { count: 1, first_line: 2, .. }));
    }

    #[test]
    fn day_month_year_dates() {
        let body = "p1,0,724.2,,H1,D,medical,22/07/2021,25/07/2021\n";
        let opts = LoadOptions { date_format: DateFormat::DayMonthYear, strict: true };
        let (ds, _) = load(body, opts).unwrap();
        assert_eq!(ds.records()[0].los_days(), 3);
    }

    #[test]
    fn bad_header_is_an_error() {
        let err = load_dataset("a,b\n1,2\n".as_bytes(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, LoadError::BadHeader { .. }));
    }

    #[test]
    fn same_day_ties_keep_input_order() {
        let body = "p1,0,724.2,,H1,D,medical,2021-07-22,2021-07-25\n\
                    p1,0,428.0,,H1,D,medical,2021-07-22,2021-07-23\n";
        let (ds, _) = load(body, LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records()[0].diagnosis.to_string(), "724.2");
        assert_eq!(ds.records()[1].diagnosis.to_string(), "428.0");
    }

    #[test]
    fn comment_lines_are_skipped() {
        let text = format!("# tool: test\n{HEADER}p1,0,724.2,,H1,D,medical,2021-07-22,2021-07-25\n");
        let (ds, _) = load_dataset(text.as_bytes(), LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 1);
    }
}
