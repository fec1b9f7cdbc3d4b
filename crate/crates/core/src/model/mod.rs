//! Hospitalization records, ICD-9 codes, dataset loading and the history index.

pub mod dataset;
pub mod history;
pub mod icd9;
pub mod record;

pub use dataset::{load_dataset, write_dataset, Dataset, DateFormat, LoadError, LoadOptions, RejectReason, RejectionReport};
pub use history::{HistoryIndex, WindowStats};
pub use icd9::{CodeKind, Icd9Code, MalformedCode};
pub use record::{compute_los, AdmissionType, AgeGroup, HospitalizationRecord, NonPositiveStay};
