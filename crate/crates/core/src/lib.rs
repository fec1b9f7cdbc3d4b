//! Length-of-stay analytics over hospitalization records.
//!
//! The crate covers the whole pipeline: record loading and the strictly-past
//! [`model::HistoryIndex`], external code tables, a seeded synthetic data
//! generator, leakage-safe feature engineering, rank statistics and a
//! random-intercept mixed model, from-scratch tree learners, and the
//! year-split evaluation harness.

pub mod codemaps;
pub mod eval;
pub mod features;
pub mod learn;
pub mod model;
pub mod par;
pub mod provenance;
pub mod stats;
pub mod synth;
