//! Obstetric SARI surveillance pipeline.
//!
//! Reads SIVEP-Gripe snapshots, selects the pregnant and postpartum cohort,
//! derives the analysis variables and tabulates them.

pub mod cohort;
pub mod derive;
pub mod encoding;
pub mod epiweek;
pub mod error;
pub mod ingest;
pub mod logic;
pub mod pipeline;
pub mod schema;
pub mod synth;
pub mod tabulate;
pub mod validate;

pub use cohort::{CurrentWeek, EpiStamp, FunnelReport, GestationalStatus, SelectedCase, Stage};
pub use derive::{CohortRecord, CovidClass, Derived, DerivedVar, RecodeRule, Region, YesNo};
pub use encoding::TextEncoding;
pub use error::{Error, Result};
pub use ingest::{IngestStats, SnapshotSource};
pub use pipeline::{run_build, run_validate, BuildOutcome, Format, RunConfig, RunManifest};
pub use schema::{CodeBook, CodedField, Column, Sex, SurveillanceRecord};
