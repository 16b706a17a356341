//! Experiment runner for `legtrunc`: table reproduction, rate studies,
//! hyperbolic-cross cardinality checks and surface export.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
mod error;
pub mod run;
pub mod table;

pub use config::{ExperimentConfig, Plan, RowPlan, OUTPUT_ENV};
pub use error::{CliError, Result};
pub use run::{card_verdict, cross_card, emit_surface, run_experiment, run_rate_study, CrossCardReport, RunOutput};
pub use table::{ResultsRow, ResultsTable, TrialRow};
