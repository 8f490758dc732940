//! Experiment harness around `smlab-core`: configuration files, field dumps,
//! versioned reports, tabular exports and the mode runner behind the `smlab`
//! binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod fields;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Mode};
pub use run::{run, ExitStatus, RunOutcome};
