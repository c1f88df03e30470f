//! Experiment harness for `misalign-core`: configuration files, text formats
//! for graphs and checkpoints, a threaded sweep runner, best-fixed selection,
//! and the CSV reports behind the summary panels.

pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod selection;
pub mod sweep;

pub use config::{ExperimentConfig, SweepGrid};
pub use error::{HarnessError, Result};
pub use sweep::{run_controllers, run_jobs, run_sweep, Job, SweepRow, SweepRun, SweepTable};
