//! Experiment runner and verification driver behind the `gncopt` binary.
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod record;
pub mod run;
pub mod sweep;
pub mod train;
pub mod verify;

pub use config::{ConfigError, OptimizerName, ProblemName, RunConfig, TrainConfig, TrainOptimizer};
pub use record::{csv_string, write_csv, write_outputs, Row, RunRecord, Summary, CSV_HEADER};
pub use run::run;
pub use sweep::{parse_sweep, run_sweep, Job, JobOutcome};
pub use train::{train_mlp, write_factor_csv, FactorRow, TrainRecord};
pub use verify::{verify, VerifyOptions};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
}
