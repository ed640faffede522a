//! Reproducible trajectory ensembles: configuration, execution, statistics
//! and on-disk output.

pub mod config;
pub mod persist;
pub mod run;
pub mod stats;

pub use config::{
    apply_override, ChainParams, Experiment, ExperimentConfig, Mode, OutputSpec, StateSpec,
    SystemSpec,
};
pub use run::{run_ensemble, Ensemble, EnsembleRun, ReplayRecord, RunMeta};
pub use stats::{
    martingale_check, wilson_interval, EnsembleStats, TrajectorySummary, FORMAT_VERSION,
};
