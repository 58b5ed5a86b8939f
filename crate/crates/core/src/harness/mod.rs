//! Experiment configuration and the run / sweep / gradcheck / audit entry
//! points behind the `lambc` binary.

mod config;
mod run;

pub use config::{
    parse_value, resolve_field, BatchSize, DataConfig, DataSource, DebugConfig, ExperimentConfig, OutputConfig,
    SweepAxis, SweepConfig, SweepPoint, TrainConfig, KNOWN_KEYS,
};
pub use run::{
    audit, gradcheck, prepare, relative_error, run, sweep, train, write_config, AuditReport, GradcheckReport,
    GradcheckRow, SweepOutcome, AUDIT_TOLERANCE, GRADCHECK_MAX_PARAMS, GRADCHECK_TOLERANCE,
};
