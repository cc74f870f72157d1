//! Experiment runner: configuration, the correlation sweep, the
//! active-learning loop, bootstrap summaries and result emission.

mod al;
mod config;
mod correlation;
mod output;
mod stats;

pub use al::{run_al, run_session, AlRow, RunRecord, Scenario, Snapshot, StepSummary};
pub use config::{
    ContinuousConfig, ContinuousSource, CorrelationConfig, ExperimentConfig, ExperimentKind, OracleSettings,
    TabularSource,
};
pub use correlation::{run_correlation, CorrelationResult, CorrelationRow, CorrelationSet, Exclusion};
pub use output::{write_al_csv, write_al_outputs, write_correlation_csv, write_correlation_outputs};
pub use stats::{bootstrap_ci, pearson, BootstrapSummary, Correlation, DEFAULT_RESAMPLES};
