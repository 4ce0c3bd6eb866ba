//! Scenario loading, the end-to-end simulation loop, metrics, traces and
//! reports.

use thiserror::Error;

pub mod generators;
mod metrics;
mod report;
mod scenario;
mod sim;
mod trace;

pub use metrics::{metrics_from_records, pair_key, ChannelStats, MetricsAccumulator, RunMetrics, Stats, NEAR_MISS_GAP};
pub use report::{false_positive_rate, load_trace, report, FalsePositives, Report, ReportFormat, FP_SEPARATION};
pub use scenario::{
    AgentSpec, InitialState, Periods, Scenario, SensorOverrides, Thresholds, TimelineEntry, Toggles, SCHEMA_VERSION,
};
pub use sim::{run, RunOptions, RunOutput, HANDLING_MS, SPOOF_AHEAD, SPOOF_START_MS};
pub use trace::{AgentInfo, MsgKind, TraceRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario schema error at line {line}, column {column} ({path}): {message}")]
    Schema {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
    #[error("invalid scenario field {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("paired runs use different seeds ({0} vs {1})")]
    SeedMismatch(u64, u64),
    #[error("paired runs must be one with advisories and one without")]
    NotPaired,
    #[error("{file}:{line}: corrupt trace record: {message}")]
    CorruptTrace { file: String, line: usize, message: String },
    #[error("no traces found under {0}")]
    NoTraces(String),
    #[error("runtime fault: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// Configuration problems, as opposed to faults during a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Io { .. } | HarnessError::Schema { .. } | HarnessError::Invalid { .. }
        )
    }
}
