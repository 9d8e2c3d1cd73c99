//! Declarative telemetry collection, ingestion and an in-memory queryable store.

mod aggregate;
mod collector;
mod export;
mod sample;
mod snapshot;
mod store;
mod view;

pub use aggregate::{aggregate, AggOp};
pub use collector::{load_collectors, CollectorSpec, Source, DEFAULT_COLLECTORS};
pub use export::{read_snapshot_csv, write_series_csv, write_snapshot_csv};
pub use sample::{Labels, SampleValue, TelemetrySample};
pub use snapshot::Snapshot;
pub use store::{GroupBy, GroupKey, IngestReport, SeriesGroup, SeriesQuery, StoreConfig, TelemetryStore};
pub use view::{TelemetryView, ViewError};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("malformed collector document: {0}")]
    Parse(String),
    #[error("invalid collector configuration: {0}")]
    Validation(String),
    #[error("no active collector for `{0}`")]
    UnknownCollector(String),
    #[error("non-finite value for `{metric}` on {node}")]
    NonFiniteValue { metric: String, node: crate::NodeId },
    #[error("sample kind does not match collector for `{0}`")]
    WrongKind(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("invalid time range [{0}, {1})")]
    InvalidRange(u64, u64),
    #[error("csv: {0}")]
    Csv(String),
}
