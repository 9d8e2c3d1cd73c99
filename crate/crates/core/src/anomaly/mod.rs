//! Job-level anomaly triggers, per-node spatial/temporal scoring and the
//! iterative isolation loop that narrows an anomaly down to one node.

mod baseline;
mod diagnose;
mod isolation;
mod score;

pub use baseline::{detect_job_anomaly, job_kpi_window, JobAnomaly, KpiBaseline, KpiStats, DEFAULT_Z};
pub use diagnose::{
    default_groups, diagnose, DiagnosisConfig, DiagnosisContext, DiagnosisSession, DiagnosisStatus, DiagnosisStrategy,
    Iteration, LadderStrategy, MetricGroup, Verdict,
};
pub use isolation::{confirm_by_isolation, IsolationConfig};
pub use score::{dominant, spatial_scores, temporal_score, AnomalyScore};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnomalyError {
    #[error("baseline has {have} samples, needs {need}")]
    UnusableBaseline { have: usize, need: usize },
    #[error("KPI window is empty")]
    EmptyWindow,
    #[error("spatial scoring needs at least 3 nodes, got {0}")]
    TooFewPeers(usize),
    #[error("temporal baseline is empty")]
    EmptyBaseline,
    #[error("no spare capacity for isolation: {0}")]
    NoSpareCapacity(String),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}
