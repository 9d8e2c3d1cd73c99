use std::collections::BTreeSet;

use thiserror::Error;

use super::Source;
use crate::{Millis, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ViewError {
    #[error("`{0}` is a log channel, not a numeric metric")]
    NotNumeric(String),
    #[error("`{0}` is a numeric metric, not a log channel")]
    NotLog(String),
}

/// Read access to telemetry, implemented by the live store and by snapshots.
///
/// Ranges are half-open `[t0, t1)`; results are time-ascending. Unknown
/// metrics yield empty results rather than errors.
pub trait TelemetryView {
    fn numeric(&self, metric: &str, node: NodeId, t0: Millis, t1: Millis) -> Result<Vec<(Millis, f64)>, ViewError>;

    fn lines(&self, channel: &str, node: NodeId, t0: Millis, t1: Millis) -> Result<Vec<(Millis, String)>, ViewError>;

    fn source_of(&self, metric: &str) -> Option<Source>;

    /// Every metric or log channel this view knows about, with its source.
    fn schema(&self) -> Vec<(String, Source)>;

    fn nodes(&self) -> BTreeSet<NodeId>;

    fn numeric_values(&self, metric: &str, node: NodeId, t0: Millis, t1: Millis) -> Result<Vec<f64>, ViewError> {
        Ok(self.numeric(metric, node, t0, t1)?.into_iter().map(|(_, v)| v).collect())
    }
}
