use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{JobId, Millis, NodeId};

/// Static key/value labels, shared between samples from the same collector.
pub type Labels = Arc<BTreeMap<String, String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleValue {
    Number(f64),
    Line(String),
}

impl SampleValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            SampleValue::Number(v) => Some(*v),
            SampleValue::Line(_) => None,
        }
    }

    pub fn as_line(&self) -> Option<&str> {
        match self {
            SampleValue::Line(l) => Some(l),
            SampleValue::Number(_) => None,
        }
    }
}

/// One timestamped observation: a numeric metric value or a log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    /// Metric name, or log channel (collector name) for log lines.
    pub metric: Arc<str>,
    pub t: Millis,
    pub node_id: NodeId,
    pub job_id: Option<JobId>,
    pub value: SampleValue,
    #[serde(default)]
    pub labels: Labels,
}

impl TelemetrySample {
    pub fn number(metric: &str, t: Millis, node_id: NodeId, job_id: Option<JobId>, v: f64) -> Self {
        Self { metric: Arc::from(metric), t, node_id, job_id, value: SampleValue::Number(v), labels: Labels::default() }
    }

    pub fn line(channel: &str, t: Millis, node_id: NodeId, job_id: Option<JobId>, line: impl Into<String>) -> Self {
        Self {
            metric: Arc::from(channel),
            t,
            node_id,
            job_id,
            value: SampleValue::Line(line.into()),
            labels: Labels::default(),
        }
    }
}
