use std::fmt;

use serde::{Deserialize, Serialize};

/// Simulation time in integer milliseconds since the simulation epoch.
pub type Millis = u64;

pub const MS_PER_SEC: Millis = 1_000;
pub const MS_PER_MIN: Millis = 60 * MS_PER_SEC;
pub const MS_PER_HOUR: Millis = 60 * MS_PER_MIN;
pub const MS_PER_DAY: Millis = 24 * MS_PER_HOUR;

/// Converts (possibly fractional) seconds to milliseconds, rounding to nearest.
pub fn secs(s: f64) -> Millis {
    (s * MS_PER_SEC as f64).round().max(0.0) as Millis
}

pub fn hours(h: f64) -> Millis {
    (h * MS_PER_HOUR as f64).round().max(0.0) as Millis
}

pub fn to_hours(ms: Millis) -> f64 {
    ms as f64 / MS_PER_HOUR as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u32);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "job-{}", self.0)
    }
}

/// Identifier of a failure-signature rule in the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleId(pub String);

impl RuleId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RuleId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}
