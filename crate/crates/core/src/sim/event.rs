use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{JobId, Millis, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    FaultScheduled,
    FaultArrived,
    FaultDormant,
    FaultReactivated,
    FaultCleared,
    NodeUnhealthy,
    NodeTransition,
    NodeRebooted,
    JobSubmitted,
    JobLoading,
    JobTraining,
    JobDegraded,
    JobHung,
    JobInterrupted,
    JobRecovering,
    JobCompleted,
    UserError,
    Detection,
    Diagnosis,
    Validation,
    Ticket,
    Playbook,
    RuleLearned,
    PolicyChange,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        f.write_str(&s)
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t_ms: Millis,
    pub kind: EventKind,
    pub node_id: Option<NodeId>,
    pub job_id: Option<JobId>,
    pub detail: String,
}

impl SimEvent {
    pub fn new(t_ms: Millis, kind: EventKind) -> Self {
        Self { t_ms, kind, node_id: None, job_id: None, detail: String::new() }
    }

    pub fn node(mut self, n: NodeId) -> Self {
        self.node_id = Some(n);
        self
    }

    pub fn job(mut self, j: JobId) -> Self {
        self.job_id = Some(j);
        self
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}
